//! Minimal dense tensors with tape-based reverse-mode automatic
//! differentiation, plus the checkpoint container format.
//!
//! ```
//! use tavp_tensor::{Graph, Tensor};
//!
//! let g = Graph::new();
//! let x = g.leaf(Tensor::new([2], vec![1.0, 2.0]).unwrap());
//! let y = x.mul(&x).unwrap().sum_all().unwrap();
//! let grads = g.backward(&y).unwrap();
//! assert_eq!(grads.get(&x).unwrap().data(), &[2.0, 4.0]);
//! ```

pub mod container;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod params;
pub mod tensor;

pub use container::{Container, NamedTensor};
pub use error::{Result, TensorError};
pub use graph::{Gradients, Graph, Var};
pub use ops::conv::Conv2dGeometry;
pub use ops::elementwise::{GELU_K0, GELU_K1};
pub use params::{ParamId, ParamStore, Session};
pub use tensor::{precision, set_precision, with_precision, Precision, PrecisionGuard, Tensor};
