//! Parameterized layers. Each layer owns only `ParamId`s; values live in a
//! `ParamStore` and are bound to a graph through a `Session` at call time.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tavp_tensor::{ParamId, ParamStore, Result, Session, Tensor, Var};

pub const LN_EPS: f64 = 1e-5;
/// Additive logit for masked attention entries; `exp` underflows to exactly 0.
pub const MASKED: f64 = -1e9;

/// Registers parameters under a dotted name prefix with deterministic init.
pub struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a> Builder<'a> {
    pub fn new(store: &'a mut ParamStore, rng: &'a mut ChaCha8Rng) -> Self {
        Builder { store, rng, prefix: String::new() }
    }

    pub fn scope(&mut self, name: &str) -> Builder<'_> {
        let prefix = if self.prefix.is_empty() { name.to_string() } else { format!("{}.{name}", self.prefix) };
        Builder { store: self.store, rng: self.rng, prefix }
    }

    fn full_name(&self, name: &str) -> String {
        if self.prefix.is_empty() { name.to_string() } else { format!("{}.{name}", self.prefix) }
    }

    pub fn param(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        let n = self.full_name(name);
        self.store.insert(n, value)
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<ParamId> {
        let rng = &mut *self.rng;
        let t = Tensor::from_fn(shape, |_| rng.random_range(-bound..bound));
        self.param(name, t)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<ParamId> {
        let dist = Normal::new(0.0, std).expect("positive std");
        let rng = &mut *self.rng;
        let t = Tensor::from_fn(shape, |_| dist.sample(rng));
        self.param(name, t)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.param(name, Tensor::zeros(shape))
    }

    pub fn ones(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.param(name, Tensor::ones(shape))
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    /// Weight `[fan_in, fan_out]`, uniform in ±1/sqrt(fan_in).
    pub fn new(b: &mut Builder, fan_in: usize, fan_out: usize, bias: bool) -> Result<Self> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = b.uniform("weight", &[fan_in, fan_out], bound)?;
        let bias = if bias { Some(b.uniform("bias", &[fan_out], bound)?) } else { None };
        Ok(Linear { weight, bias })
    }

    pub fn forward(&self, s: &Session, x: &Var) -> Result<Var> {
        let y = x.matmul(&s.param(self.weight))?;
        match self.bias {
            Some(b) => y.add(&s.param(b)),
            None => Ok(y),
        }
    }
}

/// Layer normalization over the last axis with learned affine.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(b: &mut Builder, width: usize) -> Result<Self> {
        Ok(LayerNorm { gamma: b.ones("gamma", &[width])?, beta: b.zeros("beta", &[width])? })
    }

    pub fn forward(&self, s: &Session, x: &Var) -> Result<Var> {
        x.layer_norm(x.rank() - 1, Some(&s.param(self.gamma)), Some(&s.param(self.beta)), LN_EPS)
    }
}

/// Group normalization on `[N, C, H, W]` with `min(8, C)` channels per group.
#[derive(Debug, Clone)]
pub struct GroupNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub channels: usize,
    pub groups: usize,
}

pub fn group_size(channels: usize) -> usize {
    channels.min(8)
}

impl GroupNorm {
    pub fn new(b: &mut Builder, channels: usize) -> Result<Self> {
        let gs = group_size(channels);
        if !channels.is_multiple_of(gs) {
            return Err(tavp_tensor::TensorError::Shape {
                op: "group_norm",
                msg: format!("{channels} channels are not divisible into groups of {gs}"),
            });
        }
        Ok(GroupNorm {
            gamma: b.ones("gamma", &[1, channels, 1, 1])?,
            beta: b.zeros("beta", &[1, channels, 1, 1])?,
            channels,
            groups: channels / gs,
        })
    }

    pub fn forward(&self, s: &Session, x: &Var) -> Result<Var> {
        let shape = x.shape().to_vec();
        let per_group = shape[1] / self.groups * shape[2] * shape[3];
        let y = x
            .reshape(&[shape[0], self.groups, per_group])?
            .layer_norm(2, None, None, LN_EPS)?
            .reshape(&shape)?;
        y.mul(&s.param(self.gamma))?.add(&s.param(self.beta))
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(b: &mut Builder, cin: usize, cout: usize, k: usize, stride: usize, padding: usize) -> Result<Self> {
        let bound = 1.0 / ((cin * k * k) as f64).sqrt();
        Ok(Conv2d {
            kernel: b.uniform("kernel", &[cout, cin, k, k], bound)?,
            bias: b.uniform("bias", &[1, cout, 1, 1], bound)?,
            stride,
            padding,
        })
    }

    pub fn forward(&self, s: &Session, x: &Var) -> Result<Var> {
        x.conv2d(&s.param(self.kernel), self.stride, self.padding)?.add(&s.param(self.bias))
    }
}

/// Transposed convolution; kernel layout `[Cin, Cout, k, k]`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl ConvTranspose2d {
    pub fn new(b: &mut Builder, cin: usize, cout: usize, k: usize, stride: usize, padding: usize) -> Result<Self> {
        let bound = 1.0 / ((cout * k * k) as f64).sqrt();
        Ok(ConvTranspose2d {
            kernel: b.uniform("kernel", &[cin, cout, k, k], bound)?,
            bias: b.uniform("bias", &[1, cout, 1, 1], bound)?,
            stride,
            padding,
        })
    }

    pub fn forward(&self, s: &Session, x: &Var) -> Result<Var> {
        x.conv_transpose2d(&s.param(self.kernel), self.stride, self.padding)?.add(&s.param(self.bias))
    }
}

/// Two-layer perceptron with GELU: `width -> hidden -> width`.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new(b: &mut Builder, width: usize, hidden: usize) -> Result<Self> {
        Ok(Mlp { fc1: Linear::new(&mut b.scope("fc1"), width, hidden, true)?, fc2: Linear::new(&mut b.scope("fc2"), hidden, width, true)? })
    }

    pub fn forward(&self, s: &Session, x: &Var) -> Result<Var> {
        self.fc2.forward(s, &self.fc1.forward(s, x)?.gelu()?)
    }
}

/// Multi-head scaled dot-product attention over `[.., n, C]` token sets.
#[derive(Debug, Clone)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    pub width: usize,
}

pub struct AttentionOutput {
    pub out: Var,
    /// Softmax weights `[.., heads, nq, nk]`.
    pub weights: Var,
}

impl Attention {
    pub fn new(b: &mut Builder, width: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !width.is_multiple_of(heads) {
            return Err(tavp_tensor::TensorError::Shape {
                op: "attention",
                msg: format!("{heads} heads do not divide width {width}"),
            });
        }
        Ok(Attention {
            q: Linear::new(&mut b.scope("q"), width, width, true)?,
            k: Linear::new(&mut b.scope("k"), width, width, true)?,
            v: Linear::new(&mut b.scope("v"), width, width, true)?,
            o: Linear::new(&mut b.scope("o"), width, width, true)?,
            heads,
            width,
        })
    }

    fn split_heads(&self, x: &Var) -> Result<Var> {
        // [.., n, C] -> [.., H, n, d]
        let shape = x.shape();
        let r = shape.len();
        let mut split = shape[..r - 1].to_vec();
        split.push(self.heads);
        split.push(self.width / self.heads);
        let mut axes: Vec<usize> = (0..r - 2).collect();
        axes.extend([r - 1, r - 2, r]);
        x.reshape(&split)?.permute(&axes)
    }

    /// `query`: `[.., nq, C]`; `context`: `[.., nk, C]`; `mask`: additive, broadcast to `[.., H, nq, nk]`.
    pub fn forward(&self, s: &Session, query: &Var, context: &Var, mask: Option<&Var>) -> Result<AttentionOutput> {
        let d = (self.width / self.heads) as f64;
        let q = self.split_heads(&self.q.forward(s, query)?)?;
        let k = self.split_heads(&self.k.forward(s, context)?)?;
        let v = self.split_heads(&self.v.forward(s, context)?)?;
        let r = q.rank();
        let mut scores = q.matmul(&k.transpose(r - 2, r - 1)?)?.scale(1.0 / d.sqrt())?;
        if let Some(m) = mask {
            scores = scores.add(m)?;
        }
        let weights = scores.softmax(r - 1)?;
        let mixed = weights.matmul(&v)?;
        // [.., H, nq, d] -> [.., nq, H, d] -> [.., nq, C]
        let mut axes: Vec<usize> = (0..r - 3).collect();
        axes.extend([r - 2, r - 3, r - 1]);
        let mixed = mixed.permute(&axes)?;
        let mut merged = mixed.shape()[..r - 2].to_vec();
        merged.push(self.width);
        let out = self.o.forward(s, &mixed.reshape(&merged)?)?;
        Ok(AttentionOutput { out, weights })
    }
}

/// Upper-triangular additive mask `[n, n]`: entry (i, j) is masked when j > i.
pub fn causal_mask(n: usize) -> Tensor {
    Tensor::from_fn(&[n, n], |idx| if idx % n > idx / n { MASKED } else { 0.0 })
}

/// Fresh deterministic RNG for parameter initialization.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}
