use crate::error::{Result, TensorError};
use crate::graph::Var;
use crate::tensor::{numel, strides, Tensor};

/// `sqrt(2/pi)` and the cubic coefficient of the tanh GELU approximation:
/// `gelu(x) = 0.5 x (1 + tanh(GELU_K0 (x + GELU_K1 x^3)))`.
pub const GELU_K0: f64 = 0.797_884_560_802_865_4;
pub const GELU_K1: f64 = 0.044_715;

pub(crate) fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(TensorError::shape(
                    op,
                    format!("shapes {a:?} and {b:?} are not broadcast-compatible"),
                ))
            }
        };
    }
    Ok(out)
}

/// Strides of `shape` viewed at `out`'s rank, with 0 on broadcast axes.
pub(crate) fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let own = strides(shape);
    let pad = out.len() - shape.len();
    (0..out.len())
        .map(|i| if i < pad || shape[i - pad] == 1 { 0 } else { own[i - pad] })
        .collect()
}

/// Visit every output position with the matching flat offsets into `a`, `b`.
pub(crate) fn for_each_broadcast(
    out: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let n = numel(out);
    if out.is_empty() {
        f(0, 0, 0);
        return;
    }
    let rank = out.len();
    let mut idx = vec![0usize; rank];
    let (mut oa, mut ob) = (0usize, 0usize);
    let last = rank - 1;
    let inner = out[last];
    let mut i = 0;
    while i < n {
        for j in 0..inner {
            f(i + j, oa + j * sa[last], ob + j * sb[last]);
        }
        i += inner;
        // advance the multi-index over the outer axes
        let mut d = last;
        while d > 0 {
            d -= 1;
            idx[d] += 1;
            oa += sa[d];
            ob += sb[d];
            if idx[d] < out[d] {
                break;
            }
            oa -= sa[d] * out[d];
            ob -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

/// Sum a gradient of shape `out` down to `target` (undoing a broadcast).
pub(crate) fn reduce_to(grad: &Tensor, target: &[usize]) -> Tensor {
    if grad.shape() == target {
        return grad.clone();
    }
    let st = broadcast_strides(target, grad.shape());
    let zero = vec![0; grad.rank()];
    let mut acc = vec![0.0; numel(target)];
    let g = grad.data();
    for_each_broadcast(grad.shape(), &st, &zero, |i, t, _| acc[t] += g[i]);
    Tensor::from_parts(target.to_vec(), acc)
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

impl Binary {
    fn name(self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
            Binary::Div => "div",
        }
    }

    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Binary::Add => a + b,
            Binary::Sub => a - b,
            Binary::Mul => a * b,
            Binary::Div => a / b,
        }
    }
}

fn broadcast_eval(op: Binary, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() == b.shape() {
        return Ok(a.zip_map(b, |x, y| op.apply(x, y)));
    }
    let out = broadcast_shape(op.name(), a.shape(), b.shape())?;
    let sa = broadcast_strides(a.shape(), &out);
    let sb = broadcast_strides(b.shape(), &out);
    let mut data = vec![0.0; numel(&out)];
    let (ad, bd) = (a.data(), b.data());
    for_each_broadcast(&out, &sa, &sb, |i, ia, ib| data[i] = op.apply(ad[ia], bd[ib]));
    Ok(Tensor::from_parts(out, data))
}

fn binary(op: Binary, a: &Var, b: &Var) -> Result<Var> {
    let value = broadcast_eval(op, a.value(), b.value())?;
    let (ra, rb) = (a.value_rc(), b.value_rc());
    a.graph().record(op.name(), value, &[a, b], move |g, need| {
        let ga = need[0].then(|| {
            let local = match op {
                Binary::Add | Binary::Sub => g.clone(),
                Binary::Mul => broadcast_eval(Binary::Mul, g, &rb).expect("shape checked"),
                Binary::Div => broadcast_eval(Binary::Div, g, &rb).expect("shape checked"),
            };
            reduce_to(&local, ra.shape())
        });
        let gb = need[1].then(|| {
            let local = match op {
                Binary::Add => g.clone(),
                Binary::Sub => g.map(|v| -v),
                Binary::Mul => broadcast_eval(Binary::Mul, g, &ra).expect("shape checked"),
                Binary::Div => {
                    let num = broadcast_eval(Binary::Mul, g, &ra).expect("shape checked");
                    let b2 = rb.map(|v| v * v);
                    broadcast_eval(Binary::Div, &num, &b2).expect("shape checked").map(|v| -v)
                }
            };
            reduce_to(&local, rb.shape())
        });
        Ok(vec![ga, gb])
    })
}

/// Elementwise op whose derivative is expressed through input `x` and output `y`.
fn unary(
    x: &Var,
    op: &'static str,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64, f64) -> f64 + 'static,
) -> Result<Var> {
    let value = x.value().map(f);
    let rx = x.value_rc();
    let out = std::rc::Rc::new(value.clone());
    let ro = std::rc::Rc::clone(&out);
    x.graph().record(op, value, &[x], move |g, _| {
        let data = g
            .data()
            .iter()
            .zip(rx.data().iter().zip(ro.data()))
            .map(|(gv, (&xv, &yv))| gv * df(xv, yv))
            .collect();
        Ok(vec![Some(Tensor::from_parts(g.shape().to_vec(), data))])
    })
}

pub(crate) fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K0 * (x + GELU_K1 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_K0 * (x + GELU_K1 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_K0 * (1.0 + 3.0 * GELU_K1 * x * x)
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Var {
    /// Broadcasting addition.
    pub fn add(&self, other: &Var) -> Result<Var> {
        binary(Binary::Add, self, other)
    }

    pub fn sub(&self, other: &Var) -> Result<Var> {
        binary(Binary::Sub, self, other)
    }

    pub fn mul(&self, other: &Var) -> Result<Var> {
        binary(Binary::Mul, self, other)
    }

    pub fn div(&self, other: &Var) -> Result<Var> {
        binary(Binary::Div, self, other)
    }

    pub fn scale(&self, c: f64) -> Result<Var> {
        unary(self, "scale", |x| c * x, move |_, _| c)
    }

    pub fn add_scalar(&self, c: f64) -> Result<Var> {
        unary(self, "add_scalar", |x| x + c, |_, _| 1.0)
    }

    pub fn neg(&self) -> Result<Var> {
        self.scale(-1.0)
    }

    pub fn square(&self) -> Result<Var> {
        unary(self, "square", |x| x * x, |x, _| 2.0 * x)
    }

    pub fn exp(&self) -> Result<Var> {
        unary(self, "exp", f64::exp, |_, y| y)
    }

    pub fn tanh(&self) -> Result<Var> {
        unary(self, "tanh", f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn sigmoid(&self) -> Result<Var> {
        unary(self, "sigmoid", sigmoid_scalar, |_, y| y * (1.0 - y))
    }

    pub fn relu(&self) -> Result<Var> {
        unary(self, "relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// GELU, tanh approximation (see [`GELU_K0`], [`GELU_K1`]).
    pub fn gelu(&self) -> Result<Var> {
        unary(self, "gelu", gelu_scalar, |x, _| gelu_grad(x))
    }

    /// Elementwise Huber / smooth-L1 with knee `beta`:
    /// `0.5 d^2 / beta` for `|d| < beta`, `|d| - 0.5 beta` otherwise.
    pub fn smooth_l1(&self, beta: f64) -> Result<Var> {
        unary(
            self,
            "smooth_l1",
            move |d| if d.abs() < beta { 0.5 * d * d / beta } else { d.abs() - 0.5 * beta },
            move |d, _| if d.abs() < beta { d / beta } else { d.signum() },
        )
    }
}
