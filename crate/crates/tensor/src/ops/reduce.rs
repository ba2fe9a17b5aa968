use crate::error::{Result, TensorError};
use crate::graph::Var;
use crate::tensor::{numel, Tensor};

/// `(outer, extent, inner)` factorization of a shape around `axis`.
pub(crate) fn split_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(TensorError::bounds(op, format!("axis {axis} for shape {shape:?}")));
    }
    Ok((numel(&shape[..axis]), shape[axis], numel(&shape[axis + 1..])))
}

impl Var {
    pub fn sum_all(&self) -> Result<Var> {
        let shape = self.shape().to_vec();
        let value = Tensor::scalar(self.value().sum());
        self.graph().record("sum", value, &[self], move |g, _| {
            Ok(vec![Some(Tensor::full(&shape, g.item()))])
        })
    }

    pub fn mean_all(&self) -> Result<Var> {
        let n = self.value().numel() as f64;
        self.sum_all()?.scale(1.0 / n)
    }

    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Result<Var> {
        let (outer, n, inner) = split_axis("sum_axis", self.shape(), axis)?;
        let x = self.value().data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..n {
                let src = &x[(o * n + i) * inner..(o * n + i + 1) * inner];
                for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut shape = self.shape().to_vec();
        if keepdim {
            shape[axis] = 1;
        } else {
            shape.remove(axis);
        }
        let in_shape = self.shape().to_vec();
        self.graph().record("sum_axis", Tensor::from_parts(shape, out), &[self], move |g, _| {
            let mut dx = vec![0.0; outer * n * inner];
            for o in 0..outer {
                let src = &g.data()[o * inner..(o + 1) * inner];
                for i in 0..n {
                    dx[(o * n + i) * inner..(o * n + i + 1) * inner].copy_from_slice(src);
                }
            }
            Ok(vec![Some(Tensor::from_parts(in_shape.clone(), dx))])
        })
    }

    pub fn mean_axis(&self, axis: usize, keepdim: bool) -> Result<Var> {
        let n = *self
            .shape()
            .get(axis)
            .ok_or_else(|| TensorError::bounds("mean_axis", format!("axis {axis} for shape {:?}", self.shape())))?;
        self.sum_axis(axis, keepdim)?.scale(1.0 / n as f64)
    }

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Var> {
        let (outer, n, inner) = split_axis("softmax", self.shape(), axis)?;
        let x = self.value().data();
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * n + k) * inner + i;
                let m = (0..n).map(|k| x[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for k in 0..n {
                    let e = (x[at(k)] - m).exp();
                    y[at(k)] = e;
                    s += e;
                }
                for k in 0..n {
                    y[at(k)] /= s;
                }
            }
        }
        let value = Tensor::from_parts(self.shape().to_vec(), y);
        let out = std::rc::Rc::new(value.clone());
        self.graph().record("softmax", value, &[self], move |g, _| {
            let (y, gd) = (out.data(), g.data());
            let mut dx = vec![0.0; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| (o * n + k) * inner + i;
                    let dot: f64 = (0..n).map(|k| gd[at(k)] * y[at(k)]).sum();
                    for k in 0..n {
                        dx[at(k)] = y[at(k)] * (gd[at(k)] - dot);
                    }
                }
            }
            Ok(vec![Some(Tensor::from_parts(out.shape().to_vec(), dx))])
        })
    }

    /// Normalize each slice along `axis` to zero mean and unit variance
    /// (biased variance, `eps` inside the square root), then apply the
    /// optional per-position affine `gamma`, `beta` of shape `[extent]`.
    pub fn layer_norm(&self, axis: usize, gamma: Option<&Var>, beta: Option<&Var>, eps: f64) -> Result<Var> {
        const OP: &str = "layer_norm";
        let (outer, n, inner) = split_axis(OP, self.shape(), axis)?;
        for (name, p) in [("gamma", gamma), ("beta", beta)] {
            if let Some(p) = p {
                if p.shape() != [n] {
                    return Err(TensorError::shape(
                        OP,
                        format!("{name} shape {:?} does not match axis extent {n} of {:?}", p.shape(), self.shape()),
                    ));
                }
            }
        }
        let x = self.value().data();
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * n + k) * inner + i;
                let mean = (0..n).map(|k| x[at(k)]).sum::<f64>() / n as f64;
                let var = (0..n).map(|k| (x[at(k)] - mean).powi(2)).sum::<f64>() / n as f64;
                let r = 1.0 / (var + eps).sqrt();
                inv_std[o * inner + i] = r;
                for k in 0..n {
                    xhat[at(k)] = (x[at(k)] - mean) * r;
                }
            }
        }
        let gv = gamma.map(|p| p.value_rc());
        let bv = beta.map(|p| p.value_rc());
        let mut y = xhat.clone();
        if gv.is_some() || bv.is_some() {
            for (idx, v) in y.iter_mut().enumerate() {
                let k = (idx / inner) % n;
                if let Some(gm) = &gv {
                    *v *= gm.data()[k];
                }
                if let Some(bt) = &bv {
                    *v += bt.data()[k];
                }
            }
        }
        let shape = self.shape().to_vec();
        let value = Tensor::from_parts(shape.clone(), y);
        let mut inputs = vec![self];
        inputs.extend(gamma);
        inputs.extend(beta);
        let has_gamma = gamma.is_some();
        self.graph().record(OP, value, &inputs, move |g, need| {
            let gd = g.data();
            let mut grads = Vec::with_capacity(3);
            // upstream gradient w.r.t. xhat
            let gh: Vec<f64> = match &gv {
                Some(gm) => gd.iter().enumerate().map(|(idx, v)| v * gm.data()[(idx / inner) % n]).collect(),
                None => gd.to_vec(),
            };
            grads.push(need[0].then(|| {
                let mut dx = vec![0.0; gh.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| (o * n + k) * inner + i;
                        let mg = (0..n).map(|k| gh[at(k)]).sum::<f64>() / n as f64;
                        let mgx = (0..n).map(|k| gh[at(k)] * xhat[at(k)]).sum::<f64>() / n as f64;
                        let r = inv_std[o * inner + i];
                        for k in 0..n {
                            dx[at(k)] = r * (gh[at(k)] - mg - xhat[at(k)] * mgx);
                        }
                    }
                }
                Tensor::from_parts(shape.clone(), dx)
            }));
            let mut slot = 1;
            if has_gamma {
                grads.push(need[slot].then(|| {
                    let mut dg = vec![0.0; n];
                    for (idx, v) in gd.iter().enumerate() {
                        dg[(idx / inner) % n] += v * xhat[idx];
                    }
                    Tensor::from_parts(vec![n], dg)
                }));
                slot += 1;
            }
            if bv.is_some() {
                grads.push(need[slot].then(|| {
                    let mut db = vec![0.0; n];
                    for (idx, v) in gd.iter().enumerate() {
                        db[(idx / inner) % n] += v;
                    }
                    Tensor::from_parts(vec![n], db)
                }));
            }
            Ok(grads)
        })
    }
}
