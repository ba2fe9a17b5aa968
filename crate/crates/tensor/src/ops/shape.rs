use crate::error::{Result, TensorError};
use crate::graph::Var;
use crate::ops::reduce::split_axis;
use crate::tensor::{numel, strides, Tensor};

fn permute_data(t: &Tensor, axes: &[usize]) -> Tensor {
    let in_strides = strides(t.shape());
    let out_shape: Vec<usize> = axes.iter().map(|&a| t.shape()[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let n = t.numel();
    let mut out = Vec::with_capacity(n);
    let rank = out_shape.len();
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    let src = t.data();
    for _ in 0..n {
        out.push(src[off]);
        let mut d = rank;
        while d > 0 {
            d -= 1;
            idx[d] += 1;
            off += src_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= src_strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    Tensor::from_parts(out_shape, out)
}

impl Var {
    pub fn reshape(&self, shape: &[usize]) -> Result<Var> {
        let value = self.value().reshape(shape)?;
        let in_shape = self.shape().to_vec();
        self.graph().record("reshape", value, &[self], move |g, _| {
            Ok(vec![Some(Tensor::from_parts(in_shape.clone(), g.data().to_vec()))])
        })
    }

    /// Reorder axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Var> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return Err(TensorError::shape(
                "permute",
                format!("{axes:?} is not a permutation of the axes of {:?}", self.shape()),
            ));
        }
        let value = permute_data(self.value(), axes);
        let mut inverse = vec![0; rank];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        self.graph().record("permute", value, &[self], move |g, _| {
            Ok(vec![Some(permute_data(g, &inverse))])
        })
    }

    /// Swap two axes.
    pub fn transpose(&self, a: usize, b: usize) -> Result<Var> {
        let rank = self.rank();
        if a >= rank || b >= rank {
            return Err(TensorError::bounds(
                "transpose",
                format!("axes ({a}, {b}) for shape {:?}", self.shape()),
            ));
        }
        let mut axes: Vec<usize> = (0..rank).collect();
        axes.swap(a, b);
        self.permute(&axes)
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Var> {
        let (outer, n, inner) = split_axis("slice", self.shape(), axis)?;
        if start >= end || end > n {
            return Err(TensorError::bounds(
                "slice",
                format!("range {start}..{end} on axis {axis} of extent {n}"),
            ));
        }
        let len = end - start;
        let x = self.value().data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            out.extend_from_slice(&x[(o * n + start) * inner..(o * n + end) * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        let in_shape = self.shape().to_vec();
        self.graph().record("slice", Tensor::from_parts(shape, out), &[self], move |g, _| {
            let mut dx = vec![0.0; numel(&in_shape)];
            for o in 0..outer {
                dx[(o * n + start) * inner..(o * n + end) * inner]
                    .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
            }
            Ok(vec![Some(Tensor::from_parts(in_shape.clone(), dx))])
        })
    }

    /// Join along `axis`; all other extents must agree.
    pub fn concat(parts: &[&Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::shape("concat", "no operands"))?;
        let base = first.shape();
        let mut extents = Vec::with_capacity(parts.len());
        for p in parts {
            let s = p.shape();
            let ok = s.len() == base.len()
                && axis < s.len()
                && s.iter().zip(base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(TensorError::shape(
                    "concat",
                    format!("cannot join {s:?} with {base:?} along axis {axis}"),
                ));
            }
            extents.push(s[axis]);
        }
        let outer = numel(&base[..axis]);
        let inner = numel(&base[axis + 1..]);
        let total: usize = extents.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &e) in parts.iter().zip(&extents) {
                out.extend_from_slice(&p.value().data()[o * e * inner..(o + 1) * e * inner]);
            }
        }
        let mut shape = base.to_vec();
        shape[axis] = total;
        let graph = first.graph().clone();
        let bw_extents = extents.clone();
        let in_shapes: Vec<Vec<usize>> = parts.iter().map(|p| p.shape().to_vec()).collect();
        graph.record("concat", Tensor::from_parts(shape, out), parts, move |g, need| {
            let mut grads = Vec::with_capacity(bw_extents.len());
            let mut before = 0;
            for (i, &e) in bw_extents.iter().enumerate() {
                if need[i] {
                    let mut d = Vec::with_capacity(outer * e * inner);
                    for o in 0..outer {
                        let s = (o * total + before) * inner;
                        d.extend_from_slice(&g.data()[s..s + e * inner]);
                    }
                    grads.push(Some(Tensor::from_parts(in_shapes[i].clone(), d)));
                } else {
                    grads.push(None);
                }
                before += e;
            }
            Ok(grads)
        })
    }
}
