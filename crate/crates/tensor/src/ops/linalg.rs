use crate::error::{Result, TensorError};
use crate::graph::Var;
use crate::ops::elementwise::{broadcast_shape, broadcast_strides, for_each_broadcast};
use crate::tensor::{numel, Tensor};

/// Strided view of a row-major matrix inside a larger buffer.
#[derive(Clone, Copy)]
pub(crate) struct MatView {
    pub offset: usize,
    pub rs: isize,
    pub cs: isize,
}

impl MatView {
    pub fn row_major(offset: usize, cols: usize) -> Self {
        MatView { offset, rs: cols as isize, cs: 1 }
    }

    /// The transpose of a row-major `rows x cols` matrix.
    pub fn transposed(offset: usize, cols: usize) -> Self {
        MatView { offset, rs: 1, cs: cols as isize }
    }
}

/// `c = a · b + beta · c` for an `m x k` times `k x n` product.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    av: MatView,
    b: &[f64],
    bv: MatView,
    c: &mut [f64],
    cv: MatView,
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    let extent = |v: MatView, r: usize, cc: usize| {
        v.offset + (r.saturating_sub(1)) * v.rs as usize + (cc.saturating_sub(1)) * v.cs as usize
    };
    assert!(extent(av, m, k) < a.len().max(1) || k == 0);
    assert!(extent(bv, k, n) < b.len().max(1) || k == 0);
    assert!(extent(cv, m, n) < c.len());
    // SAFETY: the asserts above bound every index the kernel touches for
    // non-negative strides; `a`, `b` and `c` are distinct borrows.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr().add(av.offset),
            av.rs,
            av.cs,
            b.as_ptr().add(bv.offset),
            bv.rs,
            bv.cs,
            beta,
            c.as_mut_ptr().add(cv.offset),
            cv.rs,
            cv.cs,
        );
    }
}

struct MatmulPlan {
    m: usize,
    k: usize,
    n: usize,
    out_shape: Vec<usize>,
    /// (output batch, a batch, b batch) triples
    batches: Vec<(usize, usize, usize)>,
}

fn plan(a: &[usize], b: &[usize]) -> Result<MatmulPlan> {
    if a.len() < 2 || b.len() < 2 {
        return Err(TensorError::shape(
            "matmul",
            format!("operands need rank >= 2, got {a:?} and {b:?}"),
        ));
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
    if k != k2 {
        return Err(TensorError::shape(
            "matmul",
            format!("inner extents differ: {a:?} x {b:?}"),
        ));
    }
    let (ba, bb) = (&a[..a.len() - 2], &b[..b.len() - 2]);
    let batch = broadcast_shape("matmul", ba, bb).map_err(|_| {
        TensorError::shape("matmul", format!("batch extents incompatible: {a:?} x {b:?}"))
    })?;
    let mut batches = Vec::with_capacity(numel(&batch));
    if batch.is_empty() {
        batches.push((0, 0, 0));
    } else {
        let sa = broadcast_strides(ba, &batch);
        let sb = broadcast_strides(bb, &batch);
        for_each_broadcast(&batch, &sa, &sb, |o, ia, ib| batches.push((o, ia, ib)));
    }
    let mut out_shape = batch;
    out_shape.extend([m, n]);
    Ok(MatmulPlan { m, k, n, out_shape, batches })
}

impl Var {
    /// Batched matrix product `[.., m, k] x [.., k, n] -> [.., m, n]` with
    /// broadcasting over the leading axes.
    pub fn matmul(&self, other: &Var) -> Result<Var> {
        let p = plan(self.shape(), other.shape())?;
        let (m, k, n) = (p.m, p.k, p.n);
        let (a, b) = (self.value_rc(), other.value_rc());
        let mut out = vec![0.0; numel(&p.out_shape)];
        for &(o, ia, ib) in &p.batches {
            gemm(
                m,
                k,
                n,
                a.data(),
                MatView::row_major(ia * m * k, k),
                b.data(),
                MatView::row_major(ib * k * n, n),
                &mut out,
                MatView::row_major(o * m * n, n),
                0.0,
            );
        }
        let value = Tensor::from_parts(p.out_shape.clone(), out);
        let batches = p.batches;
        self.graph().record("matmul", value, &[self, other], move |g, need| {
            let ga = need[0].then(|| {
                let mut da = vec![0.0; a.numel()];
                for &(o, ia, ib) in &batches {
                    // dA = dC · Bᵀ
                    gemm(
                        m,
                        n,
                        k,
                        g.data(),
                        MatView::row_major(o * m * n, n),
                        b.data(),
                        MatView::transposed(ib * k * n, n),
                        &mut da,
                        MatView::row_major(ia * m * k, k),
                        1.0,
                    );
                }
                Tensor::from_parts(a.shape().to_vec(), da)
            });
            let gb = need[1].then(|| {
                let mut db = vec![0.0; b.numel()];
                for &(o, ia, ib) in &batches {
                    // dB = Aᵀ · dC
                    gemm(
                        k,
                        m,
                        n,
                        a.data(),
                        MatView::transposed(ia * m * k, k),
                        g.data(),
                        MatView::row_major(o * m * n, n),
                        &mut db,
                        MatView::row_major(ib * k * n, n),
                        1.0,
                    );
                }
                Tensor::from_parts(b.shape().to_vec(), db)
            });
            Ok(vec![ga, gb])
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    #[test]
    fn hand_product() {
        let g = Graph::new();
        let a = g.constant(Tensor::new([2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = g.constant(Tensor::new([2, 1], vec![0.0, 1.0]).unwrap());
        assert_eq!(a.matmul(&b).unwrap().value().data(), &[2.0, 4.0]);
    }

    #[test]
    fn identity_left() {
        let g = Graph::new();
        let a = g.constant(Tensor::from_fn(&[3, 3], |i| (i * i) as f64 - 2.5));
        let y = g.constant(Tensor::eye(3)).matmul(&a).unwrap();
        assert_eq!(y.value(), a.value());
    }

    #[test]
    fn mismatch_reports_both_shapes() {
        let g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[4, 5]));
        let msg = a.matmul(&b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 5]"), "{msg}");
    }

    #[test]
    fn batch_broadcast_against_matrix() {
        let g = Graph::new();
        let a = g.leaf(Tensor::from_fn(&[3, 2, 4], |i| i as f64 * 0.1));
        let w = g.leaf(Tensor::from_fn(&[4, 5], |i| 1.0 - i as f64 * 0.05));
        let y = a.matmul(&w).unwrap();
        assert_eq!(y.shape(), &[3, 2, 5]);
        // batch 2 equals a plain 2-D product
        let a2 = g.constant(a.value().index_axis0(2));
        let y2 = a2.matmul(&w).unwrap();
        assert_eq!(y.value().index_axis0(2).data(), y2.value().data());
        let grads = g.backward(&y.sum_all().unwrap()).unwrap();
        // d/dw sum(a·w) = column sums of all a rows, replicated
        let gw = grads.get(&w).unwrap();
        let col0: f64 = (0..6).map(|r| a.value().data()[r * 4]).sum();
        assert!((gw.get(&[0, 3]) - col0).abs() < 1e-12);
    }
}
