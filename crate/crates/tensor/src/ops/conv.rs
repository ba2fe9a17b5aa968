//! 2-D convolution (cross-correlation, no kernel flip), its adjoint, and
//! average pooling. Convolutions lower to im2col + gemm per batch item.

use crate::error::{Result, TensorError};
use crate::graph::Var;
use crate::ops::linalg::{gemm, MatView};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2dGeometry {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding - self.kh) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding - self.kw) / self.stride + 1
    }

    fn check(&self, op: &'static str) -> Result<()> {
        if self.stride == 0 {
            return Err(TensorError::shape(op, "stride must be positive"));
        }
        if self.kh > self.height + 2 * self.padding || self.kw > self.width + 2 * self.padding {
            return Err(TensorError::shape(
                op,
                format!(
                    "kernel {}x{} larger than padded input {}x{} (padding {})",
                    self.kh,
                    self.kw,
                    self.height + 2 * self.padding,
                    self.width + 2 * self.padding,
                    self.padding
                ),
            ));
        }
        Ok(())
    }
}

/// Unfold one image `[C, H, W]` into columns `[C*kh*kw, Ho*Wo]`.
fn im2col(img: &[f64], g: &Conv2dGeometry, cols: &mut [f64]) {
    let (ho, wo) = (g.out_height(), g.out_width());
    let p = g.padding as isize;
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let y = (oy * g.stride + ki) as isize - p;
                    let line = &mut dst[oy * wo..(oy + 1) * wo];
                    if y < 0 || y >= g.height as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[y as usize * g.width..(y as usize + 1) * g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let x = (ox * g.stride + kj) as isize - p;
                        *v = if x < 0 || x >= g.width as isize { 0.0 } else { src[x as usize] };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back into `[C, H, W]`.
fn col2im(cols: &[f64], g: &Conv2dGeometry, img: &mut [f64]) {
    let (ho, wo) = (g.out_height(), g.out_width());
    let p = g.padding as isize;
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &mut img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let y = (oy * g.stride + ki) as isize - p;
                    if y < 0 || y >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[y as usize * g.width..(y as usize + 1) * g.width];
                    for ox in 0..wo {
                        let x = (ox * g.stride + kj) as isize - p;
                        if x >= 0 && x < g.width as isize {
                            dst[x as usize] += src[oy * wo + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn dims4(op: &'static str, t: &Tensor, what: &str) -> Result<[usize; 4]> {
    match *t.shape() {
        [a, b, c, d] => Ok([a, b, c, d]),
        _ => Err(TensorError::shape(op, format!("{what} must be rank 4, got {:?}", t.shape()))),
    }
}

/// Forward conv of a batch: x `[B, Cin, H, W]`, k `[Cout, Cin, kh, kw]`.
fn conv_forward(x: &Tensor, k: &Tensor, g: &Conv2dGeometry, cout: usize) -> Vec<f64> {
    let batch = x.shape()[0];
    let (ho, wo) = (g.out_height(), g.out_width());
    let rows = g.channels * g.kh * g.kw;
    let in_sz = g.channels * g.height * g.width;
    let out_sz = cout * ho * wo;
    let mut cols = vec![0.0; rows * ho * wo];
    let mut out = vec![0.0; batch * out_sz];
    for b in 0..batch {
        im2col(&x.data()[b * in_sz..(b + 1) * in_sz], g, &mut cols);
        gemm(
            cout,
            rows,
            ho * wo,
            k.data(),
            MatView::row_major(0, rows),
            &cols,
            MatView::row_major(0, ho * wo),
            &mut out,
            MatView::row_major(b * out_sz, ho * wo),
            0.0,
        );
    }
    out
}

/// Input gradient of a conv, i.e. the transposed conv of `dy` with `k`.
fn conv_input_grad(dy: &[f64], k: &Tensor, g: &Conv2dGeometry, cout: usize, batch: usize) -> Vec<f64> {
    let (ho, wo) = (g.out_height(), g.out_width());
    let rows = g.channels * g.kh * g.kw;
    let in_sz = g.channels * g.height * g.width;
    let out_sz = cout * ho * wo;
    let mut cols = vec![0.0; rows * ho * wo];
    let mut dx = vec![0.0; batch * in_sz];
    for b in 0..batch {
        // cols = Kᵀ · dy_b
        gemm(
            rows,
            cout,
            ho * wo,
            k.data(),
            MatView::transposed(0, rows),
            dy,
            MatView::row_major(b * out_sz, ho * wo),
            &mut cols,
            MatView::row_major(0, ho * wo),
            0.0,
        );
        col2im(&cols, g, &mut dx[b * in_sz..(b + 1) * in_sz]);
    }
    dx
}

/// Kernel gradient of a conv: sum_b dy_b · im2col(x_b)ᵀ.
fn conv_kernel_grad(x: &[f64], dy: &[f64], g: &Conv2dGeometry, cout: usize, batch: usize) -> Vec<f64> {
    let (ho, wo) = (g.out_height(), g.out_width());
    let rows = g.channels * g.kh * g.kw;
    let in_sz = g.channels * g.height * g.width;
    let out_sz = cout * ho * wo;
    let mut cols = vec![0.0; rows * ho * wo];
    let mut dk = vec![0.0; cout * rows];
    for b in 0..batch {
        im2col(&x[b * in_sz..(b + 1) * in_sz], g, &mut cols);
        gemm(
            cout,
            ho * wo,
            rows,
            dy,
            MatView::row_major(b * out_sz, ho * wo),
            &cols,
            MatView::transposed(0, ho * wo),
            &mut dk,
            MatView::row_major(0, rows),
            1.0,
        );
    }
    dk
}

impl Var {
    /// Cross-correlation of `[B, Cin, H, W]` with kernel `[Cout, Cin, kh, kw]`.
    pub fn conv2d(&self, kernel: &Var, stride: usize, padding: usize) -> Result<Var> {
        const OP: &str = "conv2d";
        let [batch, cin, h, w] = dims4(OP, self.value(), "input")?;
        let [cout, kcin, kh, kw] = dims4(OP, kernel.value(), "kernel")?;
        if kcin != cin {
            return Err(TensorError::shape(
                OP,
                format!("input {:?} has {cin} channels, kernel {:?} expects {kcin}", self.shape(), kernel.shape()),
            ));
        }
        let geo = Conv2dGeometry { channels: cin, height: h, width: w, kh, kw, stride, padding };
        geo.check(OP)?;
        let (x, k) = (self.value_rc(), kernel.value_rc());
        let out = conv_forward(&x, &k, &geo, cout);
        let value = Tensor::from_parts(vec![batch, cout, geo.out_height(), geo.out_width()], out);
        self.graph().record(OP, value, &[self, kernel], move |g, need| {
            let dx = need[0].then(|| {
                Tensor::from_parts(x.shape().to_vec(), conv_input_grad(g.data(), &k, &geo, cout, batch))
            });
            let dk = need[1].then(|| {
                Tensor::from_parts(k.shape().to_vec(), conv_kernel_grad(x.data(), g.data(), &geo, cout, batch))
            });
            Ok(vec![dx, dk])
        })
    }

    /// Transposed convolution, the adjoint of [`conv2d`](Self::conv2d) with
    /// the same stride and padding. Kernel layout `[Cin, Cout, kh, kw]`;
    /// output extent `(H - 1) * stride - 2 * padding + kh`.
    pub fn conv_transpose2d(&self, kernel: &Var, stride: usize, padding: usize) -> Result<Var> {
        const OP: &str = "conv_transpose2d";
        let [batch, cin, h, w] = dims4(OP, self.value(), "input")?;
        let [kcin, cout, kh, kw] = dims4(OP, kernel.value(), "kernel")?;
        if kcin != cin {
            return Err(TensorError::shape(
                OP,
                format!("input {:?} has {cin} channels, kernel {:?} expects {kcin}", self.shape(), kernel.shape()),
            ));
        }
        if stride == 0 {
            return Err(TensorError::shape(OP, "stride must be positive"));
        }
        let full_h = (h - 1) * stride + kh;
        let full_w = (w - 1) * stride + kw;
        if full_h <= 2 * padding || full_w <= 2 * padding {
            return Err(TensorError::shape(
                OP,
                format!("padding {padding} leaves no output for input {:?} and kernel {:?}", self.shape(), kernel.shape()),
            ));
        }
        // Geometry of the conv this op is the adjoint of: its input is our output.
        let geo = Conv2dGeometry {
            channels: cout,
            height: full_h - 2 * padding,
            width: full_w - 2 * padding,
            kh,
            kw,
            stride,
            padding,
        };
        geo.check(OP)?;
        debug_assert_eq!((geo.out_height(), geo.out_width()), (h, w));
        let (x, k) = (self.value_rc(), kernel.value_rc());
        let out = conv_input_grad(x.data(), &k, &geo, cin, batch);
        let value = Tensor::from_parts(vec![batch, cout, geo.height, geo.width], out);
        self.graph().record(OP, value, &[self, kernel], move |g, need| {
            let dx = need[0].then(|| Tensor::from_parts(x.shape().to_vec(), conv_forward(g, &k, &geo, cin)));
            let dk = need[1].then(|| {
                Tensor::from_parts(k.shape().to_vec(), conv_kernel_grad(g.data(), x.data(), &geo, cin, batch))
            });
            Ok(vec![dx, dk])
        })
    }

    /// Mean over `kernel x kernel` windows of `[B, C, H, W]`, no padding.
    pub fn avg_pool2d(&self, kernel: usize, stride: usize) -> Result<Var> {
        const OP: &str = "avg_pool2d";
        let [b, c, h, w] = dims4(OP, self.value(), "input")?;
        let geo = Conv2dGeometry { channels: 1, height: h, width: w, kh: kernel, kw: kernel, stride, padding: 0 };
        if kernel == 0 {
            return Err(TensorError::shape(OP, "kernel must be positive"));
        }
        geo.check(OP)?;
        let (ho, wo) = (geo.out_height(), geo.out_width());
        let norm = 1.0 / (kernel * kernel) as f64;
        let x = self.value();
        let mut out = vec![0.0; b * c * ho * wo];
        for p in 0..b * c {
            let src = &x.data()[p * h * w..(p + 1) * h * w];
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = 0.0;
                    for i in 0..kernel {
                        for j in 0..kernel {
                            s += src[(oy * stride + i) * w + ox * stride + j];
                        }
                    }
                    out[(p * ho + oy) * wo + ox] = s * norm;
                }
            }
        }
        let in_shape = x.shape().to_vec();
        let value = Tensor::from_parts(vec![b, c, ho, wo], out);
        self.graph().record(OP, value, &[self], move |g, _| {
            let mut dx = vec![0.0; b * c * h * w];
            for p in 0..b * c {
                let dst = &mut dx[p * h * w..(p + 1) * h * w];
                for oy in 0..ho {
                    for ox in 0..wo {
                        let gv = g.data()[(p * ho + oy) * wo + ox] * norm;
                        for i in 0..kernel {
                            for j in 0..kernel {
                                dst[(oy * stride + i) * w + ox * stride + j] += gv;
                            }
                        }
                    }
                }
            }
            Ok(vec![Some(Tensor::from_parts(in_shape.clone(), dx))])
        })
    }
}
