//! Brute-force oracles for the metrics and the TSGL weight field.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tavp::metrics::{SSIM_SIGMA, SSIM_WINDOW};
use tavp_tensor::Tensor;

/// Cells per unit length of the IoU raster; box corners are snapped to it so
/// counting is exact.
pub const RES: f64 = 16.0;
pub const EXTENT: usize = 8;

pub fn snapped_box(r: &mut ChaCha8Rng) -> [f64; 4] {
    let n = (EXTENT as f64 * RES) as i64;
    let x0 = r.random_range(0..n - 1);
    let x1 = r.random_range(x0 + 1..=n);
    let y0 = r.random_range(0..n - 1);
    let y1 = r.random_range(y0 + 1..=n);
    let [x0, x1, y0, y1] = [x0, x1, y0, y1].map(|v| v as f64 / RES);
    [(x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0]
}

pub fn raster_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let inside = |bx: [f64; 4], x: f64, y: f64| (x - bx[0]).abs() < bx[2] / 2.0 && (y - bx[1]).abs() < bx[3] / 2.0;
    let cells = EXTENT * RES as usize;
    let (mut inter, mut union) = (0usize, 0usize);
    for i in 0..cells {
        for j in 0..cells {
            let (x, y) = ((j as f64 + 0.5) / RES, (i as f64 + 0.5) / RES);
            let (pa, pb) = (inside(a, x, y), inside(b, x, y));
            inter += (pa && pb) as usize;
            union += (pa || pb) as usize;
        }
    }
    inter as f64 / union as f64
}

/// Direct 2-D window sums with the outer-product kernel.
pub fn naive_ssim(a: &Tensor, b: &Tensor) -> f64 {
    let s = a.shape();
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    let k = SSIM_WINDOW;
    let c = (k as f64 - 1.0) / 2.0;
    let mut kern = vec![0.0; k * k];
    for u in 0..k {
        for v in 0..k {
            kern[u * k + v] = (-((u as f64 - c).powi(2) + (v as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        }
    }
    let z: f64 = kern.iter().sum();
    kern.iter_mut().for_each(|v| *v /= z);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let planes = a.numel() / (h * w);
    let (mut total, mut n) = (0.0, 0);
    for p in 0..planes {
        let px = |t: &Tensor, i: usize, j: usize| t.data()[p * h * w + i * w + j];
        for i in 0..=h - k {
            for j in 0..=w - k {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for u in 0..k {
                    for v in 0..k {
                        let (x, y, wt) = (px(a, i + u, j + v), px(b, i + u, j + v), kern[u * k + v]);
                        mx += wt * x;
                        my += wt * y;
                        sxx += wt * x * x;
                        syy += wt * y * y;
                        sxy += wt * x * y;
                    }
                }
                let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                total += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                n += 1;
            }
        }
    }
    total / n as f64
}

pub fn naive_roi_mse(pred: &Tensor, target: &Tensor, boxes: &Tensor) -> f64 {
    let s = pred.shape();
    let (t, c, h, w) = (s[0], s[1], s[2], s[3]);
    let bound = |lo: f64, hi: f64, n: usize| {
        let f = |v: f64| v.round().max(0.0).min(n as f64) as usize;
        let (a, b) = (f(lo), f(hi));
        if b > a {
            (a, b)
        } else {
            (a.min(n - 1), a.min(n - 1) + 1)
        }
    };
    let mut total = 0.0;
    for f in 0..t {
        let (cx, cy, bw, bh) = (boxes.get(&[f, 0]), boxes.get(&[f, 1]), boxes.get(&[f, 2]), boxes.get(&[f, 3]));
        let (x0, x1) = bound(cx - bw / 2.0, cx + bw / 2.0, w);
        let (y0, y1) = bound(cy - bh / 2.0, cy + bh / 2.0, h);
        let (mut acc, mut n) = (0.0, 0);
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    if i >= y0 && i < y1 && j >= x0 && j < x1 {
                        let d = pred.get(&[f, ch, i, j]) - target.get(&[f, ch, i, j]);
                        acc += d * d;
                        n += 1;
                    }
                }
            }
        }
        total += acc / n as f64;
    }
    total / t as f64
}

/// Box weight at one pixel: 1 inside the box, Gaussian decay outside.
pub fn oracle_weight(bx: [f64; 4], x: f64, y: f64, sx: f64, sy: f64) -> f64 {
    if (x - bx[0]).abs() < bx[2] / 2.0 && (y - bx[1]).abs() < bx[3] / 2.0 {
        1.0
    } else {
        (-((x - bx[0]).powi(2) / (2.0 * sx * sx) + (y - bx[1]).powi(2) / (2.0 * sy * sy))).exp()
    }
}
