//! Frame and box metrics. Images are tensors whose last two axes are
//! `H, W`; leading axes are averaged over. Boxes are `(cx, cy, w, h)`.

use tavp_tensor::Tensor;

use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Input(format!("{op}: shapes {:?} and {:?} differ", a.shape(), b.shape())));
    }
    if a.numel() == 0 {
        return Err(Error::Input(format!("{op}: empty input")));
    }
    Ok(())
}

pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_shape("mse", a, b)?;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.numel() as f64)
}

pub fn mae(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_shape("mae", a, b)?;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.numel() as f64)
}

/// `10 log10(peak² / mse)`; identical inputs give `+inf`.
pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    let e = mse(a, b)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / e).log10())
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of one `h x w` plane.
fn filter_valid(x: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            rows[i * ow + j] = taps.iter().enumerate().map(|(t, c)| c * x[i * w + j + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = taps.iter().enumerate().map(|(t, c)| c * rows[(i + t) * ow + j]).sum();
        }
    }
    out
}

/// Mean SSIM over all valid 11x11 Gaussian windows (σ 1.5) and all planes,
/// dynamic range 1.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_shape("ssim", a, b)?;
    let s = a.shape();
    if s.len() < 2 {
        return Err(Error::Input(format!("ssim: need at least 2 axes, got {s:?}")));
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Input(format!("ssim: {h}x{w} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let (c1, c2) = (K1 * K1, K2 * K2);
    let planes = a.numel() / (h * w);
    let mut total = 0.0;
    let mut count = 0usize;
    for p in 0..planes {
        let x = &a.data()[p * h * w..(p + 1) * h * w];
        let y = &b.data()[p * h * w..(p + 1) * h * w];
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(y).map(|(u, v)| u * v).collect();
        let [mx, my, exx, eyy, exy] = [x, y, &xx[..], &yy[..], &xy[..]].map(|v| filter_valid(v, h, w, &taps));
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = exx[i] - ux * ux;
            let vy = eyy[i] - uy * uy;
            let cxy = exy[i] - ux * uy;
            total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Integer crop `[lo, hi)` of a box extent, clamped to `[0, n]` with at least one cell.
pub fn crop_range(center: f64, size: f64, n: usize) -> (usize, usize) {
    let lo = (center - size / 2.0).round().clamp(0.0, n as f64) as usize;
    let hi = (center + size / 2.0).round().clamp(0.0, n as f64) as usize;
    if hi > lo {
        (lo, hi)
    } else {
        let lo = lo.min(n - 1);
        (lo, lo + 1)
    }
}

/// MSE inside the ground-truth box of each frame, averaged over frames.
/// Frames are `[T', ..., H, W]`; boxes `[T', 4]` in pixels.
pub fn roi_mse(pred: &Tensor, target: &Tensor, gt_boxes: &Tensor) -> Result<f64> {
    same_shape("roi_mse", pred, target)?;
    let s = pred.shape();
    if s.len() < 3 || gt_boxes.shape() != [s[0], 4] {
        return Err(Error::Input(format!("roi_mse: frames {s:?} with boxes {:?}", gt_boxes.shape())));
    }
    let (t, h, w) = (s[0], s[s.len() - 2], s[s.len() - 1]);
    let planes = pred.numel() / (t * h * w);
    let mut total = 0.0;
    for f in 0..t {
        let (x0, x1) = crop_range(gt_boxes.get(&[f, 0]), gt_boxes.get(&[f, 2]), w);
        let (y0, y1) = crop_range(gt_boxes.get(&[f, 1]), gt_boxes.get(&[f, 3]), h);
        let mut acc = 0.0;
        for p in 0..planes {
            let base = (f * planes + p) * h * w;
            for i in y0..y1 {
                for j in x0..x1 {
                    let d = pred.data()[base + i * w + j] - target.data()[base + i * w + j];
                    acc += d * d;
                }
            }
        }
        total += acc / (planes * (y1 - y0) * (x1 - x0)) as f64;
    }
    Ok(total / t as f64)
}

fn check_box(b: [f64; 4]) -> Result<()> {
    if !(b[2] >= 0.0 && b[3] >= 0.0) || b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input(format!("box {b:?} has negative or non-finite extent")));
    }
    Ok(())
}

/// Intersection over union; two zero-area boxes give 0.
pub fn iou(a: [f64; 4], b: [f64; 4]) -> Result<f64> {
    check_box(a)?;
    check_box(b)?;
    let ix = ((a[0] + a[2] / 2.0).min(b[0] + b[2] / 2.0) - (a[0] - a[2] / 2.0).max(b[0] - b[2] / 2.0)).max(0.0);
    let iy = ((a[1] + a[3] / 2.0).min(b[1] + b[3] / 2.0) - (a[1] - a[3] / 2.0).max(b[1] - b[3] / 2.0)).max(0.0);
    let inter = ix * iy;
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    Ok(if union > 0.0 { inter / union } else { 0.0 })
}

fn rows(op: &str, a: &Tensor, b: &Tensor) -> Result<Vec<([f64; 4], [f64; 4])>> {
    if a.shape() != b.shape() || a.rank() != 2 || a.shape()[1] != 4 || a.shape()[0] == 0 {
        return Err(Error::Input(format!("{op}: expected two [T, 4] box sets, got {:?} and {:?}", a.shape(), b.shape())));
    }
    Ok((0..a.shape()[0]).map(|t| ([0, 1, 2, 3].map(|k| a.get(&[t, k])), [0, 1, 2, 3].map(|k| b.get(&[t, k])))).collect())
}

pub fn miou(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    let r = rows("miou", pred, gt)?;
    let mut total = 0.0;
    for (p, g) in &r {
        total += iou(*p, *g)?;
    }
    Ok(total / r.len() as f64)
}

/// Mean Euclidean distance between box centers.
pub fn ade(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    let r = rows("ade", pred, gt)?;
    Ok(r.iter().map(|(p, g)| (p[0] - g[0]).hypot(p[1] - g[1])).sum::<f64>() / r.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        assert_eq!(iou([1.0, 1.0, 2.0, 2.0], [10.0, 10.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!((iou([1.0, 1.0, 2.0, 2.0], [2.0, 1.0, 2.0, 2.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou([3.0, 3.0, 0.0, 0.0], [3.0, 3.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(iou([0.0, 0.0, -1.0, 1.0], [0.0, 0.0, 1.0, 1.0]).is_err());
        let a = Tensor::new([2, 4], vec![0.0, 0.0, 1.0, 1.0, 5.0, 5.0, 1.0, 1.0]).unwrap();
        let b = Tensor::new([2, 4], vec![3.0, 4.0, 1.0, 1.0, 8.0, 9.0, 1.0, 1.0]).unwrap();
        assert_eq!(ade(&a, &b).unwrap(), 5.0);
    }

    #[test]
    fn psnr_examples() {
        let a = Tensor::zeros(&[4, 4]);
        let b = Tensor::full(&[4, 4], 0.1);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn ssim_examples() {
        let a = Tensor::from_fn(&[2, 16, 16], |i| ((i * 37) % 101) as f64 / 100.0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let z = Tensor::zeros(&[16, 16]);
        let o = Tensor::ones(&[16, 16]);
        assert!(ssim(&z, &o).unwrap() < 0.05);
        assert!(ssim(&Tensor::zeros(&[10, 16]), &Tensor::zeros(&[10, 16])).is_err());
    }

    #[test]
    fn roi_mse_ignores_outside() {
        let y = Tensor::from_fn(&[1, 1, 8, 8], |i| i as f64 / 64.0);
        let mut p = y.clone();
        p.set(&[0, 0, 0, 0], 5.0);
        let bx = Tensor::new([1, 4], vec![5.0, 5.0, 4.0, 4.0]).unwrap();
        assert_eq!(roi_mse(&p, &y, &bx).unwrap(), 0.0);
        assert_eq!(crop_range(100.0, 0.1, 8), (7, 8));
    }
}
