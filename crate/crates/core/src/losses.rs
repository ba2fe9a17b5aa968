//! Frame MSE, Smooth-L1 box loss, the target-sensitive Gaussian loss and
//! their weighted sum.

use tavp_tensor::{Graph, Result, Tensor, TensorError, Var};

pub const SIGMA: f64 = 50.0;
pub const LAMBDA: f64 = 0.001;
/// Smooth-L1 knee, on normalized coordinates.
pub const SMOOTH_L1_BETA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda1: LAMBDA, lambda2: LAMBDA, sigma_x: SIGMA, sigma_y: SIGMA }
    }
}

fn same_shape(op: &'static str, a: &Var, b: &Var) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::Shape { op, msg: format!("{:?} vs {:?}", a.shape(), b.shape()) });
    }
    Ok(())
}

/// Mean squared error over every pixel of every frame.
pub fn video_loss(pred: &Var, target: &Var) -> Result<Var> {
    same_shape("video_loss", pred, target)?;
    pred.sub(target)?.square()?.mean_all()
}

/// Elementwise Smooth-L1 averaged over steps and coordinates.
pub fn motion_loss(pred: &Var, target: &Var) -> Result<Var> {
    same_shape("motion_loss", pred, target)?;
    pred.sub(target)?.smooth_l1(SMOOTH_L1_BETA)?.mean_all()
}

/// Weight field `[h, w]` for a pixel box `(cx, cy, bw, bh)`: exactly 1 inside
/// the open box, a Gaussian of the distance to the center outside it.
/// Pixel `(i, j)` sits at `x = j`, `y = i`.
pub fn gaussian_weight_field(bx: [f64; 4], h: usize, w: usize, sigma_x: f64, sigma_y: f64) -> Tensor {
    let [cx, cy, bw, bh] = bx;
    let mut data = Vec::with_capacity(h * w);
    for i in 0..h {
        let dy = i as f64 - cy;
        for j in 0..w {
            let dx = j as f64 - cx;
            if dx.abs() < bw / 2.0 && dy.abs() < bh / 2.0 {
                data.push(1.0);
            } else {
                data.push((-0.5 * (dx * dx / (sigma_x * sigma_x) + dy * dy / (sigma_y * sigma_y))).exp());
            }
        }
    }
    Tensor::new([h, w], data).expect("field shape")
}

/// Stack of weight fields `[B, T', 1, H, W]` for pixel boxes `[B, T', 4]`.
pub fn weight_fields(boxes_px: &Tensor, h: usize, w: usize, sigma_x: f64, sigma_y: f64) -> Result<Tensor> {
    let s = boxes_px.shape();
    if s.len() != 3 || s[2] != 4 {
        return Err(TensorError::Shape { op: "weight_fields", msg: format!("boxes {s:?}") });
    }
    let mut data = Vec::with_capacity(s[0] * s[1] * h * w);
    for b in 0..s[0] {
        for t in 0..s[1] {
            let bx = [0, 1, 2, 3].map(|k| boxes_px.get(&[b, t, k]));
            data.extend_from_slice(gaussian_weight_field(bx, h, w, sigma_x, sigma_y).data());
        }
    }
    Tensor::new([s[0], s[1], 1, h, w], data)
}

/// Target-sensitive Gaussian loss on frames `[B, T', C, H, W]` with pixel
/// boxes `[B, T', 4]`. The fields are constants: no gradient reaches the boxes.
pub fn tsgl(g: &Graph, pred: &Var, target: &Var, pred_boxes_px: &Tensor, gt_boxes_px: &Tensor, sigma_x: f64, sigma_y: f64) -> Result<Var> {
    same_shape("tsgl", pred, target)?;
    let s = pred.shape();
    if s.len() != 5 || pred_boxes_px.shape() != [s[0], s[1], 4] || gt_boxes_px.shape() != [s[0], s[1], 4] {
        return Err(TensorError::Shape {
            op: "tsgl",
            msg: format!("frames {s:?}, boxes {:?} / {:?}", pred_boxes_px.shape(), gt_boxes_px.shape()),
        });
    }
    let (h, w) = (s[3], s[4]);
    let wp = g.constant(weight_fields(pred_boxes_px, h, w, sigma_x, sigma_y)?);
    let wg = g.constant(weight_fields(gt_boxes_px, h, w, sigma_x, sigma_y)?);
    pred.mul(&wp)?.sub(&target.mul(&wg)?)?.square()?.mean_all()
}

#[derive(Debug, Clone)]
pub struct LossParts {
    pub video: Option<Var>,
    pub motion: Option<Var>,
    pub gaussian: Option<Var>,
}

impl LossParts {
    pub fn values(&self) -> [f64; 3] {
        [&self.video, &self.motion, &self.gaussian].map(|v| v.as_ref().map_or(0.0, |v| v.item()))
    }
}

/// `video + λ1 motion + λ2 gaussian`, skipping absent parts.
pub fn total_loss(parts: &LossParts, lambda1: f64, lambda2: f64) -> Result<Var> {
    let mut terms = Vec::new();
    if let Some(v) = &parts.video {
        terms.push(v.clone());
    }
    if let Some(m) = &parts.motion {
        terms.push(m.scale(lambda1)?);
    }
    if let Some(gl) = &parts.gaussian {
        terms.push(gl.scale(lambda2)?);
    }
    let mut it = terms.into_iter();
    let first = it.next().ok_or_else(|| TensorError::Shape { op: "total_loss", msg: "no loss terms".into() })?;
    it.try_fold(first, |acc, t| acc.add(&t))
}
