//! Messenger tokens shared between the video and motion branches:
//! initialization, collecting (joining a branch's attention) and passing
//! (mixing ROI and state tokens between layers).

use tavp_tensor::{Graph, ParamId, Result, Session, Tensor, Var};

use crate::nn::{Builder, LayerNorm, Linear, Mlp};
use crate::sta::{Sta, SpatialOutput};

pub const TOKEN_STD: f64 = 0.02;

/// Averaging weights over the `h*w` feature cells for one pixel-space box
/// `(cx, cy, w, h)` on a `frame_h x frame_w` frame.
///
/// The box is scaled to feature coordinates and clamped to the map. A cell
/// `(i, j)` is selected when its center `(j + 0.5, i + 0.5)` lies strictly
/// inside the box; if none does, the cell containing the box center is used.
pub fn roi_weights(bx: [f64; 4], frame_h: usize, frame_w: usize, h: usize, w: usize) -> Vec<f64> {
    let (sx, sy) = (w as f64 / frame_w as f64, h as f64 / frame_h as f64);
    let (cx, cy, bw, bh) = (bx[0] * sx, bx[1] * sy, bx[2] * sx, bx[3] * sy);
    let x0 = (cx - bw / 2.0).clamp(0.0, w as f64);
    let x1 = (cx + bw / 2.0).clamp(0.0, w as f64);
    let y0 = (cy - bh / 2.0).clamp(0.0, h as f64);
    let y1 = (cy + bh / 2.0).clamp(0.0, h as f64);
    let mut out = vec![0.0; h * w];
    let mut count = 0usize;
    for i in 0..h {
        let yc = i as f64 + 0.5;
        if !(y0 < yc && yc < y1) {
            continue;
        }
        for j in 0..w {
            let xc = j as f64 + 0.5;
            if x0 < xc && xc < x1 {
                out[i * w + j] = 1.0;
                count += 1;
            }
        }
    }
    if count == 0 {
        let j = (((x0 + x1) / 2.0).floor() as usize).min(w - 1);
        let i = (((y0 + y1) / 2.0).floor() as usize).min(h - 1);
        out[i * w + j] = 1.0;
        count = 1;
    }
    let inv = 1.0 / count as f64;
    out.iter_mut().for_each(|v| *v *= inv);
    out
}

/// Average-pool `z` `[B, T, C_hid, h, w]` inside each frame's box -> `[B, T, C_hid]`.
/// Selection is a constant of the boxes' values; no gradient reaches the boxes.
pub fn roi_pool(g: &Graph, z: &Var, boxes_px: &Tensor, frame_h: usize, frame_w: usize) -> Result<Var> {
    let [b, t, c, h, w] = crate::embedding::dims5(z)?;
    let mut sel = Vec::with_capacity(b * t * h * w);
    for bi in 0..b {
        for ti in 0..t {
            let bx = [0, 1, 2, 3].map(|k| boxes_px.get(&[bi, ti, k]));
            sel.extend(roi_weights(bx, frame_h, frame_w, h, w));
        }
    }
    let p = g.constant(Tensor::new([b, t, 1, h * w], sel)?);
    let cells = z.reshape(&[b, t, c, h * w])?.permute(&[0, 1, 3, 2])?;
    p.matmul(&cells)?.reshape(&[b, t, c])
}

/// ROI tokens: pooled features of all frames concatenated (`T*C_hid = C'`)
/// and mapped by `M` independent linear maps, stored side by side.
#[derive(Debug, Clone)]
pub struct RoiInit {
    pub fc: Linear,
    pub count: usize,
    pub width: usize,
}

impl RoiInit {
    pub fn new(b: &mut Builder, width: usize, count: usize) -> Result<Self> {
        Ok(RoiInit { fc: Linear::new(b, width, count * width, true)?, count, width })
    }

    pub fn forward(&self, s: &Session, z: &Var, boxes_px: &Tensor, frame_h: usize, frame_w: usize) -> Result<Var> {
        let r = roi_pool(s.graph(), z, boxes_px, frame_h, frame_w)?;
        let b = r.shape()[0];
        let flat = r.reshape(&[b, self.width])?;
        self.fc.forward(s, &flat)?.reshape(&[b, self.count, self.width])
    }
}

/// State tokens: the flattened normalized trajectory `[B, 4T]` through `N`
/// independent two-layer maps `4T -> C' -> C'` with GELU between.
#[derive(Debug, Clone)]
pub struct StateInit {
    pub fc1: Linear,
    pub w2: ParamId,
    pub b2: ParamId,
    pub count: usize,
    pub width: usize,
}

impl StateInit {
    pub fn new(b: &mut Builder, frames: usize, width: usize, count: usize) -> Result<Self> {
        let fc1 = Linear::new(&mut b.scope("fc1"), 4 * frames, count * width, true)?;
        let bound = 1.0 / (width as f64).sqrt();
        let w2 = b.uniform("fc2.weight", &[count, width, width], bound)?;
        let b2 = b.uniform("fc2.bias", &[count, 1, width], bound)?;
        Ok(StateInit { fc1, w2, b2, count, width })
    }

    /// `[B, T, 4]` normalized boxes -> `[B, N, C']`.
    pub fn forward(&self, s: &Session, boxes: &Var) -> Result<Var> {
        let b = boxes.shape()[0];
        let flat = boxes.reshape(&[b, boxes.shape()[1] * 4])?;
        let h = self.fc1.forward(s, &flat)?.gelu()?;
        let h = h.reshape(&[b, self.count, self.width])?.permute(&[1, 0, 2])?;
        let out = h.matmul(&s.param(self.w2))?.add(&s.param(self.b2))?;
        out.permute(&[1, 0, 2])
    }
}

/// Learned free tokens `[count, C']`, the "random" initialization source.
#[derive(Debug, Clone)]
pub struct FreeTokens {
    pub tokens: ParamId,
}

impl FreeTokens {
    pub fn new(b: &mut Builder, count: usize, width: usize) -> Result<Self> {
        Ok(FreeTokens { tokens: b.normal("tokens", &[count, width], TOKEN_STD)? })
    }

    pub fn forward(&self, s: &Session, batch: usize) -> Result<Var> {
        let t = s.param(self.tokens);
        let shape = [batch, t.shape()[0], t.shape()[1]];
        s.graph().constant(Tensor::zeros(&shape)).add(&t)
    }
}

/// Motion-branch attention over `[S; T_S]`; same mechanics as the spatial
/// attention of the video branch, without the temporal gate.
#[derive(Debug, Clone)]
pub struct MotionAttention(pub Sta);

impl MotionAttention {
    pub fn new(b: &mut Builder, width: usize, heads: usize) -> Result<Self> {
        Ok(MotionAttention(Sta::new(b, width, heads, false)?))
    }

    pub fn collect_motion(&self, s: &Session, motion: &Var, t_s: Option<&Var>, collect: bool) -> Result<SpatialOutput> {
        self.0.spatial_attention(s, motion, t_s, collect)
    }
}

/// Message passing over `[T_R; T_S]`: a token-mixing MLP across the
/// `M + N` messengers, then a channel MLP `C' -> 4C' -> C'` shared across
/// rows, each pre-normalized and residual.
#[derive(Debug, Clone)]
pub struct MessagePass {
    pub ln_tokens: LayerNorm,
    pub tokens: Mlp,
    pub ln_channels: LayerNorm,
    pub channels: Mlp,
    pub m: usize,
    pub n: usize,
}

impl MessagePass {
    pub fn new(b: &mut Builder, width: usize, m: usize, n: usize, mlp_ratio: usize) -> Result<Self> {
        let k = m + n;
        Ok(MessagePass {
            ln_tokens: LayerNorm::new(&mut b.scope("ln_tokens"), width)?,
            tokens: Mlp::new(&mut b.scope("tokens"), k, mlp_ratio * k)?,
            ln_channels: LayerNorm::new(&mut b.scope("ln_channels"), width)?,
            channels: Mlp::new(&mut b.scope("channels"), width, mlp_ratio * width)?,
            m,
            n,
        })
    }

    pub fn pass_messages(&self, s: &Session, t_r: &Var, t_s: &Var) -> Result<(Var, Var)> {
        let x = Var::concat(&[t_r, t_s], 1)?;
        let mixed = self.tokens.forward(s, &self.ln_tokens.forward(s, &x)?.transpose(1, 2)?)?;
        let y = x.add(&mixed.transpose(1, 2)?)?;
        let z = y.add(&self.channels.forward(s, &self.ln_channels.forward(s, &y)?)?)?;
        Ok((z.slice(1, 0, self.m)?, z.slice(1, self.m, self.m + self.n)?))
    }
}
