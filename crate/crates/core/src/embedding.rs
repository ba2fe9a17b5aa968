//! Frame and box embeddings, plus the fold between the frame-major feature
//! map and the token grid.

use tavp_tensor::{Graph, Result, Session, Tensor, Var};

use crate::nn::{Builder, Conv2d, GroupNorm, Linear};

/// Downsampling factor of the spatial embedder.
pub const PATCH: usize = 4;
const STRIDES: [usize; 4] = [2, 1, 2, 1];

/// Four 3x3 conv layers, each followed by group norm and GELU.
#[derive(Debug, Clone)]
pub struct SpatialEmbed {
    pub convs: Vec<Conv2d>,
    pub norms: Vec<GroupNorm>,
}

impl SpatialEmbed {
    pub fn new(b: &mut Builder, channels: usize, c_hid: usize) -> Result<Self> {
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        for (i, &stride) in STRIDES.iter().enumerate() {
            let mut l = b.scope(&format!("layer{i}"));
            let cin = if i == 0 { channels } else { c_hid };
            convs.push(Conv2d::new(&mut l.scope("conv"), cin, c_hid, 3, stride, 1)?);
            norms.push(GroupNorm::new(&mut l.scope("norm"), c_hid)?);
        }
        Ok(SpatialEmbed { convs, norms })
    }

    /// `[N, C, H, W] -> [N, C_hid, H/4, W/4]`; frames are independent.
    pub fn forward(&self, s: &Session, x: &Var) -> Result<Var> {
        let mut h = x.clone();
        for (conv, norm) in self.convs.iter().zip(&self.norms) {
            h = norm.forward(s, &conv.forward(s, &h)?)?.gelu()?;
        }
        Ok(h)
    }
}

/// Sinusoidal positional encoding `[n, width]`:
/// `PE[t, 2i] = sin(t / 10000^(2i/width))`, `PE[t, 2i+1] = cos(t / 10000^(2i/width))`.
pub fn sinusoid(n: usize, width: usize) -> Tensor {
    Tensor::from_fn(&[n, width], |idx| {
        let (t, c) = (idx / width, idx % width);
        let even = (c - c % 2) as f64;
        let angle = t as f64 / 10000f64.powf(even / width as f64);
        if c % 2 == 0 { angle.sin() } else { angle.cos() }
    })
}

/// Linear map of normalized boxes plus fixed temporal positional encoding.
#[derive(Debug, Clone)]
pub struct BoxEmbed {
    pub linear: Linear,
    pub width: usize,
}

impl BoxEmbed {
    pub fn new(b: &mut Builder, width: usize) -> Result<Self> {
        Ok(BoxEmbed { linear: Linear::new(b, 4, width, true)?, width })
    }

    /// `[B, T, 4]` normalized boxes -> `[B, T, width]`.
    pub fn forward(&self, s: &Session, boxes: &Var) -> Result<Var> {
        let t = boxes.shape()[boxes.rank() - 2];
        let pe = s.graph().constant(sinusoid(t, self.width));
        self.linear.forward(s, boxes)?.add(&pe)
    }
}

/// Divide `(cx, w)` by the frame width and `(cy, h)` by its height.
pub fn normalize_boxes(g: &Graph, boxes: &Var, height: usize, width: usize) -> Result<Var> {
    let (w, h) = (1.0 / width as f64, 1.0 / height as f64);
    boxes.mul(&g.constant(Tensor::new([4], vec![w, h, w, h])?))
}

pub fn denormalize_boxes(g: &Graph, boxes: &Var, height: usize, width: usize) -> Result<Var> {
    let (w, h) = (width as f64, height as f64);
    boxes.mul(&g.constant(Tensor::new([4], vec![w, h, w, h])?))
}

/// `[B, T, C_hid, h, w] -> [B, h*w, T*C_hid]`; channel index is `t*C_hid + c`.
pub fn fold(z: &Var) -> Result<Var> {
    let [b, t, c, h, w] = dims5(z)?;
    z.reshape(&[b, t, c, h * w])?.permute(&[0, 3, 1, 2])?.reshape(&[b, h * w, t * c])
}

/// Inverse of [`fold`].
pub fn unfold(f: &Var, frames: usize, h: usize, w: usize) -> Result<Var> {
    let b = f.shape()[0];
    let c = f.shape()[2] / frames;
    f.reshape(&[b, h * w, frames, c])?.permute(&[0, 2, 3, 1])?.reshape(&[b, frames, c, h, w])
}

pub(crate) fn dims5(x: &Var) -> Result<[usize; 5]> {
    x.shape().try_into().map_err(|_| tavp_tensor::TensorError::Shape {
        op: "fold",
        msg: format!("expected rank 5, got {:?}", x.shape()),
    })
}
