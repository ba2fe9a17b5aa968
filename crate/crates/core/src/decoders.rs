//! Video decoder (channel projection plus transposed convolutions) and
//! autoregressive motion decoder.

use tavp_tensor::{Result, Session, Var};

use crate::embedding::{dims5, fold, BoxEmbed};
use crate::model::ModelConfig;
use crate::nn::{causal_mask, Attention, Builder, Conv2d, ConvTranspose2d, GroupNorm, LayerNorm, Linear, Mlp};

/// `(stride, kernel)` per transposed conv; stride-2 layers double the extent.
const UPSAMPLE: [(usize, usize); 4] = [(1, 3), (2, 4), (1, 3), (2, 4)];
pub const MOTION_LAYERS: usize = 4;
const HEAD_INIT: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct VideoDecoder {
    pub proj: Linear,
    pub convs: Vec<ConvTranspose2d>,
    pub norms: Vec<GroupNorm>,
    pub head: Conv2d,
    pub frames_out: usize,
    pub c_dec: usize,
    pub channels: usize,
}

impl VideoDecoder {
    pub fn new(b: &mut Builder, cfg: &ModelConfig) -> Result<Self> {
        let proj = Linear::new(&mut b.scope("proj"), cfg.width(), cfg.frames_out * cfg.c_dec, true)?;
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        for (i, &(stride, k)) in UPSAMPLE.iter().enumerate() {
            let mut l = b.scope(&format!("layer{i}"));
            convs.push(ConvTranspose2d::new(&mut l.scope("deconv"), cfg.c_dec, cfg.c_dec, k, stride, 1)?);
            norms.push(GroupNorm::new(&mut l.scope("norm"), cfg.c_dec)?);
        }
        let head = Conv2d::new(&mut b.scope("head"), cfg.c_dec, cfg.channels, 1, 1, 0)?;
        Ok(VideoDecoder { proj, convs, norms, head, frames_out: cfg.frames_out, c_dec: cfg.c_dec, channels: cfg.channels })
    }

    /// `[B, T, C_hid, h, w] -> [B, T', C, 4h, 4w]`, pixels in (0, 1).
    pub fn forward(&self, s: &Session, features: &Var) -> Result<Var> {
        let [b, _, _, h, w] = dims5(features)?;
        let (tp, cd) = (self.frames_out, self.c_dec);
        let x = self.proj.forward(s, &fold(features)?)?;
        let mut x = x.reshape(&[b, h * w, tp, cd])?.permute(&[0, 2, 3, 1])?.reshape(&[b * tp, cd, h, w])?;
        for (conv, norm) in self.convs.iter().zip(&self.norms) {
            x = norm.forward(s, &conv.forward(s, &x)?)?.gelu()?;
        }
        let y = self.head.forward(s, &x)?.sigmoid()?;
        let (hh, ww) = (y.shape()[2], y.shape()[3]);
        y.reshape(&[b, tp, self.channels, hh, ww])
    }
}

#[derive(Debug, Clone)]
pub struct DecoderLayer {
    pub ln_self: LayerNorm,
    pub self_attn: Attention,
    pub ln_cross: LayerNorm,
    pub cross_attn: Attention,
    pub ln_mlp: LayerNorm,
    pub mlp: Mlp,
}

#[derive(Debug, Clone)]
pub struct MotionDecoder {
    pub embed: BoxEmbed,
    pub ln_memory: LayerNorm,
    pub layers: Vec<DecoderLayer>,
    pub ln_out: LayerNorm,
    pub head: Linear,
}

pub struct MotionPass {
    /// `[B, k, 4]` normalized boxes.
    pub boxes: Var,
    /// Causal self-attention weights per layer, `[B, H, k, k]`.
    pub self_weights: Vec<Var>,
}

impl MotionDecoder {
    pub fn new(b: &mut Builder, cfg: &ModelConfig) -> Result<Self> {
        let width = cfg.width();
        let mut layers = Vec::new();
        for i in 0..MOTION_LAYERS {
            let mut l = b.scope(&format!("layer{i}"));
            layers.push(DecoderLayer {
                ln_self: LayerNorm::new(&mut l.scope("ln_self"), width)?,
                self_attn: Attention::new(&mut l.scope("self_attn"), width, cfg.heads)?,
                ln_cross: LayerNorm::new(&mut l.scope("ln_cross"), width)?,
                cross_attn: Attention::new(&mut l.scope("cross_attn"), width, cfg.heads)?,
                ln_mlp: LayerNorm::new(&mut l.scope("ln_mlp"), width)?,
                mlp: Mlp::new(&mut l.scope("mlp"), width, cfg.mlp_ratio * width)?,
            });
        }
        let mut hb = b.scope("head");
        let head = Linear {
            weight: hb.uniform("weight", &[width, 4], HEAD_INIT)?,
            bias: Some(hb.uniform("bias", &[4], HEAD_INIT)?),
        };
        Ok(MotionDecoder {
            embed: BoxEmbed::new(&mut b.scope("embed"), width)?,
            ln_memory: LayerNorm::new(&mut b.scope("ln_memory"), width)?,
            layers,
            ln_out: LayerNorm::new(&mut b.scope("ln_out"), width)?,
            head,
        })
    }

    /// One parallel pass over query boxes `[B, k, 4]`; output `k` predicts the
    /// box following query `k`, as a delta on it with non-negative size.
    pub fn run(&self, s: &Session, memory: &Var, queries: &Var) -> Result<MotionPass> {
        let k = queries.shape()[1];
        let mem = self.ln_memory.forward(s, memory)?;
        let mask = s.graph().constant(causal_mask(k));
        let mut x = self.embed.forward(s, queries)?;
        let mut self_weights = Vec::new();
        for l in &self.layers {
            let q = l.ln_self.forward(s, &x)?;
            let o = l.self_attn.forward(s, &q, &q, Some(&mask))?;
            self_weights.push(o.weights);
            x = x.add(&o.out)?;
            let q = l.ln_cross.forward(s, &x)?;
            x = x.add(&l.cross_attn.forward(s, &q, &mem, None)?.out)?;
            x = x.add(&l.mlp.forward(s, &l.ln_mlp.forward(s, &x)?)?)?;
        }
        let raw = queries.add(&self.head.forward(s, &self.ln_out.forward(s, &x)?)?)?;
        let centers = raw.slice(2, 0, 2)?;
        let sizes = raw.slice(2, 2, 4)?.relu()?;
        Ok(MotionPass { boxes: Var::concat(&[&centers, &sizes], 2)?, self_weights })
    }

    /// Predict `steps` future boxes from the last observed box `[B, 1, 4]`.
    /// With a teacher `[B, steps, 4]` this is one teacher-forced pass;
    /// otherwise each prediction is fed back as the next query.
    pub fn decode(&self, s: &Session, memory: &Var, last: &Var, teacher: Option<&Var>, steps: usize) -> Result<Var> {
        if let Some(t) = teacher {
            if t.shape()[1] != steps {
                return Err(tavp_tensor::TensorError::Shape {
                    op: "decode_motion",
                    msg: format!("teacher has {} steps, expected {steps}", t.shape()[1]),
                });
            }
            let queries = if steps > 1 { Var::concat(&[last, &t.slice(1, 0, steps - 1)?], 1)? } else { last.clone() };
            return Ok(self.run(s, memory, &queries)?.boxes);
        }
        let mut queries = last.clone();
        let mut outputs = Vec::with_capacity(steps);
        for k in 0..steps {
            let pass = self.run(s, memory, &queries)?;
            let next = pass.boxes.slice(1, k, k + 1)?;
            outputs.push(next.clone());
            if k + 1 < steps {
                queries = Var::concat(&[&queries, &next], 1)?;
            }
        }
        Var::concat(&outputs.iter().collect::<Vec<_>>(), 1)
    }
}

/// Last row of `[B, T, 4]` as `[B, 1, 4]`.
pub fn last_box(boxes: &Var) -> Result<Var> {
    let t = boxes.shape()[1];
    boxes.slice(1, t - 1, t)
}
