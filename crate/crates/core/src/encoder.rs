//! The two-branch encoder: per layer, the video branch (STA + MLP), the
//! motion branch (MHSA + MLP), then message passing.

use tavp_tensor::{ParamId, Result, Session, Var};

use crate::embedding::{fold, unfold};
use crate::ism::{MessagePass, MotionAttention};
use crate::model::ModelConfig;
use crate::nn::{Builder, LayerNorm, Mlp};
use crate::sta::Sta;

pub const POS_STD: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct VideoLayer {
    pub sta: Sta,
    pub ln: LayerNorm,
    pub mlp: Mlp,
}

#[derive(Debug, Clone)]
pub struct MotionLayer {
    pub attn: MotionAttention,
    pub ln: LayerNorm,
    pub mlp: Mlp,
}

/// Everything that flows from one layer to the next.
#[derive(Debug, Clone)]
pub struct EncoderState {
    /// Token grid `[B, hw, C']`.
    pub video: Option<Var>,
    /// Motion states `[B, T, C']`.
    pub motion: Option<Var>,
    /// ROI messengers `[B, M, C']`.
    pub roi: Option<Var>,
    /// State messengers `[B, N, C']`.
    pub state: Option<Var>,
}

#[derive(Debug, Clone)]
pub struct EncoderOutput {
    /// Unfolded features `[B, T, C_hid, h, w]`.
    pub features: Option<Var>,
    /// `[B, T, C']`
    pub motion: Option<Var>,
    pub last: EncoderState,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub video: Vec<VideoLayer>,
    pub motion: Vec<MotionLayer>,
    pub pass: Vec<MessagePass>,
    /// Learned per-cell embedding `[hw, C']`.
    pub pos: Option<ParamId>,
    pub collect: bool,
    pub frames: usize,
    pub grid: (usize, usize),
}

impl Encoder {
    pub fn new(b: &mut Builder, cfg: &ModelConfig) -> Result<Self> {
        let width = cfg.width();
        let (h, w) = cfg.grid();
        let hidden = cfg.mlp_ratio * width;
        let ab = &cfg.ablation;
        let mut video = Vec::new();
        let mut motion = Vec::new();
        let mut pass = Vec::new();
        for l in 0..cfg.depth {
            let mut lb = b.scope(&format!("layer{l}"));
            if ab.video {
                let mut v = lb.scope("video");
                video.push(VideoLayer {
                    sta: Sta::new(&mut v.scope("sta"), width, cfg.heads, ab.sta)?,
                    ln: LayerNorm::new(&mut v.scope("ln"), width)?,
                    mlp: Mlp::new(&mut v.scope("mlp"), width, hidden)?,
                });
            }
            if ab.motion {
                let mut m = lb.scope("motion");
                motion.push(MotionLayer {
                    attn: MotionAttention::new(&mut m.scope("attn"), width, cfg.heads)?,
                    ln: LayerNorm::new(&mut m.scope("ln"), width)?,
                    mlp: Mlp::new(&mut m.scope("mlp"), width, hidden)?,
                });
            }
            if ab.ism.enabled && ab.ism.pass {
                pass.push(MessagePass::new(&mut lb.scope("pass"), width, ab.ism.m, ab.ism.n, cfg.mlp_ratio)?);
            }
        }
        let pos = if ab.video && cfg.pos_embed { Some(b.normal("pos", &[h * w, width], POS_STD)?) } else { None };
        Ok(Encoder { video, motion, pass, pos, collect: ab.ism.enabled && ab.ism.collect, frames: cfg.frames_in, grid: (h, w) })
    }

    pub fn depth(&self) -> usize {
        self.video.len().max(self.motion.len())
    }

    /// Fold `[B, T, C_hid, h, w]` into the token grid and add the position embedding.
    pub fn tokens(&self, s: &Session, z: &Var) -> Result<Var> {
        let f = fold(z)?;
        match self.pos {
            Some(p) => f.add(&s.param(p)),
            None => Ok(f),
        }
    }

    pub fn video_step(&self, s: &Session, l: usize, f: &Var, roi: Option<&Var>) -> Result<(Var, Option<Var>)> {
        let layer = &self.video[l];
        let (fp, collected) = layer.sta.forward(s, f, roi, self.collect)?;
        let f_hat = fp.add(f)?;
        let f_next = f_hat.add(&layer.mlp.forward(s, &layer.ln.forward(s, &f_hat)?)?)?;
        let roi_next = match (roi, collected) {
            (Some(r), Some(c)) => Some(r.add(&c)?),
            (r, _) => r.cloned(),
        };
        Ok((f_next, roi_next))
    }

    pub fn motion_step(&self, s: &Session, l: usize, m: &Var, state: Option<&Var>) -> Result<(Var, Option<Var>)> {
        let layer = &self.motion[l];
        let o = layer.attn.collect_motion(s, m, state, self.collect)?;
        let m_hat = o.a_s.add(m)?;
        let m_next = m_hat.add(&layer.mlp.forward(s, &layer.ln.forward(s, &m_hat)?)?)?;
        let state_next = match (state, o.messengers) {
            (Some(t), Some(c)) => Some(t.add(&c)?),
            (t, _) => t.cloned(),
        };
        Ok((m_next, state_next))
    }

    pub fn layer(&self, s: &Session, l: usize, st: EncoderState) -> Result<EncoderState> {
        let (video, mut roi) = match &st.video {
            Some(f) => {
                let (f, r) = self.video_step(s, l, f, st.roi.as_ref())?;
                (Some(f), r)
            }
            None => (None, st.roi.clone()),
        };
        let (motion, mut state) = match &st.motion {
            Some(m) => {
                let (m, t) = self.motion_step(s, l, m, st.state.as_ref())?;
                (Some(m), t)
            }
            None => (None, st.state.clone()),
        };
        if let (Some(p), Some(r), Some(t)) = (self.pass.get(l), &roi, &state) {
            let (r2, t2) = p.pass_messages(s, r, t)?;
            roi = Some(r2);
            state = Some(t2);
        }
        Ok(EncoderState { video, motion, roi, state })
    }

    /// `z`: `[B, T, C_hid, h, w]`; `s0`: `[B, T, C']`; messengers already initialized.
    pub fn encode(&self, s: &Session, z: Option<&Var>, s0: Option<&Var>, roi: Option<Var>, state: Option<Var>) -> Result<EncoderOutput> {
        let video = z.map(|z| self.tokens(s, z)).transpose()?;
        let mut st = EncoderState { video, motion: s0.cloned(), roi, state };
        for l in 0..self.depth() {
            st = self.layer(s, l, st)?;
        }
        let features = st.video.as_ref().map(|f| unfold(f, self.frames, self.grid.0, self.grid.1)).transpose()?;
        Ok(EncoderOutput { features, motion: st.motion.clone(), last: st })
    }
}
