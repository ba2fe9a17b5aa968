use tavp_tensor::{Graph, ParamStore, Session, Var};

use crate::ablation::{Ablation, RoiSource, StateSource};
use crate::decoders::{last_box, MotionDecoder, VideoDecoder};
use crate::embedding::{normalize_boxes, BoxEmbed, SpatialEmbed, PATCH};
use crate::encoder::{Encoder, EncoderOutput};
use crate::error::{Error, Result};
use crate::ism::{FreeTokens, RoiInit, StateInit};
use crate::nn::{group_size, init_rng, Builder};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Observed frames `T`.
    pub frames_in: usize,
    /// Predicted frames `T'`.
    pub frames_out: usize,
    pub c_hid: usize,
    pub c_dec: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    /// Learned per-cell embedding on the token grid.
    pub pos_embed: bool,
    pub ablation: Ablation,
}

impl ModelConfig {
    /// 256x256 RGB, 8 -> 8, encoder width 512, depth 6, 8 ROI / 2 state tokens.
    pub fn full() -> Self {
        ModelConfig {
            channels: 3,
            height: 256,
            width: 256,
            frames_in: 8,
            frames_out: 8,
            c_hid: 64,
            c_dec: 64,
            depth: 6,
            heads: 8,
            mlp_ratio: 4,
            pos_embed: true,
            ablation: Ablation::full(8, 2),
        }
    }

    /// 32x32 grayscale, 4 -> 4, width 32, depth 2.
    pub fn desk() -> Self {
        ModelConfig {
            channels: 1,
            height: 32,
            width: 32,
            frames_in: 4,
            frames_out: 4,
            c_hid: 8,
            c_dec: 16,
            depth: 2,
            heads: 4,
            mlp_ratio: 4,
            pos_embed: true,
            ablation: Ablation::full(4, 1),
        }
    }

    /// Encoder width `C' = T * C_hid`.
    pub fn width(&self) -> usize {
        self.frames_in * self.c_hid
    }

    /// Feature map extent `(H/4, W/4)`.
    pub fn grid(&self) -> (usize, usize) {
        (self.height / PATCH, self.width / PATCH)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("data.channels", self.channels),
            ("data.frames_in", self.frames_in),
            ("data.frames_out", self.frames_out),
            ("model.c_hid", self.c_hid),
            ("model.c_dec", self.c_dec),
            ("model.depth", self.depth),
            ("model.heads", self.heads),
            ("model.mlp_ratio", self.mlp_ratio),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        for (field, v) in [("data.height", self.height), ("data.width", self.width)] {
            if v == 0 || v % PATCH != 0 {
                return Err(Error::config(field, format!("{v} is not a positive multiple of {PATCH}")));
            }
        }
        if !self.width().is_multiple_of(self.heads) {
            return Err(Error::config(
                "model.heads",
                format!("{} heads do not divide the encoder width {}", self.heads, self.width()),
            ));
        }
        for (field, c) in [("model.c_hid", self.c_hid), ("model.c_dec", self.c_dec)] {
            if c % group_size(c) != 0 {
                return Err(Error::config(field, format!("{c} is not a multiple of the group size {}", group_size(c))));
            }
        }
        self.ablation.check().map_err(|m| Error::config("ablation", m))
    }
}

/// Observed clip: frames `[B, T, C, H, W]` and pixel boxes `[B, T, 4]` (cx, cy, w, h).
#[derive(Debug, Clone)]
pub struct Inputs {
    pub frames: Var,
    pub boxes: Var,
}

#[derive(Debug, Clone)]
pub struct Outputs {
    /// `[B, T', C, H, W]`
    pub frames: Option<Var>,
    /// Normalized boxes `[B, T', 4]`.
    pub boxes: Option<Var>,
    pub encoded: EncoderOutput,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub spatial: Option<SpatialEmbed>,
    pub box_embed: Option<BoxEmbed>,
    pub roi_init: Option<RoiInit>,
    pub roi_free: Option<FreeTokens>,
    pub state_init: Option<StateInit>,
    pub state_free: Option<FreeTokens>,
    pub encoder: Encoder,
    pub video_decoder: Option<VideoDecoder>,
    pub motion_decoder: Option<MotionDecoder>,
}

impl Model {
    /// Register all parameters, initialized deterministically from `seed`.
    pub fn build(cfg: &ModelConfig, seed: u64) -> Result<(Model, ParamStore)> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = init_rng(seed);
        let mut b = Builder::new(&mut store, &mut rng);
        let ab = cfg.ablation;
        let width = cfg.width();
        let (m, n) = ab.ism.counts();
        let spatial = ab.video.then(|| SpatialEmbed::new(&mut b.scope("embed.spatial"), cfg.channels, cfg.c_hid)).transpose()?;
        let box_embed = ab.motion.then(|| BoxEmbed::new(&mut b.scope("embed.boxes"), width)).transpose()?;
        let (mut roi_init, mut roi_free, mut state_init, mut state_free) = (None, None, None, None);
        if ab.ism.enabled {
            match ab.ism.init_roi {
                RoiSource::Roi => roi_init = Some(RoiInit::new(&mut b.scope("ism.roi"), width, m)?),
                RoiSource::Random => roi_free = Some(FreeTokens::new(&mut b.scope("ism.roi"), m, width)?),
            }
            match ab.ism.init_state {
                StateSource::States => state_init = Some(StateInit::new(&mut b.scope("ism.state"), cfg.frames_in, width, n)?),
                StateSource::Random => state_free = Some(FreeTokens::new(&mut b.scope("ism.state"), n, width)?),
            }
        }
        let encoder = Encoder::new(&mut b.scope("encoder"), cfg)?;
        let video_decoder = ab.video.then(|| VideoDecoder::new(&mut b.scope("decoder.video"), cfg)).transpose()?;
        let motion_decoder = ab.motion.then(|| MotionDecoder::new(&mut b.scope("decoder.motion"), cfg)).transpose()?;
        let model = Model {
            cfg: cfg.clone(),
            spatial,
            box_embed,
            roi_init,
            roi_free,
            state_init,
            state_free,
            encoder,
            video_decoder,
            motion_decoder,
        };
        Ok((model, store))
    }

    fn check_inputs(&self, inputs: &Inputs) -> Result<usize> {
        let c = &self.cfg;
        let f = inputs.frames.shape();
        let want = [f.first().copied().unwrap_or(0), c.frames_in, c.channels, c.height, c.width];
        if f != want {
            return Err(Error::Input(format!("frames have shape {f:?}, model expects {want:?}")));
        }
        let bx = inputs.boxes.shape();
        if bx != [want[0], c.frames_in, 4] {
            return Err(Error::Input(format!("boxes have shape {bx:?}, model expects {:?}", [want[0], c.frames_in, 4])));
        }
        if !inputs.boxes.value().all_finite() {
            return Err(Error::Input("non-finite input box".into()));
        }
        Ok(want[0])
    }

    /// Spatial features `[B, T, C_hid, h, w]`.
    pub fn embed_frames(&self, s: &Session, frames: &Var) -> Result<Option<Var>> {
        let Some(sp) = &self.spatial else { return Ok(None) };
        let c = &self.cfg;
        let b = frames.shape()[0];
        let x = frames.reshape(&[b * c.frames_in, c.channels, c.height, c.width])?;
        let z = sp.forward(s, &x)?;
        let (h, w) = c.grid();
        Ok(Some(z.reshape(&[b, c.frames_in, c.c_hid, h, w])?))
    }

    /// Initial ROI and state messengers, when ISM is on.
    pub fn messengers(&self, s: &Session, z: Option<&Var>, boxes_px: &Var, boxes: &Var) -> Result<(Option<Var>, Option<Var>)> {
        let c = &self.cfg;
        let b = boxes.shape()[0];
        let roi = match (&self.roi_init, &self.roi_free, z) {
            (Some(init), _, Some(z)) => Some(init.forward(s, z, boxes_px.value(), c.height, c.width)?),
            (_, Some(free), _) => Some(free.forward(s, b)?),
            _ => None,
        };
        let state = match (&self.state_init, &self.state_free) {
            (Some(init), _) => Some(init.forward(s, boxes)?),
            (_, Some(free)) => Some(free.forward(s, b)?),
            _ => None,
        };
        Ok((roi, state))
    }

    /// Full forward pass. `teacher` (normalized future boxes `[B, T', 4]`)
    /// selects teacher-forced motion decoding; without it the motion decoder
    /// runs autoregressively.
    pub fn forward(&self, s: &Session, inputs: &Inputs, teacher: Option<&Var>) -> Result<Outputs> {
        self.check_inputs(inputs)?;
        let c = &self.cfg;
        let g = s.graph();
        let boxes = normalize_boxes(g, &inputs.boxes, c.height, c.width)?;
        let z = self.embed_frames(s, &inputs.frames)?;
        let s0 = self.box_embed.as_ref().map(|e| e.forward(s, &boxes)).transpose()?;
        let (roi, state) = self.messengers(s, z.as_ref(), &inputs.boxes, &boxes)?;
        let encoded = self.encoder.encode(s, z.as_ref(), s0.as_ref(), roi, state)?;
        let frames = match (&self.video_decoder, &encoded.features) {
            (Some(d), Some(f)) => Some(d.forward(s, f)?),
            _ => None,
        };
        let boxes_out = match (&self.motion_decoder, &encoded.motion) {
            (Some(d), Some(m)) => Some(d.decode(s, m, &last_box(&boxes)?, teacher, c.frames_out)?),
            _ => None,
        };
        Ok(Outputs { frames, boxes: boxes_out, encoded })
    }

    /// Training-mode forward; the motion branch requires teacher boxes.
    pub fn forward_train(&self, s: &Session, inputs: &Inputs, teacher: Option<&Var>) -> Result<Outputs> {
        if self.cfg.ablation.motion && teacher.is_none() {
            return Err(Error::Usage("training-mode motion decoding needs teacher boxes".into()));
        }
        self.forward(s, inputs, teacher)
    }
}

/// Convenience: inference forward on plain tensors without recording a tape.
pub fn infer(model: &Model, store: &ParamStore, frames: tavp_tensor::Tensor, boxes: tavp_tensor::Tensor) -> Result<(Option<tavp_tensor::Tensor>, Option<tavp_tensor::Tensor>)> {
    let s = Session::new(Graph::inference(), store);
    let inputs = Inputs { frames: s.graph().constant(frames), boxes: s.graph().constant(boxes) };
    let out = model.forward(&s, &inputs, None)?;
    Ok((out.frames.map(|v| v.value().clone()), out.boxes.map(|v| v.value().clone())))
}
