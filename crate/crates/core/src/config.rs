//! Run configuration as flat `section.key = value` text.
//!
//! Lines starting with `#` are comments. A `preset = full|desk` line picks
//! the base values wherever it appears; every other key overrides one field.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use tavp_tensor::Precision;

use crate::ablation::{Ablation, RoiSource, StateSource};
use crate::data::{SplitFractions, WindowSpec};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::model::ModelConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub root: PathBuf,
    pub stride: usize,
    pub split: SplitFractions,
    pub split_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm bound; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    OneCycle,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    /// 0 derives the length from epochs and batches.
    pub total_steps: usize,
    pub warmup: f64,
    pub div: f64,
    pub final_div: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// 0 means no cap beyond `epochs`.
    pub max_steps: usize,
    pub seed: u64,
    pub precision: Precision,
    pub log_every: usize,
    /// 0 writes only the final checkpoint.
    pub ckpt_every: usize,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub n: usize,
    pub length: usize,
    pub seed: u64,
    pub ext: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub data: DataConfig,
    pub optim: OptimConfig,
    pub schedule: ScheduleConfig,
    pub loss: LossWeights,
    pub train: TrainConfig,
    pub gen: GenConfig,
}

impl RunConfig {
    /// Adam at 1e-3 with β1 0.9, batch 4, 50 epochs, λ 0.001, σ 50, L 6, C' 512, 8 ROI / 2 state tokens.
    pub fn full() -> Self {
        RunConfig {
            model: ModelConfig::full(),
            data: DataConfig { root: PathBuf::from("data"), stride: 6, split: SplitFractions::default(), split_seed: 0 },
            optim: OptimConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: None },
            schedule: ScheduleConfig { kind: ScheduleKind::OneCycle, total_steps: 0, warmup: 0.3, div: 25.0, final_div: 1e4 },
            loss: LossWeights::default(),
            train: TrainConfig {
                batch_size: 4,
                epochs: 50,
                max_steps: 0,
                seed: 0,
                precision: Precision::F32,
                log_every: 10,
                ckpt_every: 0,
                out_dir: PathBuf::from("runs"),
            },
            gen: GenConfig { n: 8, length: 16, seed: 0, ext: "pgm".into() },
        }
    }

    /// 32x32 grayscale, 4 -> 4, C_hid 8, L 2, 4 heads, 4 ROI / 1 state token,
    /// batch 4, 250 epochs. The motion weight is raised to 0.1: at 0.001 the
    /// box-head gradients shrink to the size of Adam's epsilon.
    pub fn desk() -> Self {
        let mut c = Self::full();
        c.model = ModelConfig::desk();
        c.data.stride = 4;
        c.loss.lambda1 = 0.1;
        c.train.epochs = 250;
        c.gen.length = 8;
        c
    }

    pub fn window(&self) -> Result<WindowSpec> {
        WindowSpec::new(self.model.frames_in, self.model.frames_out, self.data.stride)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.window()?;
        self.data.split.validate()?;
        let o = &self.optim;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return Err(Error::config("optim.lr", "must be positive"));
        }
        for (f, b) in [("optim.beta1", o.beta1), ("optim.beta2", o.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(f, "must lie in [0, 1)"));
            }
        }
        if o.eps <= 0.0 {
            return Err(Error::config("optim.eps", "must be positive"));
        }
        if o.clip_norm.is_some_and(|c| c <= 0.0) {
            return Err(Error::config("optim.clip_norm", "must be positive or 0 for off"));
        }
        let s = &self.schedule;
        if !(s.warmup > 0.0 && s.warmup < 1.0) {
            return Err(Error::config("schedule.warmup", "must lie in (0, 1)"));
        }
        if s.div < 1.0 || s.final_div < 1.0 {
            return Err(Error::config("schedule.div", "div and final_div must be at least 1"));
        }
        let l = &self.loss;
        if l.lambda1 < 0.0 || l.lambda2 < 0.0 {
            return Err(Error::config("loss.lambda1", "loss weights must be non-negative"));
        }
        if l.sigma_x <= 0.0 || l.sigma_y <= 0.0 {
            return Err(Error::config("loss.sigma_x", "must be positive"));
        }
        if self.train.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if self.train.epochs == 0 && self.train.max_steps == 0 {
            return Err(Error::config("train.epochs", "epochs or max_steps must be positive"));
        }
        if self.gen.length == 0 {
            return Err(Error::config("gen.length", "must be at least 1"));
        }
        Ok(())
    }

    /// Every field as `(key, value)` in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let m = &self.model;
        let a = &m.ablation;
        vec![
            ("model.c_hid", m.c_hid.to_string()),
            ("model.width", m.width().to_string()),
            ("model.c_dec", m.c_dec.to_string()),
            ("model.depth", m.depth.to_string()),
            ("model.heads", m.heads.to_string()),
            ("model.mlp_ratio", m.mlp_ratio.to_string()),
            ("model.pos_embed", m.pos_embed.to_string()),
            ("data.root", self.data.root.display().to_string()),
            ("data.channels", m.channels.to_string()),
            ("data.height", m.height.to_string()),
            ("data.width", m.width.to_string()),
            ("data.frames_in", m.frames_in.to_string()),
            ("data.frames_out", m.frames_out.to_string()),
            ("data.stride", self.data.stride.to_string()),
            ("data.split_train", self.data.split.train.to_string()),
            ("data.split_val", self.data.split.val.to_string()),
            ("data.split_test", self.data.split.test.to_string()),
            ("data.split_seed", self.data.split_seed.to_string()),
            ("optim.lr", self.optim.lr.to_string()),
            ("optim.beta1", self.optim.beta1.to_string()),
            ("optim.beta2", self.optim.beta2.to_string()),
            ("optim.eps", self.optim.eps.to_string()),
            ("optim.clip_norm", self.optim.clip_norm.unwrap_or(0.0).to_string()),
            ("schedule.kind", match self.schedule.kind {
                ScheduleKind::OneCycle => "onecycle".into(),
                ScheduleKind::Constant => "constant".into(),
            }),
            ("schedule.total_steps", self.schedule.total_steps.to_string()),
            ("schedule.warmup", self.schedule.warmup.to_string()),
            ("schedule.div", self.schedule.div.to_string()),
            ("schedule.final_div", self.schedule.final_div.to_string()),
            ("loss.lambda1", self.loss.lambda1.to_string()),
            ("loss.lambda2", self.loss.lambda2.to_string()),
            ("loss.sigma_x", self.loss.sigma_x.to_string()),
            ("loss.sigma_y", self.loss.sigma_y.to_string()),
            ("train.batch_size", self.train.batch_size.to_string()),
            ("train.epochs", self.train.epochs.to_string()),
            ("train.max_steps", self.train.max_steps.to_string()),
            ("train.seed", self.train.seed.to_string()),
            ("train.precision", self.train.precision.name().to_string()),
            ("train.log_every", self.train.log_every.to_string()),
            ("train.ckpt_every", self.train.ckpt_every.to_string()),
            ("train.out_dir", self.train.out_dir.display().to_string()),
            ("ablation.video", a.video.to_string()),
            ("ablation.motion", a.motion.to_string()),
            ("ablation.sta", a.sta.to_string()),
            ("ablation.tsgl", a.tsgl.to_string()),
            ("ism.enabled", a.ism.enabled.to_string()),
            ("ism.init_roi", a.ism.init_roi.to_string()),
            ("ism.init_state", a.ism.init_state.to_string()),
            ("ism.collect", a.ism.collect.to_string()),
            ("ism.pass", a.ism.pass.to_string()),
            ("ism.m", a.ism.m.to_string()),
            ("ism.n", a.ism.n.to_string()),
            ("gen.n", self.gen.n.to_string()),
            ("gen.length", self.gen.length.to_string()),
            ("gen.seed", self.gen.seed.to_string()),
            ("gen.ext", self.gen.ext.clone()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for (k, v) in self.entries() {
            let s = k.split('.').next().unwrap_or_default();
            if s != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = s;
            }
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Set one field. `model.width` is derived and only checked after parsing.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::config(key, format!("cannot parse `{v}`")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "on" | "1" => Ok(true),
                "false" | "off" | "0" => Ok(false),
                _ => Err(Error::config(key, format!("expected true/false, got `{v}`"))),
            }
        }
        let m = &mut self.model;
        let a = &mut m.ablation;
        match key {
            "model.c_hid" => m.c_hid = num(key, value)?,
            "model.width" => {
                num::<usize>(key, value)?;
            }
            "model.c_dec" => m.c_dec = num(key, value)?,
            "model.depth" => m.depth = num(key, value)?,
            "model.heads" => m.heads = num(key, value)?,
            "model.mlp_ratio" => m.mlp_ratio = num(key, value)?,
            "model.pos_embed" => m.pos_embed = flag(key, value)?,
            "data.root" => self.data.root = PathBuf::from(value),
            "data.channels" => m.channels = num(key, value)?,
            "data.height" => m.height = num(key, value)?,
            "data.width" => m.width = num(key, value)?,
            "data.frames_in" => m.frames_in = num(key, value)?,
            "data.frames_out" => m.frames_out = num(key, value)?,
            "data.stride" => self.data.stride = num(key, value)?,
            "data.split_train" => self.data.split.train = num(key, value)?,
            "data.split_val" => self.data.split.val = num(key, value)?,
            "data.split_test" => self.data.split.test = num(key, value)?,
            "data.split_seed" => self.data.split_seed = num(key, value)?,
            "optim.lr" => self.optim.lr = num(key, value)?,
            "optim.beta1" | "optim.momentum" => self.optim.beta1 = num(key, value)?,
            "optim.beta2" => self.optim.beta2 = num(key, value)?,
            "optim.eps" => self.optim.eps = num(key, value)?,
            "optim.clip_norm" => {
                let c: f64 = num(key, value)?;
                self.optim.clip_norm = (c != 0.0).then_some(c);
            }
            "schedule.kind" => {
                self.schedule.kind = match value {
                    "onecycle" => ScheduleKind::OneCycle,
                    "constant" => ScheduleKind::Constant,
                    _ => return Err(Error::config(key, format!("expected onecycle or constant, got `{value}`"))),
                }
            }
            "schedule.total_steps" => self.schedule.total_steps = num(key, value)?,
            "schedule.warmup" => self.schedule.warmup = num(key, value)?,
            "schedule.div" => self.schedule.div = num(key, value)?,
            "schedule.final_div" => self.schedule.final_div = num(key, value)?,
            "loss.lambda1" => self.loss.lambda1 = num(key, value)?,
            "loss.lambda2" => self.loss.lambda2 = num(key, value)?,
            "loss.sigma" => {
                let s = num(key, value)?;
                self.loss.sigma_x = s;
                self.loss.sigma_y = s;
            }
            "loss.sigma_x" => self.loss.sigma_x = num(key, value)?,
            "loss.sigma_y" => self.loss.sigma_y = num(key, value)?,
            "train.batch_size" => self.train.batch_size = num(key, value)?,
            "train.epochs" => self.train.epochs = num(key, value)?,
            "train.max_steps" => self.train.max_steps = num(key, value)?,
            "train.seed" => self.train.seed = num(key, value)?,
            "train.precision" => {
                self.train.precision = Precision::parse(value).ok_or_else(|| Error::config(key, format!("expected f32 or f64, got `{value}`")))?
            }
            "train.log_every" => self.train.log_every = num(key, value)?,
            "train.ckpt_every" => self.train.ckpt_every = num(key, value)?,
            "train.out_dir" => self.train.out_dir = PathBuf::from(value),
            "ablation.video" => a.video = flag(key, value)?,
            "ablation.motion" => a.motion = flag(key, value)?,
            "ablation.sta" => a.sta = flag(key, value)?,
            "ablation.tsgl" => a.tsgl = flag(key, value)?,
            "ism.enabled" => a.ism.enabled = flag(key, value)?,
            "ism.init_roi" => {
                a.ism.init_roi = RoiSource::parse(value).ok_or_else(|| Error::config(key, format!("expected roi or random, got `{value}`")))?
            }
            "ism.init_state" => {
                a.ism.init_state =
                    StateSource::parse(value).ok_or_else(|| Error::config(key, format!("expected states or random, got `{value}`")))?
            }
            "ism.collect" => a.ism.collect = flag(key, value)?,
            "ism.pass" => a.ism.pass = flag(key, value)?,
            "ism.m" => a.ism.m = num(key, value)?,
            "ism.n" => a.ism.n = num(key, value)?,
            "gen.n" => self.gen.n = num(key, value)?,
            "gen.length" => self.gen.length = num(key, value)?,
            "gen.seed" => self.gen.seed = num(key, value)?,
            "gen.ext" => self.gen.ext = value.to_string(),
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut base = RunConfig::full();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", n + 1), format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if k == "preset" {
                base = match v {
                    "full" => RunConfig::full(),
                    "desk" => RunConfig::desk(),
                    _ => return Err(Error::config("preset", format!("expected full or desk, got `{v}`"))),
                };
            } else {
                pairs.push((k.to_string(), v.to_string()));
            }
        }
        let mut cfg = base;
        let mut width = None;
        for (k, v) in &pairs {
            cfg.set(k, v)?;
            if k == "model.width" {
                width = Some(v.parse::<usize>().unwrap_or_default());
            }
        }
        if let Some(w) = width {
            if w != cfg.model.width() {
                return Err(Error::config(
                    "model.width",
                    format!("{w} != data.frames_in x model.c_hid = {}", cfg.model.width()),
                ));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn ablation(&self) -> &Ablation {
        &self.model.ablation
    }
}
