//! Samples, sliding windows, the synthetic scene generator and the
//! single-object-tracking dataset adapter.

pub mod io;
pub mod sot;
pub mod synth;

use std::fmt;

use tavp_tensor::Tensor;

use crate::error::{Error, Result};

pub use sot::{adapt_sot, assign_splits, Dataset, ManifestEntry, Rejection, SplitFractions};
pub use synth::{generate_synthetic, Motion, Sequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub width: usize,
    pub stride: usize,
    pub observed: usize,
    pub future: usize,
}

impl WindowSpec {
    pub fn new(observed: usize, future: usize, stride: usize) -> Result<Self> {
        let spec = WindowSpec { width: observed + future, stride, observed, future };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::config("data.stride", "must be at least 1"));
        }
        if self.observed == 0 || self.future == 0 {
            return Err(Error::config("data.frames_in", "observed and future lengths must be at least 1"));
        }
        if self.observed + self.future != self.width {
            return Err(Error::config("data.window", format!("{} + {} != {}", self.observed, self.future, self.width)));
        }
        Ok(())
    }
}

/// Window bounds `[start, start + width)` over a sequence; empty when it is too short.
pub fn window_sequences(seq_len: usize, spec: &WindowSpec) -> Vec<(usize, usize)> {
    if seq_len < spec.width {
        return Vec::new();
    }
    (0..=seq_len - spec.width).step_by(spec.stride).map(|s| (s, s + spec.width)).collect()
}

/// One observed-plus-future clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `[T + T', C, H, W]` in [0, 1].
    pub frames: Tensor,
    /// `[T + T', 4]` pixel boxes `(cx, cy, w, h)`.
    pub boxes: Tensor,
    pub split: Split,
    pub seq: String,
    pub start: usize,
}

impl Sample {
    pub fn observed(&self, t: usize) -> (Tensor, Tensor) {
        (self.frames.narrow0(0, t), self.boxes.narrow0(0, t))
    }

    pub fn future(&self, t: usize) -> (Tensor, Tensor) {
        let n = self.frames.shape()[0];
        (self.frames.narrow0(t, n), self.boxes.narrow0(t, n))
    }
}

/// Stacked model inputs and targets for a batch of samples.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `[B, T, C, H, W]`
    pub frames: Tensor,
    /// `[B, T, 4]` pixels
    pub boxes: Tensor,
    /// `[B, T', C, H, W]`
    pub future_frames: Tensor,
    /// `[B, T', 4]` pixels
    pub future_boxes: Tensor,
}

impl Batch {
    pub fn new(samples: &[&Sample], observed: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let (obs, fut): (Vec<_>, Vec<_>) = samples.iter().map(|s| (s.observed(observed), s.future(observed))).unzip();
        let stack = |v: Vec<Tensor>| -> Result<Tensor> { Ok(Tensor::stack(&v)?) };
        let (frames, boxes): (Vec<_>, Vec<_>) = obs.into_iter().unzip();
        let (future_frames, future_boxes): (Vec<_>, Vec<_>) = fut.into_iter().unzip();
        Ok(Batch { frames: stack(frames)?, boxes: stack(boxes)?, future_frames: stack(future_frames)?, future_boxes: stack(future_boxes)? })
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Clamp a pixel box to the frame by clipping its corners.
pub fn clamp_box(b: [f64; 4], h: usize, w: usize) -> [f64; 4] {
    let x0 = (b[0] - b[2] / 2.0).clamp(0.0, w as f64);
    let x1 = (b[0] + b[2] / 2.0).clamp(0.0, w as f64);
    let y0 = (b[1] - b[3] / 2.0).clamp(0.0, h as f64);
    let y1 = (b[1] + b[3] / 2.0).clamp(0.0, h as f64);
    [(x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0]
}
