//! Procedural aerial-like scenes: a drifting textured background, one bright
//! target on a known trajectory and up to two dimmer distractors.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tavp_tensor::Tensor;

pub const BG_LO: f64 = 0.15;
pub const BG_HI: f64 = 0.5;
pub const TARGET_INTENSITY: f64 = 0.9;
pub const DISTRACTOR_INTENSITY: f64 = 0.65;
const SUPERSAMPLE: usize = 4;
const WAVES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    Linear,
    Arc,
    Turn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Rect,
    Disk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub id: String,
    /// `[L, C, H, W]`
    pub frames: Tensor,
    /// `[L, 4]` pixel boxes `(cx, cy, w, h)`.
    pub boxes: Tensor,
    pub motion: Motion,
    pub shape: Shape,
}

struct Wave {
    amp: f64,
    fx: f64,
    fy: f64,
    phase: f64,
}

struct Background {
    waves: Vec<Wave>,
    drift: (f64, f64),
    tint: Vec<f64>,
}

impl Background {
    fn sample(rng: &mut ChaCha8Rng, channels: usize) -> Self {
        let waves = (0..WAVES)
            .map(|_| Wave {
                amp: rng.random_range(0.5..1.0),
                fx: rng.random_range(-0.6..0.6),
                fy: rng.random_range(-0.6..0.6),
                phase: rng.random_range(0.0..2.0 * PI),
            })
            .collect();
        let drift = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let tint = (0..channels).map(|_| rng.random_range(0.85..1.0)).collect();
        Background { waves, drift, tint }
    }

    /// Value in [BG_LO, BG_HI] at pixel center `(x, y)` of frame `t`.
    fn at(&self, x: f64, y: f64, t: usize, c: usize) -> f64 {
        let (x, y) = (x + self.drift.0 * t as f64, y + self.drift.1 * t as f64);
        let total: f64 = self.waves.iter().map(|w| w.amp).sum();
        let s: f64 = self.waves.iter().map(|w| w.amp * (w.fx * x + w.fy * y + w.phase).sin()).sum::<f64>() / total;
        let v = BG_LO + (BG_HI - BG_LO) * (0.5 + 0.5 * s);
        BG_LO + (v - BG_LO) * self.tint[c]
    }
}

/// Fraction of pixel `(i, j)` (the unit square at `[j, j+1] x [i, i+1]`) covered by the shape.
fn coverage(shape: Shape, b: [f64; 4], i: usize, j: usize) -> f64 {
    let [cx, cy, w, h] = b;
    match shape {
        Shape::Rect => {
            let ox = ((j + 1) as f64).min(cx + w / 2.0) - (j as f64).max(cx - w / 2.0);
            let oy = ((i + 1) as f64).min(cy + h / 2.0) - (i as f64).max(cy - h / 2.0);
            ox.max(0.0) * oy.max(0.0)
        }
        Shape::Disk => {
            let r = w / 2.0;
            let near_x = cx.clamp(j as f64, (j + 1) as f64);
            let near_y = cy.clamp(i as f64, (i + 1) as f64);
            if (near_x - cx).powi(2) + (near_y - cy).powi(2) >= r * r {
                return 0.0;
            }
            let mut hit = 0;
            for a in 0..SUPERSAMPLE {
                for bb in 0..SUPERSAMPLE {
                    let x = j as f64 + (bb as f64 + 0.5) / SUPERSAMPLE as f64;
                    let y = i as f64 + (a as f64 + 0.5) / SUPERSAMPLE as f64;
                    if (x - cx).powi(2) + (y - cy).powi(2) < r * r {
                        hit += 1;
                    }
                }
            }
            hit as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64
        }
    }
}

/// Centers along a trajectory of `len` frames, or `None` if the box would leave the frame.
fn trajectory(rng: &mut ChaCha8Rng, motion: Motion, len: usize, (h, w): (usize, usize), (bw, bh): (f64, f64), slow: f64) -> Option<Vec<(f64, f64)>> {
    let (hf, wf) = (h as f64, w as f64);
    let c0 = (rng.random_range(bw / 2.0..wf - bw / 2.0), rng.random_range(bh / 2.0..hf - bh / 2.0));
    let speed = rng.random_range(0.4..1.2) * wf / 32.0 * slow;
    let heading = rng.random_range(0.0..2.0 * PI);
    let pts: Vec<(f64, f64)> = match motion {
        Motion::Linear => (0..len).map(|t| (c0.0 + speed * heading.cos() * t as f64, c0.1 + speed * heading.sin() * t as f64)).collect(),
        Motion::Arc => {
            let radius = rng.random_range(0.2..0.4) * wf;
            let omega = speed / radius * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let centre = (c0.0 - radius * heading.cos(), c0.1 - radius * heading.sin());
            (0..len)
                .map(|t| {
                    let a = heading + omega * t as f64;
                    (centre.0 + radius * a.cos(), centre.1 + radius * a.sin())
                })
                .collect()
        }
        Motion::Turn => {
            let knee = rng.random_range(1..len.max(2));
            let turn = rng.random_range(PI / 4.0..3.0 * PI / 4.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let mut p = c0;
            let mut out = vec![p];
            for t in 1..len {
                let a = if t <= knee { heading } else { heading + turn };
                p = (p.0 + speed * a.cos(), p.1 + speed * a.sin());
                out.push(p);
            }
            out
        }
    };
    let inside = pts.iter().all(|&(x, y)| x - bw / 2.0 >= 0.0 && x + bw / 2.0 <= wf && y - bh / 2.0 >= 0.0 && y + bh / 2.0 <= hf);
    inside.then_some(pts)
}

fn sample_sprite(rng: &mut ChaCha8Rng, h: usize, w: usize, lo: f64, hi: f64) -> (Shape, f64, f64) {
    let shape = if rng.random_bool(0.5) { Shape::Rect } else { Shape::Disk };
    let bw = rng.random_range(lo..hi) * w as f64;
    let bh = match shape {
        Shape::Rect => rng.random_range(lo..hi) * h as f64,
        Shape::Disk => bw,
    };
    (shape, bw, bh)
}

fn sequence(rng: &mut ChaCha8Rng, id: String, h: usize, w: usize, len: usize, channels: usize) -> Sequence {
    let bg = Background::sample(rng, channels);
    let motion = [Motion::Linear, Motion::Arc, Motion::Turn][rng.random_range(0..3)];
    // long sequences get slower targets until the path fits the frame
    let mut slow = 1.0;
    let (shape, bw, bh, path) = loop {
        let (shape, bw, bh) = sample_sprite(rng, h, w, 0.15, 0.3);
        if let Some(p) = trajectory(rng, motion, len, (h, w), (bw, bh), slow) {
            break (shape, bw, bh, p);
        }
        slow *= 0.95;
    };
    let distractors: Vec<_> = (0..rng.random_range(0..=2))
        .map(|_| {
            let (s, dw, dh) = sample_sprite(rng, h, w, 0.08, 0.15);
            let start = (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
            let v = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            (s, dw, dh, start, v)
        })
        .collect();
    let mut frames = Vec::with_capacity(len * channels * h * w);
    let mut boxes = Vec::with_capacity(len * 4);
    for (t, &(cx, cy)) in path.iter().enumerate() {
        let target = [cx, cy, bw, bh];
        for c in 0..channels {
            for i in 0..h {
                for j in 0..w {
                    let mut v = bg.at(j as f64 + 0.5, i as f64 + 0.5, t, c);
                    for &(s, dw, dh, p, dv) in &distractors {
                        let b = [p.0 + dv.0 * t as f64, p.1 + dv.1 * t as f64, dw, dh];
                        let k = coverage(s, b, i, j);
                        v = v * (1.0 - k) + DISTRACTOR_INTENSITY * k;
                    }
                    let k = coverage(shape, target, i, j);
                    frames.push(v * (1.0 - k) + TARGET_INTENSITY * k);
                }
            }
        }
        boxes.extend_from_slice(&target);
    }
    Sequence {
        id,
        frames: Tensor::new([len, channels, h, w], frames).expect("frame buffer"),
        boxes: Tensor::new([len, 4], boxes).expect("box buffer"),
        motion,
        shape,
    }
}

/// `n` sequences of `len` frames, each on its own ChaCha stream of `seed`.
pub fn generate_synthetic(seed: u64, n: usize, h: usize, w: usize, len: usize, channels: usize) -> Vec<Sequence> {
    (0..n)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            sequence(&mut rng, format!("synth_{k:04}"), h, w, len, channels)
        })
        .collect()
}
