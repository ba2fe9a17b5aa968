//! Gradient cases for the composite blocks, with respect to their inputs and
//! every parameter (64-bit, h = 1e-5). Each case returns the worst relative
//! error over its instances.

use super::*;
use tavp::decoders::{MotionDecoder, VideoDecoder};
use tavp::encoder::Encoder;
use tavp::ism::{MessagePass, MotionAttention};
use tavp::losses::{motion_loss, total_loss, tsgl, video_loss, LossParts};
use tavp::model::{Inputs, Model};
use tavp::sta::Sta;
use tavp::train::to_pixels;
use tavp_tensor::gradcheck::{check, GradCheckOptions};
use tavp_tensor::{Session, TensorError};

const B: usize = 2;

pub fn sta_block() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let (sta, store) = build(seed, |b| Sta::new(b, 8, 2, true));
        let data = vec![rand_tensor(&mut r, &[B, 4, 8], -1.0, 1.0), rand_tensor(&mut r, &[B, 2, 8], -1.0, 1.0)];
        worst = worst.max(check_block("sta", seed, data, &store, |s, v| {
            let (a, msg) = sta.forward(s, &v[0], Some(&v[1]), true)?;
            project(s.graph(), &a, seed)?.add(&project(s.graph(), &msg.unwrap(), seed + 1)?)
        }));
    }
    worst
}

pub fn sta_block_without_collecting() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let (sta, store) = build(seed, |b| Sta::new(b, 8, 2, true));
        let data = vec![rand_tensor(&mut r, &[B, 4, 8], -1.0, 1.0), rand_tensor(&mut r, &[B, 2, 8], -1.0, 1.0)];
        worst = worst.max(check_block("sta read-only", seed, data, &store, |s, v| {
            let (a, msg) = sta.forward(s, &v[0], Some(&v[1]), false)?;
            assert!(msg.is_none());
            project(s.graph(), &a, seed)
        }));
    }
    worst
}

pub fn collect_motion() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let (attn, store) = build(seed, |b| MotionAttention::new(b, 8, 2));
        let data = vec![rand_tensor(&mut r, &[B, 2, 8], -1.0, 1.0), rand_tensor(&mut r, &[B, 1, 8], -1.0, 1.0)];
        worst = worst.max(check_block("collect_motion", seed, data, &store, |s, v| {
            let out = attn.collect_motion(s, &v[0], Some(&v[1]), true)?;
            project(s.graph(), &out.a_s, seed)?.add(&project(s.graph(), &out.messengers.unwrap(), seed + 1)?)
        }));
    }
    worst
}

pub fn pass_messages() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let (pass, store) = build(seed, |b| MessagePass::new(b, 8, 2, 1, 2));
        let data = vec![rand_tensor(&mut r, &[B, 2, 8], -1.0, 1.0), rand_tensor(&mut r, &[B, 1, 8], -1.0, 1.0)];
        worst = worst.max(check_block("pass_messages", seed, data, &store, |s, v| {
            let (tr, ts) = pass.pass_messages(s, &v[0], &v[1])?;
            project(s.graph(), &tr, seed)?.add(&project(s.graph(), &ts, seed + 1)?)
        }));
    }
    worst
}

pub fn encode() -> f64 {
    let cfg = tiny_config();
    let (h, w) = cfg.grid();
    let mut worst: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let (enc, store) = build(seed, |b| Encoder::new(b, &cfg));
        let data = vec![
            rand_tensor(&mut r, &[B, cfg.frames_in, cfg.c_hid, h, w], -1.0, 1.0),
            rand_tensor(&mut r, &[B, cfg.frames_in, cfg.width()], -1.0, 1.0),
            rand_tensor(&mut r, &[B, 2, cfg.width()], -1.0, 1.0),
            rand_tensor(&mut r, &[B, 1, cfg.width()], -1.0, 1.0),
        ];
        worst = worst.max(check_block("encode", seed, data, &store, |s, v| {
            let out = enc.encode(s, Some(&v[0]), Some(&v[1]), Some(v[2].clone()), Some(v[3].clone()))?;
            let g = s.graph();
            project(g, &out.features.unwrap(), seed)?.add(&project(g, &out.motion.unwrap(), seed + 1)?)
        }));
    }
    worst
}

pub fn decode_video() -> f64 {
    let cfg = tiny_config();
    let (h, w) = cfg.grid();
    let mut worst: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let (dec, store) = build(seed, |b| VideoDecoder::new(b, &cfg));
        let data = vec![rand_tensor(&mut r, &[B, cfg.frames_in, cfg.c_hid, h, w], -1.0, 1.0)];
        worst = worst.max(check_block("decode_video", seed, data, &store, |s, v| project(s.graph(), &dec.forward(s, &v[0])?, seed)));
    }
    worst
}

fn motion_decoder_check(name: &str, teacher_forced: bool) -> f64 {
    let cfg = tiny_config();
    let mut worst: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let (dec, store) = build(seed, |b| MotionDecoder::new(b, &cfg));
        let data = vec![
            rand_tensor(&mut r, &[B, cfg.frames_in, cfg.width()], -1.0, 1.0),
            rand_boxes(&mut r, B, 1),
            rand_boxes(&mut r, B, cfg.frames_out),
        ];
        worst = worst.max(check_block(name, seed, data, &store, |s, v| {
            let teacher = teacher_forced.then_some(&v[2]);
            let out = dec.decode(s, &v[0], &v[1], teacher, cfg.frames_out)?;
            let anchor = if teacher_forced { out.clone() } else { out.add(&v[2].scale(0.0)?)? };
            project(s.graph(), &anchor, seed)
        }));
    }
    worst
}

pub fn decode_motion_teacher_forced() -> f64 {
    motion_decoder_check("decode_motion teacher-forced", true)
}

pub fn decode_motion_autoregressive() -> f64 {
    motion_decoder_check("decode_motion autoregressive", false)
}

pub fn video_and_motion_losses() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let inputs = vec![
            rand_tensor(&mut r, &[B, 2, 1, 4, 4], 0.0, 1.0),
            rand_tensor(&mut r, &[B, 2, 1, 4, 4], 0.0, 1.0),
            rand_tensor(&mut r, &[B, 2, 4], -2.0, 2.0),
            rand_tensor(&mut r, &[B, 2, 4], -2.0, 2.0),
        ];
        let rep = check(&inputs, &GradCheckOptions { seed, ..Default::default() }, |_, v| {
            video_loss(&v[0], &v[1])?.add(&motion_loss(&v[2], &v[3])?)
        })
        .unwrap();
        worst = worst.max(rep.max_rel_err);
    }
    worst
}

pub fn tsgl_loss() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let pred_px = to_pixels(&rand_boxes(&mut r, B, 2), 8, 8);
        let gt_px = to_pixels(&rand_boxes(&mut r, B, 2), 8, 8);
        let inputs = vec![rand_tensor(&mut r, &[B, 2, 1, 8, 8], 0.0, 1.0), rand_tensor(&mut r, &[B, 2, 1, 8, 8], 0.0, 1.0)];
        let rep = check(&inputs, &GradCheckOptions { seed, ..Default::default() }, |g, v| tsgl(g, &v[0], &v[1], &pred_px, &gt_px, 3.0, 2.0)).unwrap();
        worst = worst.max(rep.max_rel_err);
    }
    worst
}

/// The whole model and weighted objective. Input boxes stay constant: ROI
/// pooling treats them as fixed sampling positions. The TSGL box weights use
/// fixed boxes since predicted boxes enter that term detached.
pub fn full_model_objective() -> f64 {
    let cfg = tiny_config();
    let mut worst: f64 = 0.0;
    for seed in 0..INSTANCES / 4 {
        let mut r = rng(seed);
        let (model, store) = Model::build(&cfg, seed).unwrap();
        let boxes_px = to_pixels(&rand_boxes(&mut r, B, cfg.frames_in), cfg.height, cfg.width);
        let teacher = rand_boxes(&mut r, B, cfg.frames_out);
        let target = rand_tensor(&mut r, &[B, cfg.frames_out, 1, 8, 8], 0.0, 1.0);
        let gt_px = to_pixels(&teacher, cfg.height, cfg.width);
        let pred_px = to_pixels(&rand_boxes(&mut r, B, cfg.frames_out), cfg.height, cfg.width);
        let data = vec![rand_tensor(&mut r, &[B, cfg.frames_in, 1, 8, 8], 0.0, 1.0)];
        worst = worst.max(check_block("full model", seed, data, &store, |s: &Session, v| {
            let g = s.graph();
            let inputs = Inputs { frames: v[0].clone(), boxes: g.constant(boxes_px.clone()) };
            let t = g.constant(teacher.clone());
            let out = model.forward_train(s, &inputs, Some(&t)).map_err(|e| TensorError::Format(e.to_string()))?;
            let (f, b) = (out.frames.unwrap(), out.boxes.unwrap());
            let y = g.constant(target.clone());
            let parts = LossParts {
                video: Some(video_loss(&f, &y)?),
                motion: Some(motion_loss(&b, &t)?),
                gaussian: Some(tsgl(g, &f, &y, &pred_px, &gt_px, 3.0, 3.0)?),
            };
            total_loss(&parts, 0.5, 0.5)
        }));
    }
    worst
}

/// A named case returning its worst relative error.
pub type Case = (&'static str, fn() -> f64);

pub const ALL: &[Case] = &[
    ("sta", sta_block),
    ("sta read-only", sta_block_without_collecting),
    ("collect_motion", collect_motion),
    ("pass_messages", pass_messages),
    ("encode", encode),
    ("decode_video", decode_video),
    ("decode_motion teacher-forced", decode_motion_teacher_forced),
    ("decode_motion autoregressive", decode_motion_autoregressive),
    ("video + motion loss", video_and_motion_losses),
    ("tsgl", tsgl_loss),
    ("full model", full_model_objective),
];
