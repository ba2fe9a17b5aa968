//! End-to-end training: teacher-forced forward, weighted loss, Adam with
//! the one-cycle schedule, loss trace and checkpoints.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tavp_tensor::{with_precision, Graph, ParamStore, Session, Tensor};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::{Batch, Sample};
use crate::embedding::normalize_boxes;
use crate::error::{Error, Result};
use crate::losses::{motion_loss, total_loss, tsgl, video_loss, LossParts, LossWeights};
use crate::model::{Inputs, Model, Outputs};
use crate::optim::{clip_grad_norm, Adam, Schedule};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub video: f64,
    pub motion: f64,
    pub gaussian: f64,
    pub total: f64,
    pub lr: f64,
}

pub const TRACE_HEADER: &str = "step,video,motion,gaussian,total,lr";

pub fn format_trace(rows: &[TraceRow]) -> String {
    let mut out = format!("{TRACE_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.step, r.video, r.motion, r.gaussian, r.total, r.lr);
    }
    out
}

/// Loss parts for one batch; the motion branch is decoded with the true
/// future boxes as teacher.
pub fn batch_losses(model: &Model, s: &Session, batch: &Batch, w: &LossWeights) -> Result<(LossParts, Outputs)> {
    let g = s.graph();
    let c = &model.cfg;
    let inputs = Inputs { frames: g.constant(batch.frames.clone()), boxes: g.constant(batch.boxes.clone()) };
    let teacher = normalize_boxes(g, &g.constant(batch.future_boxes.clone()), c.height, c.width)?;
    let out = model.forward_train(s, &inputs, c.ablation.motion.then_some(&teacher))?;
    let target = g.constant(batch.future_frames.clone());
    let video = out.frames.as_ref().map(|f| video_loss(f, &target)).transpose()?;
    let motion = out.boxes.as_ref().map(|b| motion_loss(b, &teacher)).transpose()?;
    let gaussian = match (&out.frames, &out.boxes) {
        (Some(f), Some(b)) if c.ablation.tsgl => {
            let pred_px = to_pixels(b.value(), c.height, c.width);
            Some(tsgl(g, f, &target, &pred_px, &batch.future_boxes, w.sigma_x, w.sigma_y)?)
        }
        _ => None,
    };
    Ok((LossParts { video, motion, gaussian }, out))
}

/// Normalized boxes `[.., 4]` to pixels.
pub fn to_pixels(boxes: &Tensor, h: usize, w: usize) -> Tensor {
    let scale = [w as f64, h as f64, w as f64, h as f64];
    let d = boxes.data();
    Tensor::from_fn(boxes.shape(), |i| d[i] * scale[i % 4])
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub store: ParamStore,
    pub adam: Adam,
    pub trace: Vec<TraceRow>,
    pub checkpoint: Checkpoint,
}

impl TrainOutcome {
    /// Relative drop of the total loss from the first to the last logged step.
    pub fn loss_drop(&self) -> f64 {
        match (self.trace.first(), self.trace.last()) {
            (Some(a), Some(b)) if a.total > 0.0 => 1.0 - b.total / a.total,
            _ => 0.0,
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::data(path, e.to_string()))
}

/// Number of optimizer steps a run will take.
pub fn planned_steps(cfg: &RunConfig, samples: usize) -> usize {
    let per_epoch = samples.div_ceil(cfg.train.batch_size);
    let by_epochs = cfg.train.epochs * per_epoch;
    match cfg.train.max_steps {
        0 => by_epochs,
        m if cfg.train.epochs == 0 => m,
        m => m.min(by_epochs),
    }
}

/// Train on `samples`. With `out`, writes `config.txt`, `trace.csv`,
/// periodic `step_NNNNNN.ckpt` files and `final.ckpt` there. A non-finite
/// loss stops the run and saves the parameters before that step as
/// `last_good.ckpt`.
pub fn train(cfg: &RunConfig, samples: &[Sample], out: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Input("no training samples".into()));
    }
    let _precision = with_precision(cfg.train.precision);
    let (model, mut store) = Model::build(&cfg.model, cfg.train.seed)?;
    let p = cfg.train.precision;
    let names: Vec<_> = store.ids().collect();
    for id in names {
        p.round_slice(store.get_mut(id).data_mut());
    }
    let mut adam = Adam::new(&store, &cfg.optim);
    let total = planned_steps(cfg, samples.len());
    let sched_total = if cfg.schedule.total_steps > 0 { cfg.schedule.total_steps } else { total };
    let schedule = Schedule::new(&cfg.schedule, cfg.optim.lr, sched_total);
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::data(dir, e.to_string()))?;
        write(&dir.join("config.txt"), &cfg.to_text())?;
    }
    let mut trace = Vec::with_capacity(total);
    let mut step = 0;
    let mut epoch = 0u64;
    'outer: while step < total {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        rng.set_stream(epoch);
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.train.batch_size) {
            if step >= total {
                break 'outer;
            }
            let batch = Batch::new(&chunk.iter().map(|&i| &samples[i]).collect::<Vec<_>>(), cfg.model.frames_in)?;
            let s = Session::new(Graph::new(), &store);
            let forward = || -> Result<_> {
                let (parts, _) = batch_losses(&model, &s, &batch, &cfg.loss)?;
                let loss = total_loss(&parts, cfg.loss.lambda1, cfg.loss.lambda2)?;
                if !loss.item().is_finite() {
                    return Err(Error::Tensor(tavp_tensor::TensorError::NonFinite { op: "total_loss" }));
                }
                Ok((parts, loss))
            };
            let (parts, loss) = match forward() {
                Ok(v) => v,
                Err(e) => {
                    if let (true, Some(dir)) = (e.is_numerical(), out) {
                        Checkpoint::capture(&store, &adam, cfg).save(&dir.join("last_good.ckpt"))?;
                        write(&dir.join("trace.csv"), &format_trace(&trace))?;
                    }
                    return Err(e);
                }
            };
            let value = loss.item();
            let grads = s.graph().backward(&loss)?;
            let mut g = s.param_grads(&grads);
            drop(s);
            if let Some(max) = cfg.optim.clip_norm {
                clip_grad_norm(&mut g, max);
            }
            let lr = schedule.lr(step);
            let before = (store.clone(), adam.clone());
            adam.update(&mut store, &g, lr);
            if !store.iter().all(|(_, _, t)| t.all_finite()) {
                if let Some(dir) = out {
                    Checkpoint::capture(&before.0, &before.1, cfg).save(&dir.join("last_good.ckpt"))?;
                    write(&dir.join("trace.csv"), &format_trace(&trace))?;
                }
                return Err(Error::Tensor(tavp_tensor::TensorError::NonFinite { op: "adam" }));
            }
            let [video, motion, gaussian] = parts.values();
            trace.push(TraceRow { step, video, motion, gaussian, total: value, lr });
            step += 1;
            if let Some(dir) = out {
                if cfg.train.ckpt_every > 0 && step % cfg.train.ckpt_every == 0 {
                    Checkpoint::capture(&store, &adam, cfg).save(&dir.join(format!("step_{step:06}.ckpt")))?;
                    write(&dir.join("trace.csv"), &format_trace(&trace))?;
                }
            }
        }
        epoch += 1;
    }
    let checkpoint = Checkpoint::capture(&store, &adam, cfg);
    if let Some(dir) = out {
        checkpoint.save(&dir.join("final.ckpt"))?;
        write(&dir.join("trace.csv"), &format_trace(&trace))?;
    }
    Ok(TrainOutcome { model, store, adam, trace, checkpoint })
}

/// Rebuild the model of a checkpoint with its trained parameters.
pub fn load_model(ckpt: &Checkpoint) -> Result<(RunConfig, Model, ParamStore)> {
    let cfg = ckpt.run_config()?;
    let (model, mut store) = Model::build(&cfg.model, cfg.train.seed)?;
    ckpt.restore(&mut store)?;
    Ok((cfg, model, store))
}

pub fn default_out_dir(cfg: &RunConfig, root: Option<PathBuf>) -> PathBuf {
    match root {
        Some(r) => r.join(&cfg.train.out_dir),
        None => cfg.train.out_dir.clone(),
    }
}
