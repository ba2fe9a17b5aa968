//! Inference over samples and the metric report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use tavp_tensor::{Graph, ParamStore, Session, Tensor};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::metrics::{ade, mae, miou, mse, psnr, roi_mse, ssim};
use crate::model::{Inputs, Model};
use crate::train::to_pixels;

/// Clip-level metrics; NaN where the branch producing them is disabled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub ssim: f64,
    pub psnr: f64,
    pub roi_mse: f64,
    pub miou: f64,
    pub ade: f64,
}

pub const COLUMNS: [&str; 7] = ["mse", "mae", "ssim", "psnr", "roi_mse", "miou", "ade"];

impl Metrics {
    pub fn values(&self) -> [f64; 7] {
        [self.mse, self.mae, self.ssim, self.psnr, self.roi_mse, self.miou, self.ade]
    }

    fn from_values(v: [f64; 7]) -> Self {
        Metrics { mse: v[0], mae: v[1], ssim: v[2], psnr: v[3], roi_mse: v[4], miou: v[5], ade: v[6] }
    }

    pub fn mean(items: &[Metrics]) -> Metrics {
        let mut acc = [0.0; 7];
        for m in items {
            for (a, v) in acc.iter_mut().zip(m.values()) {
                *a += v;
            }
        }
        Metrics::from_values(acc.map(|a| a / items.len() as f64))
    }
}

/// Predicted future frames `[T', C, H, W]` and pixel boxes `[T', 4]`.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub frames: Option<Tensor>,
    pub boxes: Option<Tensor>,
}

/// Inference on a batch of samples: frames in one shot, boxes autoregressively.
pub fn predict(model: &Model, store: &ParamStore, samples: &[&Sample]) -> Result<Vec<Prediction>> {
    let c = &model.cfg;
    let obs: Vec<_> = samples.iter().map(|s| s.observed(c.frames_in)).collect();
    let frames = Tensor::stack(&obs.iter().map(|o| o.0.clone()).collect::<Vec<_>>())?;
    let boxes = Tensor::stack(&obs.iter().map(|o| o.1.clone()).collect::<Vec<_>>())?;
    let s = Session::new(Graph::inference(), store);
    let g = s.graph();
    let out = model.forward(&s, &Inputs { frames: g.constant(frames), boxes: g.constant(boxes) }, None)?;
    let pf = out.frames.map(|f| f.value().clone());
    let pb = out.boxes.map(|b| to_pixels(b.value(), c.height, c.width));
    Ok((0..samples.len())
        .map(|i| Prediction { frames: pf.as_ref().map(|f| f.index_axis0(i)), boxes: pb.as_ref().map(|b| b.index_axis0(i)) })
        .collect())
}

pub fn sample_metrics(pred: &Prediction, truth_frames: &Tensor, truth_boxes: &Tensor) -> Result<Metrics> {
    let nan = f64::NAN;
    let (m_mse, m_mae, m_ssim, m_psnr, m_roi) = match &pred.frames {
        Some(f) => (
            mse(f, truth_frames)?,
            mae(f, truth_frames)?,
            ssim(f, truth_frames)?,
            psnr(f, truth_frames, 1.0)?,
            roi_mse(f, truth_frames, truth_boxes)?,
        ),
        None => (nan, nan, nan, nan, nan),
    };
    let (m_iou, m_ade) = match &pred.boxes {
        Some(b) => (miou(b, truth_boxes)?, ade(b, truth_boxes)?),
        None => (nan, nan),
    };
    Ok(Metrics { mse: m_mse, mae: m_mae, ssim: m_ssim, psnr: m_psnr, roi_mse: m_roi, miou: m_iou, ade: m_ade })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub seq: String,
    pub start: usize,
    pub metrics: Metrics,
    /// Per future step: frame MSE, frame SSIM, box IoU.
    pub per_frame: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub samples: Vec<SampleRow>,
    /// Mean over each sequence's windows.
    pub sequences: Vec<(String, Metrics)>,
    /// Mean of the per-sequence rows.
    pub aggregate: Metrics,
    /// Mean over samples per future step: frame MSE, frame SSIM, box IoU.
    pub per_frame: Vec<[f64; 3]>,
}

fn per_frame(pred: &Prediction, frames: &Tensor, boxes: &Tensor) -> Result<Vec<[f64; 3]>> {
    let t = boxes.shape()[0];
    (0..t)
        .map(|i| {
            let (fm, fs) = match &pred.frames {
                Some(f) => (mse(&f.index_axis0(i), &frames.index_axis0(i))?, ssim(&f.index_axis0(i), &frames.index_axis0(i))?),
                None => (f64::NAN, f64::NAN),
            };
            let iou = match &pred.boxes {
                Some(b) => miou(&b.narrow0(i, i + 1), &boxes.narrow0(i, i + 1))?,
                None => f64::NAN,
            };
            Ok([fm, fs, iou])
        })
        .collect()
}

/// Evaluate samples in batches. `gt_as_pred` replaces the model output with
/// the ground truth.
pub fn evaluate(model: &Model, store: &ParamStore, samples: &[Sample], batch: usize, gt_as_pred: bool) -> Result<MetricReport> {
    if samples.is_empty() {
        return Err(Error::Input("no samples to evaluate".into()));
    }
    let t = model.cfg.frames_in;
    let mut rows = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch.max(1)) {
        let preds = if gt_as_pred {
            chunk
                .iter()
                .map(|s| {
                    let (f, b) = s.future(t);
                    let ab = &model.cfg.ablation;
                    Prediction { frames: ab.video.then_some(f), boxes: ab.motion.then_some(b) }
                })
                .collect()
        } else {
            predict(model, store, &chunk.iter().collect::<Vec<_>>())?
        };
        for (s, p) in chunk.iter().zip(&preds) {
            let (f, b) = s.future(t);
            rows.push(SampleRow { seq: s.seq.clone(), start: s.start, metrics: sample_metrics(p, &f, &b)?, per_frame: per_frame(p, &f, &b)? });
        }
    }
    let mut by_seq: BTreeMap<&str, Vec<Metrics>> = BTreeMap::new();
    for r in &rows {
        by_seq.entry(&r.seq).or_default().push(r.metrics);
    }
    let sequences: Vec<(String, Metrics)> = by_seq.into_iter().map(|(k, v)| (k.to_string(), Metrics::mean(&v))).collect();
    let aggregate = Metrics::mean(&sequences.iter().map(|(_, m)| *m).collect::<Vec<_>>());
    let steps = rows[0].per_frame.len();
    let per_frame = (0..steps)
        .map(|i| {
            let mut acc = [0.0; 3];
            for r in &rows {
                for (a, v) in acc.iter_mut().zip(r.per_frame[i]) {
                    *a += v;
                }
            }
            acc.map(|a| a / rows.len() as f64)
        })
        .collect();
    Ok(MetricReport { samples: rows, sequences, aggregate, per_frame })
}

impl MetricReport {
    /// Tab-separated: one row per sequence, then `ALL` with the aggregate.
    pub fn to_table(&self) -> String {
        let mut out = format!("seq\t{}\n", COLUMNS.join("\t"));
        let mut line = |name: &str, m: &Metrics| {
            let vals: Vec<String> = m.values().iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{name}\t{}", vals.join("\t"));
        };
        for (s, m) in &self.sequences {
            line(s, m);
        }
        line("ALL", &self.aggregate);
        out
    }

    /// `key=value` lines: aggregate metrics, then per-step breakdowns.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in COLUMNS.iter().zip(self.aggregate.values()) {
            let _ = writeln!(out, "{k}={v}");
        }
        let _ = writeln!(out, "sequences={}", self.sequences.len());
        let _ = writeln!(out, "samples={}", self.samples.len());
        for (i, [m, s, iou]) in self.per_frame.iter().enumerate() {
            let _ = writeln!(out, "frame{}.mse={m}\nframe{}.ssim={s}\nframe{}.iou={iou}", i + 1, i + 1, i + 1);
        }
        out
    }

    pub fn parse_kv(text: &str) -> BTreeMap<String, f64> {
        text.lines()
            .filter_map(|l| l.split_once('='))
            .filter_map(|(k, v)| v.parse().ok().map(|v| (k.to_string(), v)))
            .collect()
    }
}
