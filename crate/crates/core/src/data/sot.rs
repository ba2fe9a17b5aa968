//! Datasets laid out as `<root>/<seq_id>/frames/NNNNNN.<ext>` plus
//! `<root>/<seq_id>/boxes.txt`, windowed into samples with per-sequence splits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tavp_tensor::Tensor;

use super::io::{image_size, read_boxes, read_frame, write_boxes, write_frame, BoxFormat};
use super::synth::Sequence;
use super::{clamp_box, window_sequences, Sample, Split, WindowSpec};
use crate::error::{Error, Result};

const FRAME_EXTS: [&str; 6] = ["pgm", "ppm", "pnm", "png", "jpg", "jpeg"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.7, val: 0.2, test: 0.1 }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        for (f, v) in [("data.split_train", self.train), ("data.split_val", self.val), ("data.split_test", self.test)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(f, format!("{v} is outside [0, 1]")));
            }
        }
        if (self.train + self.val + self.test - 1.0).abs() > 1e-9 {
            return Err(Error::config("data.split_train", "split fractions must sum to 1"));
        }
        Ok(())
    }
}

/// Assign whole sequences to splits: ids are sorted, shuffled by `seed`, then
/// cut by rounded fractions (the test split takes the remainder).
pub fn assign_splits(ids: &[String], fractions: SplitFractions, seed: u64) -> Vec<(String, Split)> {
    let mut ids = ids.to_vec();
    ids.sort();
    ids.dedup();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len();
    let n_train = ((n as f64 * fractions.train).round() as usize).min(n);
    let n_val = ((n as f64 * fractions.val).round() as usize).min(n - n_train);
    ids.into_iter()
        .enumerate()
        .map(|(i, id)| {
            let s = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            (id, s)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub seq: String,
    pub start: usize,
    pub split: Split,
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let _ = writeln!(out, "{},{},{}", e.seq, e.start, e.split);
    }
    out
}

pub fn parse_manifest(path: &Path, text: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::data(path, format!("line {}: expected `seq_id,start,split`, got `{line}`", n + 1));
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 3 {
            return Err(bad());
        }
        let start = f[1].parse().map_err(|_| bad())?;
        let split = Split::parse(f[2]).ok_or_else(bad)?;
        out.push(ManifestEntry { seq: f[0].to_string(), start, split });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub seq: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct SequenceInfo {
    pub id: String,
    pub frames: Vec<PathBuf>,
    pub boxes: Vec<Option<[f64; 4]>>,
    /// Native `(h, w)` of the frame files.
    pub size: (usize, usize),
    pub split: Split,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub spec: WindowSpec,
    pub sequences: BTreeMap<String, SequenceInfo>,
    pub manifest: Vec<ManifestEntry>,
    pub rejected: Vec<Rejection>,
}

fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::data(dir, e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()).is_some_and(|e| FRAME_EXTS.contains(&e.to_ascii_lowercase().as_str())))
        .collect();
    files.sort();
    Ok(files)
}

/// Scale a pixel box from a `from = (h, w)` frame to a `to = (h, w)` frame.
pub fn scale_box(b: [f64; 4], from: (usize, usize), to: (usize, usize)) -> [f64; 4] {
    let sx = to.1 as f64 / from.1 as f64;
    let sy = to.0 as f64 / from.0 as f64;
    [b[0] * sx, b[1] * sy, b[2] * sx, b[3] * sy]
}

/// Scan a dataset root, reject malformed sequences, split per sequence and
/// enumerate windows. Windows touching a NaN annotation are skipped.
pub fn adapt_sot(root: &Path, spec: WindowSpec, fractions: SplitFractions, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    fractions.validate()?;
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::data(root, e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut rejected = Vec::new();
    let mut found = Vec::new();
    for dir in dirs {
        let id = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let (fdir, bpath) = (dir.join("frames"), dir.join("boxes.txt"));
        if !fdir.is_dir() || !bpath.is_file() {
            rejected.push(Rejection { seq: id, reason: "missing frames/ or boxes.txt".into() });
            continue;
        }
        let frames = frame_files(&fdir)?;
        let boxes = read_boxes(&bpath, BoxFormat::TopLeft)?;
        if frames.len() != boxes.len() {
            rejected.push(Rejection { seq: id, reason: format!("{} annotation lines for {} frames", boxes.len(), frames.len()) });
            continue;
        }
        if frames.is_empty() {
            rejected.push(Rejection { seq: id, reason: "no frames".into() });
            continue;
        }
        let size = image_size(&frames[0])?;
        found.push(SequenceInfo { id, frames, boxes, size, split: Split::Train });
    }
    let ids: Vec<String> = found.iter().map(|s| s.id.clone()).collect();
    let splits: BTreeMap<String, Split> = assign_splits(&ids, fractions, seed).into_iter().collect();
    let mut sequences = BTreeMap::new();
    let mut manifest = Vec::new();
    for mut s in found {
        s.split = splits[&s.id];
        for (start, end) in window_sequences(s.frames.len(), &spec) {
            if s.boxes[start..end].iter().all(Option::is_some) {
                manifest.push(ManifestEntry { seq: s.id.clone(), start, split: s.split });
            }
        }
        sequences.insert(s.id.clone(), s);
    }
    manifest.sort_by(|a, b| (a.split, &a.seq, a.start).cmp(&(b.split, &b.seq, b.start)));
    Ok(Dataset { root: root.to_path_buf(), spec, sequences, manifest, rejected })
}

impl Dataset {
    /// Load one window, frames resized to `size = (h, w)` and boxes scaled to match.
    pub fn load_sample(&self, e: &ManifestEntry, channels: usize, size: (usize, usize)) -> Result<Sample> {
        let s = self.sequences.get(&e.seq).ok_or_else(|| Error::data(&self.root, format!("unknown sequence `{}`", e.seq)))?;
        let end = e.start + self.spec.width;
        if end > s.frames.len() {
            return Err(Error::data(&self.root, format!("window {}..{end} exceeds sequence `{}`", e.start, e.seq)));
        }
        let mut frames = Vec::with_capacity(self.spec.width);
        let mut boxes = Vec::with_capacity(self.spec.width * 4);
        for t in e.start..end {
            frames.push(read_frame(&s.frames[t], channels, Some(size))?);
            let b = s.boxes[t].ok_or_else(|| Error::data(&s.frames[t], "window contains a NaN annotation"))?;
            boxes.extend(clamp_box(scale_box(b, s.size, size), size.0, size.1));
        }
        Ok(Sample {
            frames: Tensor::stack(&frames)?,
            boxes: Tensor::new([self.spec.width, 4], boxes)?,
            split: e.split,
            seq: e.seq.clone(),
            start: e.start,
        })
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.manifest.iter().filter(move |e| e.split == split)
    }

    pub fn samples(&self, split: Split, channels: usize, size: (usize, usize)) -> Result<Vec<Sample>> {
        self.entries(split).map(|e| self.load_sample(e, channels, size)).collect()
    }
}

/// Write sequences in the dataset layout; frames use extension `ext`.
pub fn write_sequences(root: &Path, seqs: &[Sequence], ext: &str) -> Result<()> {
    for s in seqs {
        let fdir = root.join(&s.id).join("frames");
        fs::create_dir_all(&fdir).map_err(|e| Error::data(&fdir, e.to_string()))?;
        for t in 0..s.frames.shape()[0] {
            write_frame(&fdir.join(format!("{t:06}.{ext}")), &s.frames.index_axis0(t))?;
        }
        write_boxes(&root.join(&s.id).join("boxes.txt"), &s.boxes, BoxFormat::TopLeft)?;
    }
    Ok(())
}

/// Window in-memory sequences directly, all tagged with `split`.
pub fn window_in_memory(seqs: &[Sequence], spec: &WindowSpec, split: Split) -> Vec<Sample> {
    let mut out = Vec::new();
    for s in seqs {
        for (start, end) in window_sequences(s.frames.shape()[0], spec) {
            out.push(Sample {
                frames: s.frames.narrow0(start, end),
                boxes: s.boxes.narrow0(start, end),
                split,
                seq: s.id.clone(),
                start,
            });
        }
    }
    out
}
