//! `tavp`: synthetic data generation, training, evaluation and prediction.
//!
//! Relative output paths are resolved under `$TAVP_OUT` when it is set.
//! Exit codes: 0 success, 1 other failure, 2 config error, 3 numerical abort.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tavp::checkpoint::Checkpoint;
use tavp::config::RunConfig;
use tavp::data::io::{overlay, write_boxes, write_frame, BoxFormat};
use tavp::data::sot::{format_manifest, write_sequences};
use tavp::data::{adapt_sot, generate_synthetic, Dataset, ManifestEntry, Split};
use tavp::eval::{evaluate, predict};
use tavp::train::{load_model, planned_steps, train};
use tavp::{Error, Result};
use tavp_tensor::ParamStore;

const OVERLAY_COLOR: [f64; 3] = [1.0, 0.0, 0.0];

#[derive(Parser)]
#[command(name = "tavp", version, about = "Target-aware aerial video prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset to `data.root`.
    Datagen {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train on the training split of `data.root`.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on one split and write report.tsv / report.kv.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Data settings to use instead of the checkpoint's own.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Score the ground truth against itself.
        #[arg(long)]
        gt_as_pred: bool,
        /// Report directory; defaults to the checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict the future of one window and write frames, boxes and overlays.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        seq: String,
        #[arg(long)]
        start: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_root(path: &Path) -> PathBuf {
    match std::env::var_os("TAVP_OUT") {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

fn read_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::data(path, e.to_string()))?;
    RunConfig::parse(&text)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::data(dir, e.to_string()))
}

fn open_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let ds = adapt_sot(&cfg.data.root, cfg.window()?, cfg.data.split, cfg.data.split_seed)?;
    for r in &ds.rejected {
        eprintln!("rejected sequence {}: {}", r.seq, r.reason);
    }
    Ok(ds)
}

fn datagen(config: &Path) -> Result<()> {
    let cfg = read_config(config)?;
    let m = &cfg.model;
    let seqs = generate_synthetic(cfg.gen.seed, cfg.gen.n, m.height, m.width, cfg.gen.length, m.channels);
    create_dir(&cfg.data.root)?;
    write_sequences(&cfg.data.root, &seqs, &cfg.gen.ext)?;
    println!("wrote {} sequences of {} frames to {}", seqs.len(), cfg.gen.length, cfg.data.root.display());
    Ok(())
}

fn train_cmd(config: &Path) -> Result<()> {
    let cfg = read_config(config)?;
    let ds = open_dataset(&cfg)?;
    let m = &cfg.model;
    let samples = ds.samples(Split::Train, m.channels, (m.height, m.width))?;
    if samples.is_empty() {
        return Err(Error::data(&cfg.data.root, "no training windows"));
    }
    let dir = out_root(&cfg.train.out_dir);
    create_dir(&dir)?;
    fs::write(dir.join("manifest.txt"), format_manifest(&ds.manifest)).map_err(|e| Error::data(&dir, e.to_string()))?;
    println!("training on {} windows for {} steps", samples.len(), planned_steps(&cfg, samples.len()));
    let outcome = train(&cfg, &samples, Some(&dir))?;
    let every = cfg.train.log_every.max(1);
    for r in outcome.trace.iter().filter(|r| r.step % every == 0) {
        println!("step {:>6}  total {:.6}  video {:.6}  motion {:.6}  gaussian {:.6}  lr {:.3e}", r.step, r.total, r.video, r.motion, r.gaussian, r.lr);
    }
    println!("loss drop {:.1}%; checkpoint {}", 100.0 * outcome.loss_drop(), dir.join("final.ckpt").display());
    Ok(())
}

/// Model-facing fields that must agree between a checkpoint and a data config.
fn check_compatible(ckpt: &RunConfig, data: &RunConfig) -> Result<()> {
    let (a, b) = (&ckpt.model, &data.model);
    let fields = [
        ("data.channels", a.channels, b.channels),
        ("data.height", a.height, b.height),
        ("data.width", a.width, b.width),
        ("data.frames_in", a.frames_in, b.frames_in),
        ("data.frames_out", a.frames_out, b.frames_out),
    ];
    for (name, x, y) in fields {
        if x != y {
            return Err(Error::config(name, format!("checkpoint config has {x}, data config has {y}")));
        }
    }
    Ok(())
}

fn load(ckpt: &Path) -> Result<(RunConfig, tavp::Model, ParamStore)> {
    load_model(&Checkpoint::load(ckpt)?)
}

fn eval_cmd(ckpt: &Path, split: &str, config: Option<&Path>, gt_as_pred: bool, out: Option<&Path>) -> Result<()> {
    let split = Split::parse(split).ok_or_else(|| Error::Usage(format!("unknown split `{split}`; expected train, val or test")))?;
    let (mut cfg, model, store) = load(ckpt)?;
    if let Some(path) = config {
        let data = read_config(path)?;
        check_compatible(&cfg, &data)?;
        cfg.data = data.data;
    }
    let ds = open_dataset(&cfg)?;
    let m = &cfg.model;
    let samples = ds.samples(split, m.channels, (m.height, m.width))?;
    let report = evaluate(&model, &store, &samples, cfg.train.batch_size, gt_as_pred)?;
    let dir = out.map(out_root).unwrap_or_else(|| ckpt.parent().map(Path::to_path_buf).unwrap_or_default());
    create_dir(&dir)?;
    let write = |name: &str, text: String| fs::write(dir.join(name), text).map_err(|e| Error::data(dir.join(name), e.to_string()));
    write("report.tsv", report.to_table())?;
    write("report.kv", report.to_kv())?;
    print!("{}", report.to_table());
    Ok(())
}

fn predict_cmd(ckpt: &Path, seq: &str, start: usize, out: Option<&Path>) -> Result<()> {
    let (cfg, model, store) = load(ckpt)?;
    let ds = open_dataset(&cfg)?;
    let info = ds.sequences.get(seq).ok_or_else(|| Error::data(&cfg.data.root, format!("unknown sequence `{seq}`")))?;
    let m = &cfg.model;
    let entry = ManifestEntry { seq: seq.to_string(), start, split: info.split };
    let sample = ds.load_sample(&entry, m.channels, (m.height, m.width))?;
    let pred = predict(&model, &store, &[&sample])?.remove(0);
    let dir = out.map(out_root).unwrap_or_else(|| out_root(&cfg.train.out_dir).join(format!("predict_{seq}_{start}")));
    create_dir(&dir)?;
    let (_, truth_boxes) = sample.future(m.frames_in);
    let boxes = pred.boxes.clone().unwrap_or(truth_boxes);
    if let Some(b) = &pred.boxes {
        write_boxes(&dir.join("pred_boxes.txt"), b, BoxFormat::Center)?;
    }
    let frames = match &pred.frames {
        Some(f) => f.clone(),
        None => sample.future(m.frames_in).0,
    };
    for t in 0..m.frames_out {
        let frame = frames.index_axis0(t);
        if pred.frames.is_some() {
            write_frame(&dir.join(format!("pred_{t:03}.{}", cfg.gen.ext)), &frame)?;
        }
        let bx = [0, 1, 2, 3].map(|k| boxes.get(&[t, k]));
        write_frame(&dir.join(format!("overlay_{t:03}.ppm")), &overlay(&frame, bx, OVERLAY_COLOR)?)?;
    }
    println!("wrote {} predicted steps to {}", m.frames_out, dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Datagen { config } => datagen(&config),
        Command::Train { config } => train_cmd(&config),
        Command::Eval { ckpt, split, config, gt_as_pred, out } => eval_cmd(&ckpt, &split, config.as_deref(), gt_as_pred, out.as_deref()),
        Command::Predict { ckpt, seq, start, out } => predict_cmd(&ckpt, &seq, start, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match &e {
                Error::Config { .. } => 2,
                e if e.is_numerical() => 3,
                _ => 1,
            })
        }
    }
}
