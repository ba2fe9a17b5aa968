//! Ablation-lattice runnability, the all-off baseline against a hand-built
//! transformer video predictor, and motion-decoder causality.

mod common;

use common::reference::Reference;
use common::{rand_boxes, rand_tensor, rng, tiny_config};
use tavp::ablation::{lattice, Ablation};
use tavp::data::{generate_synthetic, Batch, Split, WindowSpec};
use tavp::data::sot::window_in_memory;
use tavp::decoders::MotionDecoder;
use tavp::losses::{total_loss, LossWeights};
use tavp::model::{Inputs, Model, ModelConfig};
use tavp::nn::{init_rng, Builder};
use tavp::train::batch_losses;
use tavp::Error;
use tavp_tensor::{Graph, ParamStore, Session, Tensor};

fn tiny_batch(cfg: &ModelConfig, n: usize, seed: u64) -> Batch {
    let seqs = generate_synthetic(seed, n, cfg.height, cfg.width, cfg.frames_in + cfg.frames_out, cfg.channels);
    let spec = WindowSpec::new(cfg.frames_in, cfg.frames_out, 1).unwrap();
    let samples = window_in_memory(&seqs, &spec, Split::Train);
    Batch::new(&samples.iter().collect::<Vec<_>>(), cfg.frames_in).unwrap()
}

#[test]
fn every_lattice_row_trains_and_predicts() {
    let mut cfg = tiny_config();
    cfg.c_hid = 16;
    cfg.height = 16;
    cfg.width = 16;
    let batch = tiny_batch(&cfg, 2, 3);
    let rows = lattice(8, 2);
    assert_eq!(rows.len(), 24);
    for (name, ab) in rows {
        cfg.ablation = ab;
        let (model, store) = Model::build(&cfg, 1).unwrap_or_else(|e| panic!("{name}: {e}"));
        let s = Session::new(Graph::new(), &store);
        let (parts, out) = batch_losses(&model, &s, &batch, &LossWeights::default()).unwrap();
        let loss = total_loss(&parts, 0.001, 0.001).unwrap();
        assert!(loss.item().is_finite(), "{name}");
        let grads = s.graph().backward(&loss).unwrap();
        let g = s.param_grads(&grads);
        assert!(g.iter().any(|x| x.as_ref().is_some_and(|t| t.norm() > 0.0)), "{name}: no gradient");
        assert_eq!(out.frames.is_some(), ab.video, "{name}");
        assert_eq!(out.boxes.is_some(), ab.motion, "{name}");
        if let Some(f) = &out.frames {
            assert_eq!(f.shape(), &[2, cfg.frames_out, 1, 16, 16]);
        }
        if let Some(b) = &out.boxes {
            assert_eq!(b.shape(), &[2, cfg.frames_out, 4]);
        }
        let (m, n) = ab.ism.counts();
        if let (Some(r), Some(t)) = (&out.encoded.last.roi, &out.encoded.last.state) {
            assert_eq!((r.shape()[1], t.shape()[1]), (m, n), "{name}");
        } else {
            assert!(!ab.ism.enabled, "{name}");
        }
    }
}

#[test]
fn table_rows_are_named() {
    let names: Vec<String> = lattice(8, 2).into_iter().map(|r| r.0).collect();
    for want in [
        "modules/VP",
        "modules/VP+MP+STA+ISM+TSGL",
        "init/random+random",
        "init/roi+states",
        "counts/2:2",
        "counts/16:4",
        "phases/none",
        "phases/a+b+c",
    ] {
        assert!(names.iter().any(|n| n == want), "{want}");
    }
}

#[test]
fn all_off_matches_plain_transformer_bit_for_bit() {
    for (seed, mut cfg) in [(0, ModelConfig::desk()), (1, tiny_config())] {
        cfg.ablation = Ablation::vp();
        let (model, store) = Model::build(&cfg, seed).unwrap();
        assert!(store.iter().all(|(_, n, _)| n.starts_with("embed.spatial") || n.starts_with("encoder") || n.starts_with("decoder.video")));
        let mut r = rng(seed);
        let frames = rand_tensor(&mut r, &[2, cfg.frames_in, cfg.channels, cfg.height, cfg.width], 0.0, 1.0);
        let boxes = tavp::train::to_pixels(&rand_boxes(&mut r, 2, cfg.frames_in), cfg.height, cfg.width);
        let s = Session::new(Graph::inference(), &store);
        let g = s.graph();
        let out = model.forward(&s, &Inputs { frames: g.constant(frames.clone()), boxes: g.constant(boxes) }, None).unwrap();
        let reference = Reference { g: Graph::inference(), store: &store }.forward(&cfg, &frames).unwrap();
        assert!(out.boxes.is_none());
        assert_eq!(out.frames.unwrap().value().data(), reference.value().data());
    }
}

#[test]
fn teacher_forced_decoding_is_causal() {
    let cfg = tiny_config();
    let mut store = ParamStore::new();
    let dec = MotionDecoder::new(&mut Builder::new(&mut store, &mut init_rng(4)), &cfg).unwrap();
    let mut r = rng(4);
    let memory = rand_tensor(&mut r, &[2, cfg.frames_in, cfg.width()], -1.0, 1.0);
    let last = rand_boxes(&mut r, 2, 1);
    let steps = 4;
    let teacher = rand_boxes(&mut r, 2, steps);
    let run = |t: &Tensor| {
        let s = Session::new(Graph::inference(), &store);
        let g = s.graph();
        dec.decode(&s, &g.constant(memory.clone()), &g.constant(last.clone()), Some(&g.constant(t.clone())), steps).unwrap().value().clone()
    };
    let base = run(&teacher);
    for j in 0..steps {
        let mut moved = teacher.clone();
        for b in 0..2 {
            for k in 0..4 {
                moved.set(&[b, j, k], moved.get(&[b, j, k]) + 0.3);
            }
        }
        let out = run(&moved);
        for step in 0..steps {
            let same = (0..2).all(|b| (0..4).all(|k| out.get(&[b, step, k]) == base.get(&[b, step, k])));
            assert_eq!(same, step <= j, "perturbing teacher step {j} vs output step {step}");
        }
    }
}

#[test]
fn autoregressive_decoding_agrees_with_its_own_teacher() {
    let cfg = tiny_config();
    let mut store = ParamStore::new();
    let dec = MotionDecoder::new(&mut Builder::new(&mut store, &mut init_rng(6)), &cfg).unwrap();
    let mut r = rng(6);
    let s = Session::new(Graph::inference(), &store);
    let g = s.graph();
    let memory = g.constant(rand_tensor(&mut r, &[2, cfg.frames_in, cfg.width()], -1.0, 1.0));
    let last = g.constant(rand_boxes(&mut r, 2, 1));
    let auto = dec.decode(&s, &memory, &last, None, 3).unwrap();
    let forced = dec.decode(&s, &memory, &last, Some(&auto), 3).unwrap();
    assert!(auto.value().max_abs_diff(forced.value()) <= 1e-12);
}

#[test]
fn bad_inputs_are_reported() {
    let cfg = tiny_config();
    let (model, store) = Model::build(&cfg, 0).unwrap();
    let s = Session::new(Graph::inference(), &store);
    let g = s.graph();
    let frames = g.constant(Tensor::zeros(&[1, cfg.frames_in, 1, 8, 8]));
    let boxes = g.constant(Tensor::full(&[1, cfg.frames_in, 4], 2.0));
    let wrong = g.constant(Tensor::zeros(&[1, cfg.frames_in, 1, 8, 4]));
    assert!(matches!(model.forward(&s, &Inputs { frames: wrong, boxes: boxes.clone() }, None), Err(Error::Input(_))));
    let nan = g.constant(Tensor::full(&[1, cfg.frames_in, 4], f64::NAN));
    assert!(matches!(model.forward(&s, &Inputs { frames: frames.clone(), boxes: nan }, None), Err(Error::Input(_))));
    assert!(matches!(model.forward_train(&s, &Inputs { frames, boxes }, None), Err(Error::Usage(_))));
    let mut bad = cfg.clone();
    bad.heads = 3;
    let err = Model::build(&bad, 0).unwrap_err().to_string();
    assert!(err.contains("model.heads"), "{err}");
}
