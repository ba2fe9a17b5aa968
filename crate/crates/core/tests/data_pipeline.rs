//! Windowing, per-sequence splits, the SOT adapter on disk and the synthetic
//! generator's honesty checks.

use std::collections::BTreeSet;
use std::fs;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tavp::data::io::{format_boxes, parse_boxes, BoxFormat};
use tavp::data::sot::{format_manifest, parse_manifest, scale_box, write_sequences};
use tavp::data::{adapt_sot, assign_splits, clamp_box, generate_synthetic, window_sequences, Motion, Split, SplitFractions, WindowSpec};
use tavp_tensor::Tensor;

fn enumerate(len: usize, width: usize, stride: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut s = 0;
    while s + width <= len {
        out.push((s, s + width));
        s += stride;
    }
    out
}

#[test]
fn window_counts_match_enumeration() {
    for stride in [6, 16] {
        let spec = WindowSpec::new(8, 8, stride).unwrap();
        for len in 16..=216 {
            let w = window_sequences(len, &spec);
            assert_eq!(w, enumerate(len, 16, stride), "len {len} stride {stride}");
            assert_eq!(w.len(), (len - 16) / stride + 1);
        }
    }
}

#[test]
fn window_examples() {
    let s6 = WindowSpec::new(8, 8, 6).unwrap();
    let s16 = WindowSpec::new(8, 8, 16).unwrap();
    assert_eq!(window_sequences(16, &s6).len(), 1);
    assert_eq!(window_sequences(106, &s6).len(), 16);
    assert_eq!(window_sequences(100, &s16).len(), 6);
    assert!(window_sequences(15, &s6).is_empty());
}

#[test]
fn splits_are_disjoint_on_random_datasets() {
    let mut r = ChaCha8Rng::seed_from_u64(21);
    for k in 0..50 {
        let n = r.random_range(1..30);
        let seqs = generate_synthetic(k, n, 8, 8, 2, 1);
        let ids: Vec<String> = seqs.iter().map(|s| s.id.clone()).collect();
        let assigned = assign_splits(&ids, SplitFractions::default(), r.random());
        assert_eq!(assigned.len(), n);
        let mut per = [BTreeSet::new(), BTreeSet::new(), BTreeSet::new()];
        for (id, s) in &assigned {
            per[*s as usize].insert(id.clone());
        }
        for a in 0..3 {
            for b in a + 1..3 {
                assert!(per[a].is_disjoint(&per[b]));
            }
        }
        assert_eq!(per.iter().map(BTreeSet::len).sum::<usize>(), n);
    }
}

#[test]
fn ten_sequences_split_seven_two_one() {
    let ids: Vec<String> = (0..10).map(|i| format!("seq{i}")).collect();
    let a = assign_splits(&ids, SplitFractions::default(), 3);
    let count = |s: Split| a.iter().filter(|x| x.1 == s).count();
    assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (7, 2, 1));
}

#[test]
fn proportional_box_scaling() {
    let b = scale_box([640.0, 360.0, 100.0, 50.0], (720, 1280), (256, 256));
    assert_eq!(&b[..3], &[128.0, 128.0, 20.0]);
    assert!((b[3] - 50.0 * 256.0 / 720.0).abs() < 1e-12);
    assert!((b[3] - 17.78).abs() < 0.01);
}

#[test]
fn synthetic_generation_is_deterministic() {
    let a = generate_synthetic(7, 4, 16, 16, 8, 1);
    let b = generate_synthetic(7, 4, 16, 16, 8, 1);
    assert_eq!(a, b);
    assert_ne!(a, generate_synthetic(8, 4, 16, 16, 8, 1));
}

#[test]
fn synthetic_targets_are_visible_and_inside() {
    for seq in generate_synthetic(3, 24, 32, 32, 16, 1) {
        for t in 0..16 {
            let [cx, cy, w, h] = [0, 1, 2, 3].map(|k| seq.boxes.get(&[t, k]));
            assert!(cx - w / 2.0 >= 0.0 && cx + w / 2.0 <= 32.0 && cy - h / 2.0 >= 0.0 && cy + h / 2.0 <= 32.0);
            let (mut inside, mut n_in, mut outside, mut n_out) = (0.0, 0, 0.0, 0);
            for i in 0..32 {
                for j in 0..32 {
                    let (x, y) = (j as f64 + 0.5, i as f64 + 0.5);
                    let v = seq.frames.get(&[t, 0, i, j]);
                    if (x - cx).abs() < w / 2.0 && (y - cy).abs() < h / 2.0 {
                        inside += v;
                        n_in += 1;
                    } else {
                        outside += v;
                        n_out += 1;
                    }
                }
            }
            let contrast = inside / n_in as f64 - outside / n_out as f64;
            assert!(contrast >= 0.2, "{} frame {t}: contrast {contrast}", seq.id);
        }
    }
}

#[test]
fn linear_targets_follow_constant_velocity() {
    let seqs = generate_synthetic(5, 40, 32, 32, 16, 1);
    let linear: Vec<_> = seqs.iter().filter(|s| s.motion == Motion::Linear).collect();
    assert!(!linear.is_empty());
    for s in linear {
        let mut err = 0.0;
        for t in 2..16 {
            let px = 2.0 * s.boxes.get(&[t - 1, 0]) - s.boxes.get(&[t - 2, 0]);
            let py = 2.0 * s.boxes.get(&[t - 1, 1]) - s.boxes.get(&[t - 2, 1]);
            err += (px - s.boxes.get(&[t, 0])).hypot(py - s.boxes.get(&[t, 1]));
        }
        assert!(err / 14.0 < 1e-6, "{}: ADE {}", s.id, err / 14.0);
    }
}

#[test]
fn datagen_round_trips_through_the_adapter() {
    let dir = tempfile::tempdir().unwrap();
    let seqs = generate_synthetic(9, 6, 16, 16, 12, 1);
    write_sequences(dir.path(), &seqs, "pgm").unwrap();
    let spec = WindowSpec::new(4, 4, 4).unwrap();
    let ds = adapt_sot(dir.path(), spec, SplitFractions::default(), 1).unwrap();
    assert!(ds.rejected.is_empty(), "{:?}", ds.rejected);
    assert_eq!(ds.sequences.len(), 6);
    assert_eq!(ds.manifest.len(), 6 * 2);
    for e in &ds.manifest {
        let s = ds.load_sample(e, 1, (16, 16)).unwrap();
        let src = seqs.iter().find(|q| q.id == e.seq).unwrap();
        let want = src.frames.narrow0(e.start, e.start + 8);
        assert!(s.frames.max_abs_diff(&want) <= 0.5 / 255.0 + 1e-12);
        assert!(s.boxes.max_abs_diff(&src.boxes.narrow0(e.start, e.start + 8)) <= 1e-9);
    }
    let again = tempfile::tempdir().unwrap();
    write_sequences(again.path(), &seqs, "pgm").unwrap();
    for s in &seqs {
        assert_eq!(fs::read(dir.path().join(&s.id).join("boxes.txt")).unwrap(), fs::read(again.path().join(&s.id).join("boxes.txt")).unwrap());
        assert_eq!(
            fs::read(dir.path().join(&s.id).join("frames/000003.pgm")).unwrap(),
            fs::read(again.path().join(&s.id).join("frames/000003.pgm")).unwrap()
        );
    }
    let text = format_manifest(&ds.manifest);
    assert_eq!(parse_manifest(dir.path(), &text).unwrap(), ds.manifest);
}

#[test]
fn adapter_rejects_count_mismatch_and_names_bad_lines() {
    let dir = tempfile::tempdir().unwrap();
    let seqs = generate_synthetic(2, 2, 8, 8, 16, 1);
    write_sequences(dir.path(), &seqs, "pgm").unwrap();
    let bpath = dir.path().join("synth_0000").join("boxes.txt");
    let text = fs::read_to_string(&bpath).unwrap();
    let short: Vec<&str> = text.lines().take(15).collect();
    fs::write(&bpath, short.join("\n")).unwrap();
    let ds = adapt_sot(dir.path(), WindowSpec::new(8, 8, 6).unwrap(), SplitFractions::default(), 0).unwrap();
    assert_eq!(ds.rejected.len(), 1);
    assert_eq!(ds.rejected[0].seq, "synth_0000");
    assert!(ds.rejected[0].reason.contains("15 annotation lines for 16 frames"));

    fs::write(&bpath, "1,2,3,4\n1,2,x,4\n").unwrap();
    let err = adapt_sot(dir.path(), WindowSpec::new(8, 8, 6).unwrap(), SplitFractions::default(), 0).unwrap_err().to_string();
    assert!(err.contains("boxes.txt") && err.contains("line 2"), "{err}");
}

#[test]
fn nan_annotations_skip_their_windows() {
    let dir = tempfile::tempdir().unwrap();
    let seqs = generate_synthetic(4, 1, 8, 8, 22, 1);
    write_sequences(dir.path(), &seqs, "pgm").unwrap();
    let bpath = dir.path().join("synth_0000").join("boxes.txt");
    let mut lines: Vec<String> = fs::read_to_string(&bpath).unwrap().lines().map(String::from).collect();
    lines[20] = "NaN,NaN,NaN,NaN".into();
    fs::write(&bpath, lines.join("\n")).unwrap();
    let ds = adapt_sot(dir.path(), WindowSpec::new(8, 8, 6).unwrap(), SplitFractions { train: 1.0, val: 0.0, test: 0.0 }, 0).unwrap();
    let starts: Vec<usize> = ds.manifest.iter().map(|e| e.start).collect();
    assert_eq!(starts, vec![0]);
}

#[test]
fn center_box_text_round_trips_exactly() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let t = Tensor::from_fn(&[6, 4], |_| r.random_range(0.0..100.0));
    let parsed = parse_boxes("x".as_ref(), &format_boxes(&t, BoxFormat::Center), BoxFormat::Center).unwrap();
    let flat: Vec<f64> = parsed.into_iter().flat_map(|b| b.unwrap()).collect();
    assert_eq!(flat, t.data());
}

proptest! {
    #[test]
    fn window_formula_holds(width in 2usize..40, stride in 1usize..30, extra in 0usize..200) {
        let spec = WindowSpec::new(width / 2, width - width / 2, stride);
        prop_assume!(spec.is_ok());
        let spec = spec.unwrap();
        let len = width + extra;
        let w = window_sequences(len, &spec);
        prop_assert_eq!(w.len(), extra / stride + 1);
        prop_assert_eq!(w, enumerate(len, width, stride));
    }

    #[test]
    fn clamped_boxes_lie_in_frame(cx in -50.0..150.0f64, cy in -50.0..150.0f64, w in 0.0..120.0f64, h in 0.0..120.0f64) {
        let b = clamp_box([cx, cy, w, h], 64, 96);
        prop_assert!(b[0] - b[2] / 2.0 >= -1e-9 && b[0] + b[2] / 2.0 <= 96.0 + 1e-9);
        prop_assert!(b[1] - b[3] / 2.0 >= -1e-9 && b[1] + b[3] / 2.0 <= 64.0 + 1e-9);
        prop_assert!(b[2] >= 0.0 && b[3] >= 0.0);
    }
}
