#![allow(dead_code)]

pub mod blocks;
pub mod oracles;
pub mod reference;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tavp::ablation::Ablation;
use tavp::model::ModelConfig;
use tavp::nn::{init_rng, Builder};
use tavp_tensor::gradcheck::{check, GradCheckOptions};
use tavp_tensor::{Graph, ParamStore, Result, Session, Tensor, Var};

pub const INSTANCES: u64 = 20;
pub const TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Random normalized boxes `[B, T, 4]` well inside the unit square.
pub fn rand_boxes(rng: &mut ChaCha8Rng, b: usize, t: usize) -> Tensor {
    Tensor::from_fn(&[b, t, 4], |i| if i % 4 < 2 { rng.random_range(0.3..0.7) } else { rng.random_range(0.15..0.35) })
}

/// 8x8 grayscale, 2 -> 2 frames, C_hid 4 (C' 8), depth 2, 2 heads, 2 ROI / 1 state token.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        channels: 1,
        height: 8,
        width: 8,
        frames_in: 2,
        frames_out: 2,
        c_hid: 4,
        c_dec: 4,
        depth: 2,
        heads: 2,
        mlp_ratio: 2,
        pos_embed: true,
        ablation: Ablation::full(2, 1),
    }
}

/// Fixed random projection so every probe sees a generic scalar.
pub fn project(g: &Graph, y: &Var, seed: u64) -> Result<Var> {
    let mut r = rng(seed ^ 0x5eed);
    let w = g.constant(rand_tensor(&mut r, y.shape(), -1.0, 1.0));
    y.mul(&w)?.sum_all()
}

/// Build a block into a fresh store.
pub fn build<T>(seed: u64, f: impl FnOnce(&mut Builder) -> Result<T>) -> (T, ParamStore) {
    let mut store = ParamStore::new();
    let mut r = init_rng(seed);
    let block = f(&mut Builder::new(&mut store, &mut r)).unwrap();
    (block, store)
}

/// Gradient check over data inputs and every parameter of `store`, with
/// LayerNorm/GroupNorm affine parameters perturbed away from 1/0.
pub fn check_block<F>(name: &str, seed: u64, data: Vec<Tensor>, store: &ParamStore, f: F) -> f64
where
    F: Fn(&Session, &[Var]) -> Result<Var>,
{
    let mut r = rng(seed ^ 0xabc);
    let n = data.len();
    let mut inputs = data;
    for (_, _, t) in store.iter() {
        let d = t.data();
        inputs.push(Tensor::from_fn(t.shape(), |i| d[i] + r.random_range(-0.1..0.1)));
    }
    let opts = GradCheckOptions { seed, ..Default::default() };
    let report = check(&inputs, &opts, |g, vars| {
        let s = Session::from_vars(g.clone(), store, vars[n..].to_vec())?;
        f(&s, &vars[..n])
    })
    .unwrap();
    if report.max_rel_err > TOL {
        eprintln!(
            "{name} instance {seed}: rel err {} (input {}, analytic {}, numeric {})",
            report.max_rel_err, report.worst.0, report.worst.1, report.worst.2
        );
    }
    report.max_rel_err
}
