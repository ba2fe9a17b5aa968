//! Finite-difference gradient cases for every differentiable op on random
//! small shapes (64-bit, h = 1e-5). Each case returns the worst relative
//! error over its instances.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tavp_tensor::gradcheck::{check, GradCheckOptions};
use tavp_tensor::{Graph, Result, Tensor, Var};

pub const INSTANCES: u64 = 20;
pub const TOL: f64 = 1e-4;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.5..1.5))
}

fn dims(rng: &mut ChaCha8Rng, rank: usize) -> Vec<usize> {
    (0..rank).map(|_| rng.random_range(1..5)).collect()
}

/// Fixed random projection so every probe sees a generic scalar.
fn project(g: &Graph, y: &Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = g.constant(rand_tensor(&mut rng, y.shape()));
    y.mul(&w)?.sum_all()
}

fn run<S, F>(name: &str, mut make_inputs: S, f: F) -> f64
where
    S: FnMut(&mut ChaCha8Rng) -> Vec<Tensor>,
    F: Fn(&Graph, &[Var], u64) -> Result<Var> + Copy,
{
    let mut worst: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed * 7919 + name.len() as u64);
        let inputs = make_inputs(&mut rng);
        let opts = GradCheckOptions { seed, ..Default::default() };
        let report = check(&inputs, &opts, |g, v| f(g, v, seed)).unwrap();
        if report.max_rel_err > TOL {
            eprintln!(
                "{name} instance {seed}: rel err {} (input {}, analytic {}, numeric {})",
                report.max_rel_err, report.worst.0, report.worst.1, report.worst.2
            );
        }
        worst = worst.max(report.max_rel_err);
    }
    worst
}

pub fn matmul() -> f64 {
    run(
        "matmul",
        |r| {
            let (m, k, n) = (r.random_range(1..5), r.random_range(1..5), r.random_range(1..5));
            vec![rand_tensor(r, &[2, m, k]), rand_tensor(r, &[k, n])]
        },
        |g, v, s| project(g, &v[0].matmul(&v[1])?, s),
    )
}

/// Gradient of sum(A·B) with respect to both factors.
pub fn matmul_sum() -> f64 {
    run(
        "matmul_sum",
        |r| vec![rand_tensor(r, &[3, 4]), rand_tensor(r, &[4, 2])],
        |_, v, _| v[0].matmul(&v[1])?.sum_all(),
    )
}

pub fn binary_broadcast() -> f64 {
    run(
        "add_mul_sub_div",
        |r| {
            let s = dims(r, 3);
            let b = vec![1, s[1], s[2]];
            let c = vec![s[2]];
            let d = Tensor::from_fn(&s, |_| r.random_range(0.5..2.0));
            vec![rand_tensor(r, &s), rand_tensor(r, &b), rand_tensor(r, &c), d]
        },
        |g, v, s| {
            let y = v[0].add(&v[1])?.mul(&v[2])?.sub(&v[1])?.div(&v[3])?;
            project(g, &y, s)
        },
    )
}

pub fn unary() -> f64 {
    run(
        "unary",
        |r| {
            let s = dims(r, 2);
            vec![rand_tensor(r, &s)]
        },
        |g, v, s| {
            let x = &v[0];
            let y = x
                .sigmoid()?
                .add(&x.gelu()?)?
                .add(&x.tanh()?)?
                .add(&x.exp()?.scale(0.3)?)?
                .add(&x.square()?.add_scalar(0.5)?)?
                .add(&x.neg()?)?;
            project(g, &y, s)
        },
    )
}

pub fn relu_smooth_l1() -> f64 {
    run(
        "relu_smooth_l1",
        |r| {
            let s = dims(r, 2);
            // keep |x| away from 0 and from the smooth-l1 knee at 1
            vec![Tensor::from_fn(&s, |_| {
                let m = if r.random_bool(0.5) { r.random_range(0.05..0.9) } else { r.random_range(1.1..2.5) };
                if r.random_bool(0.5) { m } else { -m }
            })]
        },
        |g, v, s| project(g, &v[0].relu()?.add(&v[0].smooth_l1(1.0)?)?, s),
    )
}

pub fn softmax() -> f64 {
    run(
        "softmax",
        |r| {
            let s = dims(r, 3);
            vec![rand_tensor(r, &s)]
        },
        |g, v, s| project(g, &v[0].softmax((s % 3) as usize)?, s),
    )
}

pub fn layer_norm() -> f64 {
    run(
        "layer_norm",
        |r| {
            let mut s = dims(r, 3);
            s[2] = r.random_range(2..6);
            let n = s[2];
            vec![rand_tensor(r, &s), rand_tensor(r, &[n]), rand_tensor(r, &[n])]
        },
        |g, v, s| project(g, &v[0].layer_norm(2, Some(&v[1]), Some(&v[2]), 1e-5)?, s),
    )
}

pub fn layer_norm_inner_axis() -> f64 {
    run(
        "layer_norm_axis1",
        |r| {
            let mut s = dims(r, 3);
            s[1] = r.random_range(2..6);
            vec![rand_tensor(r, &s)]
        },
        |g, v, s| project(g, &v[0].layer_norm(1, None, None, 1e-5)?, s),
    )
}

pub fn conv2d() -> f64 {
    run(
        "conv2d",
        |r| {
            let (cin, cout) = (r.random_range(1..4), r.random_range(1..4));
            let k = r.random_range(1..4);
            let h = r.random_range(k..7);
            vec![rand_tensor(r, &[2, cin, h, h + 1]), rand_tensor(r, &[cout, cin, k, k])]
        },
        |g, v, s| project(g, &v[0].conv2d(&v[1], 1 + (s % 2) as usize, (s % 3 == 0) as usize)?, s),
    )
}

pub fn conv_transpose2d() -> f64 {
    run(
        "conv_transpose2d",
        |r| {
            let (cin, cout) = (r.random_range(1..4), r.random_range(1..4));
            let k = r.random_range(2..5);
            vec![rand_tensor(r, &[2, cin, 3, 4]), rand_tensor(r, &[cin, cout, k, k])]
        },
        |g, v, s| project(g, &v[0].conv_transpose2d(&v[1], 1 + (s % 2) as usize, (s % 2) as usize)?, s),
    )
}

pub fn avg_pool() -> f64 {
    run(
        "avg_pool2d",
        |r| {
            let s = [2, 2, r.random_range(2..7), r.random_range(2..7)];
            vec![rand_tensor(r, &s)]
        },
        |g, v, s| project(g, &v[0].avg_pool2d(2, 1 + (s % 2) as usize)?, s),
    )
}

pub fn reductions() -> f64 {
    run(
        "sum_mean",
        |r| {
            let s = dims(r, 3);
            vec![rand_tensor(r, &s)]
        },
        |g, v, s| {
            let a = project(g, &v[0].sum_axis((s % 3) as usize, s % 2 == 0)?, s)?;
            let b = v[0].mean_all()?;
            let c = project(g, &v[0].mean_axis(((s + 1) % 3) as usize, true)?, s + 1)?;
            a.add(&b)?.add(&c)
        },
    )
}

pub fn shape_op() -> f64 {
    run(
        "reshape_permute_slice_concat",
        |r| {
            let s = vec![r.random_range(2..5), r.random_range(1..4), r.random_range(1..4)];
            let mut t = s.clone();
            t[0] = r.random_range(1..3);
            vec![rand_tensor(r, &s), rand_tensor(r, &t)]
        },
        |g, v, s| {
            let c = Var::concat(&[&v[0], &v[1]], 0)?;
            let n = c.shape()[0];
            let sl = c.slice(0, 1, n)?;
            let p = sl.permute(&[2, 0, 1])?.transpose(0, 1)?;
            let flat = p.reshape(&[p.value().numel()])?;
            project(g, &flat, s)
        },
    )
}

/// A named case returning its worst relative error.
pub type Case = (&'static str, fn() -> f64);

pub const ALL: &[Case] = &[
    ("matmul", matmul),
    ("matmul_sum", matmul_sum),
    ("binary_broadcast", binary_broadcast),
    ("unary", unary),
    ("relu_smooth_l1", relu_smooth_l1),
    ("softmax", softmax),
    ("layer_norm", layer_norm),
    ("layer_norm_inner_axis", layer_norm_inner_axis),
    ("conv2d", conv2d),
    ("conv_transpose2d", conv_transpose2d),
    ("avg_pool", avg_pool),
    ("reductions", reductions),
    ("shape_op", shape_op),
];
