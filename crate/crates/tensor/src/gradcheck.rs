//! Central finite-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::{with_precision, Precision, Tensor};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Random single coordinates probed per input.
    pub coords_per_input: usize,
    /// Random directional derivatives probed per input.
    pub directions_per_input: usize,
    /// Magnitudes below this are compared absolutely.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { step: 1e-5, coords_per_input: 3, directions_per_input: 2, floor: 1e-6, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub probes: usize,
    /// Input index, analytic and numeric values of the worst probe.
    pub worst: (usize, f64, f64),
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compare the gradient of the scalar `f(inputs)` against central
/// differences, in 64-bit precision, for every input tensor.
pub fn check<F>(inputs: &[Tensor], opts: &GradCheckOptions, f: F) -> Result<GradCheckReport>
where
    F: Fn(&Graph, &[Var]) -> Result<Var>,
{
    let _p = with_precision(Precision::F64);
    let g = Graph::new();
    let leaves: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&g, &leaves)?;
    let grads = g.backward(&out)?;
    let analytic: Vec<Tensor> = leaves.iter().map(|v| grads.get_or_zeros(v)).collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let g = Graph::inference();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.leaf(t.clone())).collect();
        Ok(f(&g, &vars)?.item())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport { max_rel_err: 0.0, probes: 0, worst: (0, 0.0, 0.0) };
    let mut work = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let mut directions: Vec<Tensor> = (0..opts.coords_per_input)
            .map(|_| {
                let hot = rng.random_range(0..n);
                Tensor::from_fn(input.shape(), |j| if j == hot { 1.0 } else { 0.0 })
            })
            .collect();
        for _ in 0..opts.directions_per_input {
            directions.push(Tensor::from_fn(input.shape(), |_| rng.random_range(-1.0..1.0)));
        }
        for dir in directions {
            let a: f64 = analytic[i].data().iter().zip(dir.data()).map(|(g, d)| g * d).sum();
            work[i] = input.zip_map(&dir, |x, d| x + opts.step * d);
            let plus = eval(&work)?;
            work[i] = input.zip_map(&dir, |x, d| x - opts.step * d);
            let minus = eval(&work)?;
            work[i] = input.clone();
            let numeric = (plus - minus) / (2.0 * opts.step);
            let err = relative_error(a, numeric, opts.floor);
            report.probes += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = (i, a, numeric);
            }
        }
    }
    Ok(report)
}
