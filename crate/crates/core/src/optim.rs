//! Adam and the one-cycle learning-rate schedule.

use std::f64::consts::PI;

use tavp_tensor::{precision, ParamStore, Tensor};

use crate::config::{OptimConfig, ScheduleConfig, ScheduleKind};

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    /// Updates applied so far.
    pub step: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, cfg: &OptimConfig) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        Adam { beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.eps, m: zeros.clone(), v: zeros, step: 0 }
    }

    /// One bias-corrected update; parameters without a gradient are left alone.
    /// Results are rounded to the thread precision.
    pub fn update(&mut self, store: &mut ParamStore, grads: &[Option<Tensor>], lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let p = precision();
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let Some(g) = &grads[k] else { continue };
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let param = store.get_mut(id);
            for (((x, mi), vi), gi) in param.data_mut().iter_mut().zip(m.data_mut()).zip(v.data_mut()).zip(g.data()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                *x -= lr * (*mi / c1) / ((*vi / c2).sqrt() + self.eps);
            }
            p.round_slice(param.data_mut());
            p.round_slice(m.data_mut());
            p.round_slice(v.data_mut());
        }
    }
}

/// Scale all gradients so their joint L2 norm is at most `max`; returns the norm before scaling.
pub fn clip_grad_norm(grads: &mut [Option<Tensor>], max: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g.data().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
    if norm > max {
        let s = max / norm;
        for g in grads.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

/// Starts at `max_lr / div`, cosine-rises to `max_lr` at `warmup * total`,
/// then cosine-anneals to `max_lr / (div * final_div)` at `total`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneCycle {
    pub max_lr: f64,
    pub total: usize,
    pub warmup: f64,
    pub div: f64,
    pub final_div: f64,
}

fn cos_interp(from: f64, to: f64, frac: f64) -> f64 {
    to + (from - to) * 0.5 * (1.0 + (PI * frac.clamp(0.0, 1.0)).cos())
}

impl OneCycle {
    pub fn initial(&self) -> f64 {
        self.max_lr / self.div
    }

    pub fn last(&self) -> f64 {
        self.max_lr / (self.div * self.final_div)
    }

    pub fn lr(&self, step: usize) -> f64 {
        let peak = self.warmup * self.total as f64;
        if step == 0 {
            return self.initial();
        }
        if step >= self.total {
            return self.last();
        }
        let s = step as f64;
        if s <= peak {
            if peak == 0.0 {
                return self.max_lr;
            }
            cos_interp(self.initial(), self.max_lr, s / peak)
        } else {
            cos_interp(self.max_lr, self.last(), (s - peak) / (self.total as f64 - peak))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    OneCycle(OneCycle),
    Constant(f64),
}

impl Schedule {
    pub fn new(cfg: &ScheduleConfig, max_lr: f64, total: usize) -> Self {
        match cfg.kind {
            ScheduleKind::OneCycle => {
                Schedule::OneCycle(OneCycle { max_lr, total, warmup: cfg.warmup, div: cfg.div, final_div: cfg.final_div })
            }
            ScheduleKind::Constant => Schedule::Constant(max_lr),
        }
    }

    pub fn lr(&self, step: usize) -> f64 {
        match self {
            Schedule::OneCycle(o) => o.lr(step),
            Schedule::Constant(v) => *v,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_cycle_endpoints() {
        let o = OneCycle { max_lr: 1e-3, total: 1000, warmup: 0.3, div: 25.0, final_div: 1e4 };
        assert_eq!(o.lr(0), 1e-3 / 25.0);
        assert_eq!(o.lr(300), 1e-3);
        assert!((o.lr(1000) - 1e-3 / 2.5e5).abs() < 1e-20);
        assert!(o.lr(150) > o.lr(0) && o.lr(150) < o.lr(300));
        assert!(o.lr(600) < o.lr(300) && o.lr(600) > o.lr(1000));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::new([2], vec![1.0, -1.0]).unwrap()).unwrap();
        let cfg = OptimConfig { lr: 0.1, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: None };
        let mut adam = Adam::new(&store, &cfg);
        adam.update(&mut store, &[Some(Tensor::new([2], vec![3.0, -0.5]).unwrap())], 0.1);
        let w = store.iter().next().unwrap().2.data().to_vec();
        assert!((w[0] - 0.9).abs() < 1e-6 && (w[1] + 0.9).abs() < 1e-6, "{w:?}");
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut g = vec![Some(Tensor::new([2], vec![3.0, 4.0]).unwrap()), None];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0].as_ref().unwrap().norm() - 1.0).abs() < 1e-12);
    }
}
