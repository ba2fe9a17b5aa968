//! Training state in the tensor container format: parameters, Adam moments,
//! step counter, resolved config text and seed.

use std::path::Path;

use tavp_tensor::{Container, ParamStore, Precision, Tensor};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::optim::Adam;

const PARAM: &str = "param.";
const MOMENT1: &str = "adam.m.";
const MOMENT2: &str = "adam.v.";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Vec<(String, Tensor)>,
    pub adam_m: Vec<Tensor>,
    pub adam_v: Vec<Tensor>,
    pub step: u64,
    pub config: String,
    pub seed: u64,
    pub dtype: Precision,
}

impl Checkpoint {
    pub fn capture(store: &ParamStore, adam: &Adam, config: &RunConfig) -> Self {
        Checkpoint {
            params: store.iter().map(|(_, n, t)| (n.to_string(), t.clone())).collect(),
            adam_m: adam.m.clone(),
            adam_v: adam.v.clone(),
            step: adam.step,
            config: config.to_text(),
            seed: config.train.seed,
            dtype: config.train.precision,
        }
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::default();
        c.meta.insert("step".into(), self.step.to_string());
        c.meta.insert("seed".into(), self.seed.to_string());
        c.meta.insert("config".into(), self.config.clone());
        for (k, (name, t)) in self.params.iter().enumerate() {
            c.push(format!("{PARAM}{name}"), self.dtype, t.clone());
            c.push(format!("{MOMENT1}{name}"), self.dtype, self.adam_m[k].clone());
            c.push(format!("{MOMENT2}{name}"), self.dtype, self.adam_v[k].clone());
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let meta = |k: &str| c.meta.get(k).ok_or_else(|| Error::Input(format!("checkpoint lacks `{k}`")));
        let num = |k: &str| -> Result<u64> { meta(k)?.parse().map_err(|_| Error::Input(format!("checkpoint `{k}` is not a number"))) };
        let mut params = Vec::new();
        let mut adam_m = Vec::new();
        let mut adam_v = Vec::new();
        let mut dtype = Precision::F64;
        for nt in &c.tensors {
            if let Some(name) = nt.name.strip_prefix(PARAM) {
                dtype = nt.dtype;
                let moment = |p: &str| {
                    c.get(&format!("{p}{name}")).map(|m| m.tensor.clone()).ok_or_else(|| Error::Input(format!("checkpoint lacks {p}{name}")))
                };
                adam_m.push(moment(MOMENT1)?);
                adam_v.push(moment(MOMENT2)?);
                params.push((name.to_string(), nt.tensor.clone()));
            }
        }
        Ok(Checkpoint { params, adam_m, adam_v, step: num("step")?, config: meta("config")?.clone(), seed: num("seed")?, dtype })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(self.to_container().save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path).map_err(|e| Error::data(path, e.to_string()))?)
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        RunConfig::parse(&self.config)
    }

    /// Copy the parameters into a store built from the same config.
    pub fn restore(&self, store: &mut ParamStore) -> Result<()> {
        Ok(store.load_from(&self.params)?)
    }

    pub fn adam(&self, cfg: &RunConfig) -> Adam {
        Adam {
            beta1: cfg.optim.beta1,
            beta2: cfg.optim.beta2,
            eps: cfg.optim.eps,
            m: self.adam_m.clone(),
            v: self.adam_v.clone(),
            step: self.step,
        }
    }
}
