use std::cell::RefCell;
use std::collections::HashMap;

use crate::error::{Result, TensorError};
use crate::graph::{Gradients, Graph, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::Format(format!("duplicate parameter name {name}")));
        }
        self.index.insert(name.clone(), self.values.len());
        self.names.push(name);
        self.values.push(value);
        Ok(ParamId(self.values.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    /// Replace every value from `other`, matching by name and shape.
    pub fn load_from(&mut self, other: &[(String, Tensor)]) -> Result<()> {
        if other.len() != self.len() {
            return Err(TensorError::Format(format!(
                "expected {} parameters, found {}",
                self.len(),
                other.len()
            )));
        }
        for (name, t) in other {
            let id = self
                .id(name)
                .ok_or_else(|| TensorError::Format(format!("unknown parameter {name}")))?;
            if self.get(id).shape() != t.shape() {
                return Err(TensorError::Format(format!(
                    "parameter {name}: shape {:?} does not match model shape {:?}",
                    t.shape(),
                    self.get(id).shape()
                )));
            }
            *self.get_mut(id) = t.clone();
        }
        Ok(())
    }
}

/// Parameters of a store exposed as leaves of one graph. Each parameter is
/// bound on first use, so unused parameters never enter the tape.
pub struct Session<'s> {
    graph: Graph,
    store: &'s ParamStore,
    vars: RefCell<Vec<Option<Var>>>,
}

impl<'s> Session<'s> {
    pub fn new(graph: Graph, store: &'s ParamStore) -> Self {
        Session { graph, store, vars: RefCell::new(vec![None; store.len()]) }
    }

    /// Bind every parameter to a caller-supplied variable, in store order.
    /// Used to differentiate with respect to parameters as explicit inputs.
    pub fn from_vars(graph: Graph, store: &'s ParamStore, vars: Vec<Var>) -> Result<Self> {
        if vars.len() != store.len() {
            return Err(TensorError::Format(format!(
                "expected {} parameter bindings, got {}",
                store.len(),
                vars.len()
            )));
        }
        for (id, v) in store.ids().zip(&vars) {
            if v.shape() != store.get(id).shape() {
                return Err(TensorError::Format(format!(
                    "binding for {} has shape {:?}, expected {:?}",
                    store.name(id),
                    v.shape(),
                    store.get(id).shape()
                )));
            }
        }
        Ok(Session { graph, store, vars: RefCell::new(vars.into_iter().map(Some).collect()) })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn param(&self, id: ParamId) -> Var {
        let mut vars = self.vars.borrow_mut();
        vars[id.0]
            .get_or_insert_with(|| self.graph.leaf(self.store.get(id).clone()))
            .clone()
    }

    /// Per-parameter gradients; `None` where a parameter did not influence the root.
    pub fn param_grads(&self, grads: &Gradients) -> Vec<Option<Tensor>> {
        self.vars
            .borrow()
            .iter()
            .map(|v| v.as_ref().and_then(|v| grads.get(v).cloned()))
            .collect()
    }

    pub fn bound_var(&self, id: ParamId) -> Option<Var> {
        self.vars.borrow()[id.0].clone()
    }
}
