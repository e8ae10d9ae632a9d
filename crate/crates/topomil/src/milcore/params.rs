//! Named parameter storage, leased onto a tape per forward pass.

use std::collections::HashMap;

use crate::autodiff::{Node, Tape};
use crate::tensor::Tensor;

use super::ModelError;

/// A named trainable array with its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Ordered parameter registry. Declaration order is part of the model's
/// contract (checkpoints store arrays in this order).
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    entries: Vec<Parameter>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter; duplicate names are an error.
    pub fn register(&mut self, name: &str, value: Tensor) -> Result<usize, ModelError> {
        if self.index.contains_key(name) {
            return Err(ModelError::DuplicateParameter {
                name: name.to_string(),
            });
        }
        let id = self.entries.len();
        let grad = Tensor::zeros(value.shape());
        self.entries.push(Parameter {
            name: name.to_string(),
            value,
            grad,
        });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.entries.iter()
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn value_at(&self, i: usize) -> &Tensor {
        &self.entries[i].value
    }

    pub fn grad_at(&self, i: usize) -> &Tensor {
        &self.entries[i].grad
    }

    /// Overwrites a parameter's value; shape must match the declaration.
    pub fn set_value(&mut self, name: &str, value: Tensor) -> Result<(), ModelError> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| ModelError::UnknownParameter {
                name: name.to_string(),
            })?;
        if self.entries[i].value.shape() != value.shape() {
            return Err(ModelError::ParameterShape {
                name: name.to_string(),
                expected: self.entries[i].value.shape().to_vec(),
                got: value.shape().to_vec(),
            });
        }
        self.entries[i].value = value;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.entries {
            for g in p.grad.data_mut() {
                *g = 0.0;
            }
        }
    }

    /// Applies `update(value, grad_slot)` to every parameter element.
    pub fn for_each_value_mut(&mut self, mut f: impl FnMut(usize, &mut Tensor, &Tensor)) {
        for (i, p) in self.entries.iter_mut().enumerate() {
            f(i, &mut p.value, &p.grad);
        }
    }

    #[cfg(test)]
    pub(crate) fn set_grad_for_test(&mut self, name: &str, g: f64) {
        self.set_grad_vec_for_test(name, &[g]);
    }

    #[cfg(test)]
    pub(crate) fn set_grad_vec_for_test(&mut self, name: &str, g: &[f64]) {
        let i = self.index[name];
        self.entries[i].grad.data_mut().copy_from_slice(g);
    }
}

/// Tape leaves for every parameter, index-aligned with the [`ParamSet`].
pub struct BoundParams<'t> {
    nodes: Vec<Node<'t>>,
}

impl<'t> BoundParams<'t> {
    pub fn bind(params: &ParamSet, tape: &'t Tape) -> Self {
        let nodes = params.iter().map(|p| tape.leaf(&p.value)).collect();
        BoundParams { nodes }
    }

    pub fn node(&self, params: &ParamSet, name: &str) -> Node<'t> {
        let i = params
            .index_of(name)
            .unwrap_or_else(|| panic!("parameter {name} not declared"));
        self.nodes[i]
    }

    /// Accumulates every leaf's tape gradient back into the parameter set.
    pub fn pull_grads(&self, params: &mut ParamSet) {
        for (i, node) in self.nodes.iter().enumerate() {
            let g = node.grad();
            let slot = &mut params.entries[i].grad;
            for (acc, add) in slot.data_mut().iter_mut().zip(g.data()) {
                *acc += add;
            }
        }
    }
}
