//! Named parameter tensors with deterministic ordering.
//!
//! The store owns every trainable tensor as a flat f64 buffer plus shape.
//! Insertion order is the canonical order: the optimizer walks it, the
//! checkpoint writes it, and tape bindings follow it, so two runs with the
//! same construction path see identical layouts.

use std::collections::HashMap;

use crate::autodiff::{Gradients, Tape, Tensor};
use crate::error::TapeError;

#[derive(Clone, Debug)]
pub struct ParamTensor {
    pub name: String,
    pub values: Vec<f64>,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    tensors: Vec<ParamTensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a tensor. Names must be unique; shape must match the
    /// buffer length.
    pub fn insert(&mut self, name: &str, values: Vec<f64>, shape: Vec<usize>) {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "shape {shape:?} inconsistent with buffer for {name}"
        );
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter {name}"
        );
        self.index.insert(name.to_string(), self.tensors.len());
        self.tensors.push(ParamTensor {
            name: name.to_string(),
            values,
            shape,
        });
    }

    pub fn get(&self, name: &str) -> &ParamTensor {
        let i = *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut ParamTensor {
        let i = *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        &mut self.tensors[i]
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Tensors in canonical (insertion) order.
    pub fn iter(&self) -> impl Iterator<Item = &ParamTensor> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.tensors.iter().map(|t| t.values.len()).sum()
    }
}

/// Parameters bound to a tape as leaves, addressable by name.
pub struct Binding {
    handles: HashMap<String, Tensor>,
    order: Vec<String>,
}

impl Binding {
    /// Bind every tensor in the store to `tape` in canonical order.
    pub fn bind(tape: &mut Tape, store: &ParamStore) -> Result<Binding, TapeError> {
        let mut handles = HashMap::new();
        let mut order = Vec::with_capacity(store.len());
        for t in store.iter() {
            let h = tape.leaf(t.values.clone(), &t.shape)?;
            handles.insert(t.name.clone(), h);
            order.push(t.name.clone());
        }
        Ok(Binding { handles, order })
    }

    pub fn tensor(&self, name: &str) -> Tensor {
        *self
            .handles
            .get(name)
            .unwrap_or_else(|| panic!("unbound parameter {name}"))
    }

    /// Gradient buffers for every bound tensor, in canonical order; zeros
    /// for tensors the loss never touched.
    pub fn gradients(&self, tape: &Tape, grads: &Gradients) -> Vec<(String, Vec<f64>)> {
        self.order
            .iter()
            .map(|name| {
                let h = self.handles[name];
                (name.clone(), grads.get_or_zeros(h, tape))
            })
            .collect()
    }
}
