//! Named parameter storage with per-parameter optimizer state.

use std::collections::BTreeMap;

use super::tensor::{Real, Scalar, Tensor};

/// One trainable tensor plus its adaptive-moment accumulators.
#[derive(Clone, Debug)]
pub struct Param<S = Real> {
    pub value: Tensor<S>,
    pub m1: Tensor<S>,
    pub m2: Tensor<S>,
    pub step: u64,
}

impl<S: Scalar> Param<S> {
    fn new(value: Tensor<S>) -> Self {
        let m1 = Tensor::zeros(value.shape());
        let m2 = Tensor::zeros(value.shape());
        Self { value, m1, m2, step: 0 }
    }
}

/// Ordered map of named parameters. The version counter advances on any
/// mutation so activation tapes can detect staleness.
#[derive(Clone, Debug, Default)]
pub struct ParameterSet<S = Real> {
    params: BTreeMap<String, Param<S>>,
    version: u64,
}

impl<S: Scalar> ParameterSet<S> {
    pub fn new() -> Self {
        Self { params: BTreeMap::new(), version: 0 }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<S>) {
        self.params.insert(name.into(), Param::new(value));
        self.version += 1;
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.params.get(name).map(|p| &p.value)
    }

    /// Mutable access to a parameter value (used by tests and checkpoint
    /// loading). Bumps the version.
    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.version += 1;
        self.params.get_mut(name).map(|p| &mut p.value)
    }

    pub fn param(&self, name: &str) -> Option<&Param<S>> {
        self.params.get(name)
    }

    pub(crate) fn param_mut_no_version(&mut self, name: &str) -> Option<&mut Param<S>> {
        self.params.get_mut(name)
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.params.iter().map(|(k, p)| (k.as_str(), &p.value))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Total scalar parameter count.
    pub fn total_values(&self) -> usize {
        self.params.values().map(|p| p.value.numel()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(|p| p.value.is_finite())
    }
}

impl ParameterSet<Real> {
    /// Content digest of all parameter values, used by frozen-parameter
    /// checks and determinism tests.
    pub fn content_hash(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for (name, param) in &self.params {
            hasher.update(name.as_bytes());
            for v in param.value.data() {
                hasher.update(v.to_le_bytes());
            }
        }
        hasher.finalize().into()
    }
}

/// Gradients keyed by parameter name; shapes mirror the parameters.
#[derive(Clone, Debug, Default)]
pub struct ParamGrads<S = Real> {
    grads: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> ParamGrads<S> {
    pub fn new() -> Self {
        Self { grads: BTreeMap::new() }
    }

    /// Add `grad` into the accumulator for `name`, creating it if absent.
    pub fn accumulate(&mut self, name: &str, grad: &Tensor<S>) {
        match self.grads.get_mut(name) {
            Some(existing) => {
                assert_eq!(existing.shape(), grad.shape(), "gradient shape changed for {name}");
                for (a, &b) in existing.data_mut().iter_mut().zip(grad.data()) {
                    *a = *a + b;
                }
            }
            None => {
                self.grads.insert(name.to_string(), grad.clone());
            }
        }
    }

    /// Merge another gradient map into this one, scaled by `scale`.
    pub fn merge_scaled(&mut self, other: &ParamGrads<S>, scale: S) {
        for (name, grad) in &other.grads {
            match self.grads.get_mut(name) {
                Some(existing) => {
                    for (a, &b) in existing.data_mut().iter_mut().zip(grad.data()) {
                        *a = *a + b * scale;
                    }
                }
                None => {
                    let scaled: Vec<S> = grad.data().iter().map(|&v| v * scale).collect();
                    self.grads.insert(name.clone(), Tensor::new(grad.shape().to_vec(), scaled));
                }
            }
        }
    }

    pub fn scale(&mut self, factor: S) {
        for grad in self.grads.values_mut() {
            for v in grad.data_mut() {
                *v = *v * factor;
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Euclidean norm over every gradient value, accumulated in f64.
    pub fn global_norm(&self) -> f64 {
        self.grads.values().map(|g| g.sq_norm()).sum::<f64>().sqrt()
    }
}
