//! Named parameter collections.
//!
//! Models and the generator both expose their trainable state as an ordered
//! list of named tensors. The order is fixed at construction time, so Adam
//! moment buffers, checkpoints, and gradient checks all line up by index.

use super::{Tensor, TensorError};

/// One named trainable tensor.
#[derive(Clone)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
}

/// Ordered collection of named parameters.
#[derive(Clone, Default)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { params: Vec::new() }
    }

    /// Appends a trainable tensor under a unique name.
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        debug_assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        self.params.push(Param { name, tensor });
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.tensor)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    /// Total number of trainable elements.
    pub fn total_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// A copy whose tensors share values but are frozen leaves: no gradient
    /// tracking, no tape membership. Used for the fixed discriminators.
    pub fn detached(&self) -> ParamSet {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    tensor: p.tensor.detached(),
                })
                .collect(),
        }
    }

    /// A trainable deep copy (fresh leaves with `requires_grad = true`).
    pub fn trainable_copy(&self) -> ParamSet {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    tensor: Tensor::param(p.tensor.shape(), p.tensor.values().to_vec())
                        .expect("shape/values invariant"),
                })
                .collect(),
        }
    }

    /// True when both sets hold identical names, shapes, and bit-identical
    /// values, in the same order.
    pub fn bits_eq(&self, other: &ParamSet) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(other.params.iter())
                .all(|(a, b)| a.name == b.name && a.tensor.bits_eq(&b.tensor))
    }

    /// Fails if any parameter holds a non-finite value.
    pub fn check_finite(&self, context: &str) -> Result<(), TensorError> {
        for p in &self.params {
            if !p.tensor.is_finite() {
                return Err(TensorError::NonFinite {
                    context: format!("{context}: parameter '{}'", p.name),
                });
            }
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a ParamSet {
    type Item = &'a Param;
    type IntoIter = std::slice::Iter<'a, Param>;

    fn into_iter(self) -> Self::IntoIter {
        self.params.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_count_sums_elements() {
        let mut ps = ParamSet::new();
        ps.push("w", Tensor::param(&[2, 3], vec![0.0; 6]).unwrap());
        ps.push("b", Tensor::param(&[3], vec![0.0; 3]).unwrap());
        assert_eq!(ps.total_count(), 9);
    }

    #[test]
    fn detached_set_is_frozen_but_value_equal() {
        let mut ps = ParamSet::new();
        ps.push("w", Tensor::param(&[2], vec![1.0, -2.0]).unwrap());
        let frozen = ps.detached();
        assert!(ps.bits_eq(&frozen));
        assert!(!frozen.get("w").unwrap().requires_grad());
    }
}
