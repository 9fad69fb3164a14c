//! Named, ordered parameter collections.
//!
//! A [`ParameterSet`] is the unit federated averaging aggregates, the weights
//! file serializes, and the optimizer updates. Entry order is part of the
//! contract: two sets are shape-compatible iff their name/shape sequences are
//! identical.

use super::graph::{Graph, NodeId};
use super::{Scalar, Tensor};
use crate::error::{CoreError, Result};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<T: Scalar> {
    pub name: String,
    pub tensor: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<T: Scalar> {
    entries: Vec<ParamEntry<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Scalar> Default for ParameterSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParameterSet<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new(), index: BTreeMap::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(CoreError::Contract(format!(
                "duplicate parameter name {name:?}"
            )));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(ParamEntry { name, tensor });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamEntry<T>> {
        self.entries.iter()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index_of(name).map(|i| &self.entries[i].tensor)
    }

    pub fn tensor_at(&self, i: usize) -> &Tensor<T> {
        &self.entries[i].tensor
    }

    pub fn tensor_at_mut(&mut self, i: usize) -> &mut Tensor<T> {
        &mut self.entries[i].tensor
    }

    pub fn name_at(&self, i: usize) -> &str {
        &self.entries[i].name
    }

    /// Identical name/shape sequences (dtype equality is enforced by `T`).
    pub fn shape_compatible(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.tensor.shape() == b.tensor.shape())
    }

    /// Describe the first incompatibility against `other`, if any.
    pub fn incompatibility(&self, other: &Self) -> Option<String> {
        if self.entries.len() != other.entries.len() {
            return Some(format!(
                "entry count {} vs {}",
                self.entries.len(),
                other.entries.len()
            ));
        }
        for (a, b) in self.entries.iter().zip(&other.entries) {
            if a.name != b.name {
                return Some(format!("name {:?} vs {:?}", a.name, b.name));
            }
            if a.tensor.shape() != b.tensor.shape() {
                return Some(format!(
                    "{}: shape {:?} vs {:?}",
                    a.name,
                    a.tensor.shape(),
                    b.tensor.shape()
                ));
            }
        }
        None
    }

    /// Subset of entries whose names satisfy the predicate, preserving order.
    pub fn filtered(&self, keep: impl Fn(&str) -> bool) -> Self {
        let mut out = Self::new();
        for e in &self.entries {
            if keep(&e.name) {
                out.push(e.name.clone(), e.tensor.clone()).expect("names stay unique");
            }
        }
        out
    }

    /// Overwrite matching entries with the values from `src`. Every name in
    /// `src` must exist here with the same shape.
    pub fn assign_from(&mut self, src: &Self) -> Result<()> {
        for e in &src.entries {
            let i = self.index_of(&e.name).ok_or_else(|| {
                CoreError::Contract(format!("unknown parameter {:?} in assignment", e.name))
            })?;
            if self.entries[i].tensor.shape() != e.tensor.shape() {
                return Err(CoreError::InvalidShape(format!(
                    "{}: cannot assign shape {:?} over {:?}",
                    e.name,
                    e.tensor.shape(),
                    self.entries[i].tensor.shape()
                )));
            }
            self.entries[i].tensor = e.tensor.clone();
        }
        Ok(())
    }

    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.numel()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        let mut out = ParameterSet::new();
        for e in &self.entries {
            out.push(e.name.clone(), e.tensor.cast()).expect("names stay unique");
        }
        out
    }

    /// Insert every entry as a graph leaf; `trainable` decides per name
    /// whether the leaf participates in gradients.
    pub fn bind(&self, g: &mut Graph<T>, trainable: impl Fn(&str) -> bool) -> BoundParams {
        let ids = self
            .entries
            .iter()
            .map(|e| g.leaf(e.tensor.clone(), trainable(&e.name)))
            .collect();
        BoundParams { ids }
    }

    pub fn bind_all_trainable(&self, g: &mut Graph<T>) -> BoundParams {
        self.bind(g, |_| true)
    }
}

/// Graph leaves corresponding to a [`ParameterSet`], index-aligned.
#[derive(Debug, Clone)]
pub struct BoundParams {
    ids: Vec<NodeId>,
}

impl BoundParams {
    pub fn id(&self, i: usize) -> NodeId {
        self.ids[i]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Collect the accumulated leaf gradients, index-aligned with the set.
    pub fn grads<T: Scalar>(&self, g: &Graph<T>) -> Gradients<T> {
        Gradients(self.ids.iter().map(|&id| g.grad(id).cloned()).collect())
    }
}

/// Per-parameter gradients, index-aligned with a [`ParameterSet`]. Entries
/// the backward pass never reached are `None`.
#[derive(Debug, Clone)]
pub struct Gradients<T: Scalar>(pub Vec<Option<Tensor<T>>>);

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(params: &ParameterSet<T>) -> Self {
        Self(params.iter().map(|e| Some(Tensor::zeros(e.tensor.shape()))).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Tensor<T>> {
        self.0.get(i).and_then(|g| g.as_ref())
    }

    /// `self += other`; missing entries on either side are treated as zero.
    pub fn accumulate(&mut self, other: &Gradients<T>) -> Result<()> {
        if self.0.len() != other.0.len() {
            return Err(CoreError::Contract(format!(
                "gradient count mismatch: {} vs {}",
                self.0.len(),
                other.0.len()
            )));
        }
        for (dst, src) in self.0.iter_mut().zip(&other.0) {
            if let Some(s) = src {
                match dst {
                    Some(d) => d.add_scaled(s, T::ONE)?,
                    none => *none = Some(s.clone()),
                }
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for g in self.0.iter_mut().flatten() {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ps(names: &[(&str, &[usize])]) -> ParameterSet<f32> {
        let mut p = ParameterSet::new();
        for (n, s) in names {
            p.push(*n, Tensor::zeros(s)).unwrap();
        }
        p
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ParameterSet::<f32>::new();
        p.push("w", Tensor::zeros(&[2])).unwrap();
        assert!(p.push("w", Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn shape_compatibility_requires_same_sequence() {
        let a = ps(&[("a", &[2, 3]), ("b", &[4])]);
        let b = ps(&[("a", &[2, 3]), ("b", &[4])]);
        let c = ps(&[("b", &[4]), ("a", &[2, 3])]);
        let d = ps(&[("a", &[3, 2]), ("b", &[4])]);
        assert!(a.shape_compatible(&b));
        assert!(!a.shape_compatible(&c));
        assert!(!a.shape_compatible(&d));
    }

    #[test]
    fn filtered_keeps_order() {
        let p = ps(&[("encoder.w", &[1]), ("classifier.w", &[1]), ("encoder.b", &[1])]);
        let f = p.filtered(|n| n.starts_with("encoder."));
        assert_eq!(f.len(), 2);
        assert_eq!(f.name_at(0), "encoder.w");
        assert_eq!(f.name_at(1), "encoder.b");
    }

    #[test]
    fn assign_from_checks_shapes() {
        let mut p = ps(&[("w", &[2, 2])]);
        let mut src = ParameterSet::<f32>::new();
        src.push("w", Tensor::filled(&[2, 2], 1.5)).unwrap();
        p.assign_from(&src).unwrap();
        assert_eq!(p.get("w").unwrap().data(), &[1.5; 4]);

        let mut bad = ParameterSet::<f32>::new();
        bad.push("w", Tensor::zeros(&[4])).unwrap();
        assert!(p.assign_from(&bad).is_err());
    }
}
