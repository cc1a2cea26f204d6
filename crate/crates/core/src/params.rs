//! Named parameter tensors with per-tensor trainable flags.
//!
//! Iteration order is fixed at insertion and everything downstream (Adam
//! moments, gradients, checkpoints, byte snapshots) relies on it.

use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Param<T: Scalar = f64> {
    pub name: String,
    pub tensor: DenseMatrix<T>,
    pub trainable: bool,
}

/// Ordered collection of named tensors.
#[derive(Debug, Clone, Default)]
pub struct ParameterSet<T: Scalar = f64> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParameterSet<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: DenseMatrix<T>, trainable: bool) {
        let name = name.into();
        assert!(
            self.get(&name).is_none(),
            "duplicate parameter name {name:?}"
        );
        self.params.push(Param {
            name,
            tensor,
            trainable,
        });
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn trainable(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter().filter(|p| p.trainable)
    }

    pub fn trainable_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut().filter(|p| p.trainable)
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn tensor(&self, name: &str) -> &DenseMatrix<T> {
        &self.get(name).unwrap_or_else(|| panic!("no parameter {name:?}")).tensor
    }

    /// Mark every tensor non-trainable.
    pub fn freeze_all(&mut self) {
        for p in &mut self.params {
            p.trainable = false;
        }
    }

    pub fn num_trainable_entries(&self) -> usize {
        self.trainable()
            .map(|p| p.tensor.rows() * p.tensor.cols())
            .sum()
    }

    /// Canonical byte encoding (name, shape, little-endian f64 data per
    /// tensor, in iteration order). Used by the frozen-weight checks.
    pub fn byte_snapshot(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for p in &self.params {
            out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.extend_from_slice(&(p.tensor.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(p.tensor.cols() as u64).to_le_bytes());
            out.push(u8::from(p.trainable));
            out.extend_from_slice(&p.tensor.to_le_bytes());
        }
        out
    }
}

/// Gradients for the trainable tensors of a [`ParameterSet`], in the same
/// order the set iterates them.
#[derive(Debug, Clone)]
pub struct GradSet<T: Scalar = f64> {
    entries: Vec<(String, DenseMatrix<T>)>,
}

impl<T: Scalar> GradSet<T> {
    /// Zero gradients shaped like the trainable tensors of `params`.
    pub fn zeros_like(params: &ParameterSet<T>) -> Self {
        Self {
            entries: params
                .trainable()
                .map(|p| {
                    (
                        p.name.clone(),
                        DenseMatrix::zeros(p.tensor.rows(), p.tensor.cols()),
                    )
                })
                .collect(),
        }
    }

    pub fn from_entries(entries: Vec<(String, DenseMatrix<T>)>) -> Self {
        Self { entries }
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, DenseMatrix<T>)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&DenseMatrix<T>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, g)| g)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut DenseMatrix<T>> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, g)| g)
    }

    /// `self += alpha * other`, matching entries by name.
    pub fn add_scaled(&mut self, other: &GradSet<T>, alpha: T) {
        assert_eq!(self.entries.len(), other.entries.len());
        for ((na, ga), (nb, gb)) in self.entries.iter_mut().zip(&other.entries) {
            assert_eq!(na, nb, "gradient sets are not aligned");
            ga.add_scaled(gb, alpha);
        }
    }

    pub fn max_abs(&self) -> T {
        self.entries
            .iter()
            .flat_map(|(_, g)| g.iter())
            .fold(T::zero(), |a, &b| a.max(b.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, g)| g.all_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_and_flags() {
        let mut ps: ParameterSet = ParameterSet::new();
        ps.push("w", DenseMatrix::zeros(2, 2), true);
        ps.push("b", DenseMatrix::zeros(1, 2), false);
        let names: Vec<_> = ps.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["w", "b"]);
        assert_eq!(ps.trainable().count(), 1);
        assert_eq!(ps.num_trainable_entries(), 4);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_name_panics() {
        let mut ps: ParameterSet = ParameterSet::new();
        ps.push("w", DenseMatrix::zeros(1, 1), true);
        ps.push("w", DenseMatrix::zeros(1, 1), true);
    }

    #[test]
    fn byte_snapshot_detects_changes() {
        let mut ps: ParameterSet = ParameterSet::new();
        ps.push("w", DenseMatrix::zeros(2, 2), true);
        let before = ps.byte_snapshot();
        assert_eq!(before, ps.byte_snapshot());
        ps.get_mut("w").unwrap().tensor[(0, 0)] = 1.0;
        assert_ne!(before, ps.byte_snapshot());
    }
}
