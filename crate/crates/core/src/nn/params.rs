use indexmap::IndexMap;
use ndarray::{Array2, ArrayView2};

use super::NnError;

/// One named tensor with its Adam moments and freeze flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub trainable: bool,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Adam steps applied to this entry.
    pub step: u64,
}

impl Entry {
    pub fn new(shape: Vec<usize>, values: Vec<f64>, trainable: bool) -> Self {
        let len = values.len();
        debug_assert_eq!(shape.iter().product::<usize>(), len);
        Self { shape, values, trainable, m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    /// Rows and columns when viewed as a matrix; vectors are one row.
    pub fn matrix_dims(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            s => (s[0], s[1..].iter().product()),
        }
    }

    pub fn as_matrix(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape(self.matrix_dims(), &self.values).expect("entry shape is consistent")
    }

    pub fn reset_optimizer(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.step = 0;
    }
}

/// Ordered collection of named parameters. Declaration order is preserved
/// and is the order used in checkpoints.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, Entry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, entry: Entry) -> Result<(), NnError> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(NnError::DuplicateParam(name));
        }
        self.entries.insert(name, entry);
        Ok(())
    }

    pub fn insert_matrix(&mut self, name: impl Into<String>, m: &Array2<f64>, trainable: bool) -> Result<(), NnError> {
        let (r, c) = m.dim();
        self.insert(name, Entry::new(vec![r, c], m.iter().copied().collect(), trainable))
    }

    pub fn get(&self, name: &str) -> Result<&Entry, NnError> {
        self.entries.get(name).ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Entry, NnError> {
        self.entries.get_mut(name).ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Entry)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Entry)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.entries.iter().filter(|(_, e)| e.trainable).map(|(n, _)| n.clone()).collect()
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<(), NnError> {
        self.get_mut(name)?.trainable = trainable;
        Ok(())
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        self.entries.values_mut().for_each(|e| e.trainable = trainable);
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(Entry::numel).sum()
    }

    pub fn reset_optimizer(&mut self) {
        self.entries.values_mut().for_each(Entry::reset_optimizer);
    }

    /// Copies values (not moments or flags) of `name` from `src`.
    pub fn copy_values_from(&mut self, src: &ParamStore, name: &str) -> Result<(), NnError> {
        let from = src.get(name)?;
        let to = self.get_mut(name)?;
        if from.shape != to.shape {
            return Err(NnError::ShapeMismatch {
                context: name.to_string(),
                expected: to.shape.clone(),
                got: from.shape.clone(),
            });
        }
        to.values.copy_from_slice(&from.values);
        Ok(())
    }

    /// Moves every entry of `other` into `self`.
    pub fn extend(&mut self, other: ParamStore) -> Result<(), NnError> {
        for (name, entry) in other.entries {
            self.insert(name, entry)?;
        }
        Ok(())
    }

    /// Snapshot of the values of frozen entries, for integrity checks.
    pub fn frozen_snapshot(&self) -> Vec<(String, Vec<f64>)> {
        self.entries.iter().filter(|(_, e)| !e.trainable).map(|(n, e)| (n.clone(), e.values.clone())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_are_rejected() {
        let mut s = ParamStore::new();
        s.insert("a", Entry::new(vec![2], vec![1.0, 2.0], true)).unwrap();
        assert!(matches!(s.insert("a", Entry::new(vec![1], vec![0.0], true)), Err(NnError::DuplicateParam(_))));
        assert!(matches!(s.get("b"), Err(NnError::UnknownParam(_))));
    }

    #[test]
    fn vectors_view_as_single_row() {
        let e = Entry::new(vec![3], vec![1.0, 2.0, 3.0], false);
        assert_eq!(e.as_matrix().dim(), (1, 3));
    }

    #[test]
    fn copy_checks_shapes() {
        let mut a = ParamStore::new();
        a.insert("w", Entry::new(vec![2, 2], vec![0.0; 4], true)).unwrap();
        let mut b = ParamStore::new();
        b.insert("w", Entry::new(vec![4], vec![1.0; 4], true)).unwrap();
        assert!(a.copy_values_from(&b, "w").is_err());
    }
}
