use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ClassifierError;

/// Bijection between label combinations and class IDs of a combinatorial
/// multi-class model. Combinations are stored as sorted, deduplicated tuples
/// and numbered in sorted order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct ComboVocabulary {
    combos: Vec<Vec<usize>>,
    index: BTreeMap<Vec<usize>, usize>,
}

fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut v = labels.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

impl From<Vec<Vec<usize>>> for ComboVocabulary {
    fn from(sets: Vec<Vec<usize>>) -> Self {
        let index: BTreeMap<Vec<usize>, usize> =
            sets.iter().map(|s| (canonical(s), 0)).collect();
        let combos: Vec<Vec<usize>> = index.keys().cloned().collect();
        let index = combos.iter().cloned().zip(0..).collect();
        Self { combos, index }
    }
}

impl From<ComboVocabulary> for Vec<Vec<usize>> {
    fn from(v: ComboVocabulary) -> Self {
        v.combos
    }
}

impl ComboVocabulary {
    pub fn build<'a>(
        label_sets: impl IntoIterator<Item = &'a [usize]>,
    ) -> Result<Self, ClassifierError> {
        let sets: Vec<Vec<usize>> = label_sets.into_iter().map(canonical).collect();
        if sets.is_empty() {
            return Err(ClassifierError::EmptyDataset);
        }
        Ok(Self::from(sets))
    }

    pub fn len(&self) -> usize {
        self.combos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.combos.is_empty()
    }

    pub fn encode(&self, labels: &[usize]) -> Result<usize, ClassifierError> {
        let key = canonical(labels);
        self.index
            .get(&key)
            .copied()
            .ok_or(ClassifierError::OutOfVocabulary(key))
    }

    pub fn decode(&self, id: usize) -> Option<&[usize]> {
        self.combos.get(id).map(Vec::as_slice)
    }

    pub fn combos(&self) -> &[Vec<usize>] {
        &self.combos
    }
}
