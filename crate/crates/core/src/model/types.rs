use std::collections::HashMap;

use crate::error::{Error, Result};

/// Ordered set of output labels with dense indices `0..K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSpace {
    /// Builds a label space from distinct names. At least two labels are required.
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut space = LabelSpace {
            names: Vec::new(),
            index: HashMap::new(),
        };
        for name in names {
            let name = name.into();
            if space.index.contains_key(&name) {
                return Err(Error::Contract(format!("duplicate label `{name}`")));
            }
            space.intern(&name);
        }
        if space.len() < 2 {
            return Err(Error::Contract(format!(
                "label space needs at least 2 labels, got {}",
                space.len()
            )));
        }
        Ok(space)
    }

    /// `K` anonymous labels named `0`, `1`, ...
    pub fn anonymous(k: usize) -> Result<Self> {
        Self::new((0..k).map(|i| i.to_string()))
    }

    pub(crate) fn empty() -> Self {
        LabelSpace {
            names: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Returns the index of `name`, adding it if unseen.
    pub(crate) fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Sparse feature vector with strictly increasing ids and finite values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseFeatures {
    entries: Vec<(usize, f64)>,
}

impl SparseFeatures {
    /// Validates that ids are strictly increasing and values finite.
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self> {
        for w in entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::Contract(format!(
                    "feature ids must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some(&(id, v)) = entries.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Contract(format!("feature {id} has non-finite value {v}")));
        }
        Ok(SparseFeatures { entries })
    }

    /// Sorts by id and sums duplicate ids.
    pub fn from_unsorted(mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.sort_by_key(|&(id, _)| id);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (id, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == id => last.1 += v,
                _ => merged.push((id, v)),
            }
        }
        Self::new(merged)
    }

    /// Indicator features with value 1.
    pub fn indicators(ids: &[usize]) -> Result<Self> {
        Self::from_unsorted(ids.iter().map(|&id| (id, 1.0)).collect())
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: usize) -> f64 {
        match self.entries.binary_search_by_key(&id, |&(i, _)| i) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn contains(&self, id: usize) -> bool {
        self.entries.binary_search_by_key(&id, |&(i, _)| i).is_ok()
    }

    pub fn max_id(&self) -> Option<usize> {
        self.entries.last().map(|&(id, _)| id)
    }

    /// Keeps only the entries whose id satisfies `keep`.
    pub fn retain(&self, mut keep: impl FnMut(usize) -> bool) -> SparseFeatures {
        SparseFeatures {
            entries: self.entries.iter().copied().filter(|&(id, _)| keep(id)).collect(),
        }
    }
}

/// A classification example; `label` is `None` for unlabeled data.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub features: SparseFeatures,
    pub label: Option<usize>,
}

impl Instance {
    pub fn new(features: SparseFeatures, label: Option<usize>) -> Self {
        Instance { features, label }
    }

    pub fn unlabeled(&self) -> Instance {
        Instance {
            features: self.features.clone(),
            label: None,
        }
    }
}

/// A sequence example: per-position input features and optional gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInstance {
    pub positions: Vec<SparseFeatures>,
    pub labels: Option<Vec<usize>>,
}

impl SequenceInstance {
    pub fn new(positions: Vec<SparseFeatures>, labels: Option<Vec<usize>>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Contract("sequence must have at least one position".into()));
        }
        if let Some(labels) = &labels {
            if labels.len() != positions.len() {
                return Err(Error::Contract(format!(
                    "sequence has {} positions but {} labels",
                    positions.len(),
                    labels.len()
                )));
            }
        }
        Ok(SequenceInstance { positions, labels })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn unlabeled(&self) -> SequenceInstance {
        SequenceInstance {
            positions: self.positions.clone(),
            labels: None,
        }
    }
}

/// Borrowed view over either kind of example.
#[derive(Debug, Clone, Copy)]
pub enum InstanceRef<'a> {
    Flat(&'a Instance),
    Sequence(&'a SequenceInstance),
}

impl<'a> InstanceRef<'a> {
    /// Number of label variables (1 for a flat instance).
    pub fn len(&self) -> usize {
        match self {
            InstanceRef::Flat(_) => 1,
            InstanceRef::Sequence(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Input features at position `t` (the whole instance when flat).
    pub fn position(&self, t: usize) -> &'a SparseFeatures {
        match self {
            InstanceRef::Flat(inst) => &inst.features,
            InstanceRef::Sequence(s) => &s.positions[t],
        }
    }

    /// Gold labels as a slice-compatible vector, if labeled.
    pub fn gold(&self) -> Option<Vec<usize>> {
        match self {
            InstanceRef::Flat(inst) => inst.label.map(|y| vec![y]),
            InstanceRef::Sequence(s) => s.labels.clone(),
        }
    }

    pub fn is_sequence(&self) -> bool {
        matches!(self, InstanceRef::Sequence(_))
    }
}

impl<'a> From<&'a Instance> for InstanceRef<'a> {
    fn from(inst: &'a Instance) -> Self {
        InstanceRef::Flat(inst)
    }
}

impl<'a> From<&'a SequenceInstance> for InstanceRef<'a> {
    fn from(inst: &'a SequenceInstance) -> Self {
        InstanceRef::Sequence(inst)
    }
}

/// Owned example of either kind; datasets are homogeneous in practice.
#[derive(Debug, Clone, PartialEq)]
pub enum Example {
    Flat(Instance),
    Sequence(SequenceInstance),
}

impl Example {
    pub fn as_ref(&self) -> InstanceRef<'_> {
        match self {
            Example::Flat(i) => InstanceRef::Flat(i),
            Example::Sequence(s) => InstanceRef::Sequence(s),
        }
    }

    pub fn is_labeled(&self) -> bool {
        match self {
            Example::Flat(i) => i.label.is_some(),
            Example::Sequence(s) => s.labels.is_some(),
        }
    }

    pub fn unlabeled(&self) -> Example {
        match self {
            Example::Flat(i) => Example::Flat(i.unlabeled()),
            Example::Sequence(s) => Example::Sequence(s.unlabeled()),
        }
    }

    pub fn len(&self) -> usize {
        self.as_ref().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl From<Instance> for Example {
    fn from(i: Instance) -> Self {
        Example::Flat(i)
    }
}

impl From<SequenceInstance> for Example {
    fn from(s: SequenceInstance) -> Self {
        Example::Sequence(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_space_rejects_single_label() {
        assert!(LabelSpace::new(["a"]).is_err());
        assert!(LabelSpace::new(["a", "a"]).is_err());
        let ls = LabelSpace::new(["ibm", "mac"]).unwrap();
        assert_eq!(ls.index_of("mac"), Some(1));
        assert_eq!(ls.name(0), Some("ibm"));
    }

    #[test]
    fn sparse_features_validate_order_and_finiteness() {
        assert!(SparseFeatures::new(vec![(1, 1.0), (1, 2.0)]).is_err());
        assert!(SparseFeatures::new(vec![(2, 1.0), (1, 2.0)]).is_err());
        assert!(SparseFeatures::new(vec![(0, f64::NAN)]).is_err());
        let f = SparseFeatures::from_unsorted(vec![(3, 1.0), (1, 2.0), (3, 0.5)]).unwrap();
        assert_eq!(f.entries(), &[(1, 2.0), (3, 1.5)]);
        assert_eq!(f.get(3), 1.5);
        assert_eq!(f.get(2), 0.0);
    }

    #[test]
    fn sequence_label_length_checked() {
        let pos = vec![SparseFeatures::default(); 2];
        assert!(SequenceInstance::new(pos.clone(), Some(vec![0])).is_err());
        assert!(SequenceInstance::new(vec![], None).is_err());
        assert!(SequenceInstance::new(pos, Some(vec![0, 1])).is_ok());
    }
}
