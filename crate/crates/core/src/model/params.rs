use crate::error::{Error, Result};

use super::types::SparseFeatures;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    /// Multiclass log-linear classifier.
    Flat,
    /// Linear-chain CRF with label-pair transition features.
    Chain,
}

/// Shape of the model-feature space: input features conjoined with labels,
/// plus `K×K` transition indicators for chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub num_inputs: usize,
    pub num_labels: usize,
    pub structure: Structure,
}

impl Layout {
    pub fn flat(num_inputs: usize, num_labels: usize) -> Self {
        Layout {
            num_inputs,
            num_labels,
            structure: Structure::Flat,
        }
    }

    pub fn chain(num_inputs: usize, num_labels: usize) -> Self {
        Layout {
            num_inputs,
            num_labels,
            structure: Structure::Chain,
        }
    }

    pub fn dim(&self) -> usize {
        let node = self.num_inputs * self.num_labels;
        match self.structure {
            Structure::Flat => node,
            Structure::Chain => node + self.num_labels * self.num_labels,
        }
    }

    #[inline]
    pub fn node_index(&self, input: usize, label: usize) -> usize {
        input * self.num_labels + label
    }

    #[inline]
    pub fn transition_index(&self, prev: usize, cur: usize) -> usize {
        debug_assert_eq!(self.structure, Structure::Chain);
        self.num_inputs * self.num_labels + prev * self.num_labels + cur
    }

    pub fn is_chain(&self) -> bool {
        self.structure == Structure::Chain
    }

    pub(crate) fn check_features(&self, feats: &SparseFeatures) -> Result<()> {
        match feats.max_id() {
            Some(id) if id >= self.num_inputs => Err(Error::Index {
                what: "input feature",
                index: id,
                limit: self.num_inputs,
            }),
            _ => Ok(()),
        }
    }
}

/// Dense model parameters `λ` indexed by model-feature id.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    layout: Layout,
    weights: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: Layout) -> Self {
        ParamVector {
            layout,
            weights: vec![0.0; layout.dim()],
        }
    }

    pub fn from_weights(layout: Layout, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != layout.dim() {
            return Err(Error::Contract(format!(
                "parameter vector has {} entries, layout needs {}",
                weights.len(),
                layout.dim()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(ParamVector { layout, weights })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn num_labels(&self) -> usize {
        self.layout.num_labels
    }

    #[inline]
    pub fn node(&self, input: usize, label: usize) -> f64 {
        self.weights[self.layout.node_index(input, label)]
    }

    #[inline]
    pub fn transition(&self, prev: usize, cur: usize) -> f64 {
        self.weights[self.layout.transition_index(prev, cur)]
    }

    /// `Σ_f v_f λ[f, label]` for one position.
    pub fn node_score(&self, feats: &SparseFeatures, label: usize) -> f64 {
        feats
            .entries()
            .iter()
            .map(|&(f, v)| v * self.node(f, label))
            .sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }
}
