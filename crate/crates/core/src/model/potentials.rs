use crate::error::{Error, Result};

use super::params::ParamVector;
use super::types::InstanceRef;

/// Log-potentials of a chain-structured distribution over `K^L` assignments.
///
/// Scores live in one flat "slot" array: `L·K` node slots followed by
/// `(L−1)·K·K` edge slots, where edge slot `(t, a, b)` scores `y_t = a,
/// y_{t+1} = b`. A flat classification instance is the `L = 1` case.
/// Marginals produced by inference use the same slot layout, so any feature
/// expressed as a list of `(slot, value)` pairs has expectation
/// `Σ value · marginal[slot]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    len: usize,
    k: usize,
    scores: Vec<f64>,
}

impl Potentials {
    pub fn zeros(len: usize, k: usize) -> Self {
        assert!(len >= 1 && k >= 1);
        Potentials {
            len,
            k,
            scores: vec![0.0; slot_count(len, k)],
        }
    }

    pub fn from_scores(len: usize, k: usize, scores: Vec<f64>) -> Result<Self> {
        if len == 0 || k == 0 || scores.len() != slot_count(len, k) {
            return Err(Error::Contract(format!(
                "{} scores do not fit a chain with L={len}, K={k}",
                scores.len()
            )));
        }
        Ok(Potentials { len, k, scores })
    }

    /// Model potentials `λ·f` for an instance.
    pub fn from_model(params: &ParamVector, inst: InstanceRef<'_>) -> Result<Self> {
        let layout = params.layout();
        let k = layout.num_labels;
        if inst.is_sequence() && !layout.is_chain() {
            return Err(Error::Contract(
                "sequence instance needs a chain parameter layout".into(),
            ));
        }
        let len = inst.len();
        let mut pot = Potentials::zeros(len, k);
        for t in 0..len {
            let feats = inst.position(t);
            layout.check_features(feats)?;
            let row = &mut pot.scores[t * k..(t + 1) * k];
            for &(f, v) in feats.entries() {
                let base = layout.node_index(f, 0);
                for (y, s) in row.iter_mut().enumerate() {
                    *s += v * params.weights()[base + y];
                }
            }
        }
        if len > 1 {
            let trans = &params.weights()[layout.transition_index(0, 0)..];
            let kk = k * k;
            for t in 0..len - 1 {
                let start = len * k + t * kk;
                pot.scores[start..start + kk].copy_from_slice(&trans[..kk]);
            }
        }
        Ok(pot)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_labels(&self) -> usize {
        self.k
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn scores_mut(&mut self) -> &mut [f64] {
        &mut self.scores
    }

    #[inline]
    pub fn node_slot(&self, t: usize, y: usize) -> usize {
        t * self.k + y
    }

    #[inline]
    pub fn edge_slot(&self, t: usize, a: usize, b: usize) -> usize {
        self.len * self.k + (t * self.k + a) * self.k + b
    }

    #[inline]
    pub fn node(&self, t: usize, y: usize) -> f64 {
        self.scores[self.node_slot(t, y)]
    }

    #[inline]
    pub fn edge(&self, t: usize, a: usize, b: usize) -> f64 {
        self.scores[self.edge_slot(t, a, b)]
    }

    /// Adds `weight · value` at each listed slot.
    pub fn add_terms(&mut self, terms: &[(usize, f64)], weight: f64) {
        if weight == 0.0 {
            return;
        }
        for &(slot, v) in terms {
            self.scores[slot] += weight * v;
        }
    }

    /// Unnormalized log-score of a full assignment.
    pub fn assignment_score(&self, y: &[usize]) -> f64 {
        let mut s = 0.0;
        for (t, &yt) in y.iter().enumerate() {
            s += self.node(t, yt);
            if t > 0 {
                s += self.edge(t - 1, y[t - 1], yt);
            }
        }
        s
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if let Some(pos) = self.scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Numeric(format!("non-finite potential at slot {pos}")));
        }
        Ok(())
    }
}

pub fn slot_count(len: usize, k: usize) -> usize {
    len * k + len.saturating_sub(1) * k * k
}
