//! Exact inference for flat and linear-chain models.
//!
//! Forward-backward runs on shifted, exponentiated potentials with
//! per-position normalizers and falls back to log space on underflow. Both
//! cost `O(L·K²)` once the potentials are built.

use crate::error::{Error, Result};

use super::params::{Layout, ParamVector};
use super::potentials::Potentials;
use super::types::{Instance, InstanceRef, SequenceInstance, SparseFeatures};

/// Marginals over the slot layout of [`Potentials`] plus the log-partition value.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    len: usize,
    k: usize,
    marginals: Vec<f64>,
    log_z: f64,
}

impl Posterior {
    pub(crate) fn from_parts(len: usize, k: usize, marginals: Vec<f64>, log_z: f64) -> Self {
        debug_assert_eq!(marginals.len(), super::potentials::slot_count(len, k));
        Posterior {
            len,
            k,
            marginals,
            log_z,
        }
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

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    /// Label probabilities of a flat posterior (position 0 of a chain).
    pub fn probs(&self) -> &[f64] {
        &self.marginals[..self.k]
    }

    pub fn node_row(&self, t: usize) -> &[f64] {
        &self.marginals[t * self.k..(t + 1) * self.k]
    }

    #[inline]
    pub fn node(&self, t: usize, y: usize) -> f64 {
        self.marginals[t * self.k + y]
    }

    #[inline]
    pub fn edge(&self, t: usize, a: usize, b: usize) -> f64 {
        self.marginals[self.len * self.k + (t * self.k + a) * self.k + b]
    }

    /// All marginals in slot order.
    pub fn slots(&self) -> &[f64] {
        &self.marginals
    }

    /// `Σ value · marginal[slot]`.
    pub fn expect_terms(&self, terms: &[(usize, f64)]) -> f64 {
        terms.iter().map(|&(s, v)| v * self.marginals[s]).sum()
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Softmax over the `K` node scores of a length-one potential.
fn softmax(pot: &Potentials) -> Posterior {
    let k = pot.num_labels();
    let scores = &pot.scores()[..k];
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Posterior::from_parts(1, k, probs, max + total.ln())
}

/// Log forward messages `α[t·K + y]` (unnormalized, node score included).
pub(crate) fn forward_table(pot: &Potentials) -> Vec<f64> {
    let (len, k) = (pot.len(), pot.num_labels());
    let mut alpha = vec![0.0; len * k];
    alpha[..k].copy_from_slice(&pot.scores()[..k]);
    let mut buf = vec![0.0; k];
    for t in 1..len {
        for b in 0..k {
            for a in 0..k {
                buf[a] = alpha[(t - 1) * k + a] + pot.edge(t - 1, a, b);
            }
            alpha[t * k + b] = pot.node(t, b) + log_sum_exp(&buf);
        }
    }
    alpha
}

/// Exact marginals and log-partition of a chain (softmax when `L = 1`).
pub fn infer(pot: &Potentials) -> Result<Posterior> {
    pot.check_finite()?;
    if pot.len() == 1 {
        return Ok(softmax(pot));
    }
    match infer_scaled(pot) {
        Some(post) => Ok(post),
        None => infer_log(pot),
    }
}

/// Shifted, exponentiated factors and the normalized forward pass.
struct ScaledForward {
    phi: Vec<f64>,
    psi: Vec<f64>,
    /// Forward messages, each position normalized to sum 1.
    alpha: Vec<f64>,
    /// Per-position normalizers.
    c: Vec<f64>,
    log_z: f64,
}

/// Every factor is shifted by its maximum before exponentiation; `None` when
/// a normalizer underflows.
fn scaled_forward(pot: &Potentials) -> Option<ScaledForward> {
    let (len, k) = (pot.len(), pot.num_labels());
    let kk = k * k;
    let scores = pot.scores();
    let mut shift = 0.0;
    let mut phi = vec![0.0; len * k];
    for t in 0..len {
        let row = &scores[t * k..(t + 1) * k];
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        shift += m;
        for y in 0..k {
            phi[t * k + y] = (row[y] - m).exp();
        }
    }
    let mut psi = vec![0.0; (len - 1) * kk];
    for t in 0..len - 1 {
        let block = &scores[len * k + t * kk..len * k + (t + 1) * kk];
        let m = block.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        shift += m;
        for i in 0..kk {
            psi[t * kk + i] = (block[i] - m).exp();
        }
    }

    let mut alpha = vec![0.0; len * k];
    let mut c = vec![0.0; len];
    alpha[..k].copy_from_slice(&phi[..k]);
    for t in 0..len {
        if t > 0 {
            for b in 0..k {
                let mut acc = 0.0;
                for a in 0..k {
                    acc += alpha[(t - 1) * k + a] * psi[(t - 1) * kk + a * k + b];
                }
                alpha[t * k + b] = acc * phi[t * k + b];
            }
        }
        let norm: f64 = alpha[t * k..(t + 1) * k].iter().sum();
        if !(norm > 0.0 && norm.is_finite()) {
            return None;
        }
        c[t] = norm;
        for v in &mut alpha[t * k..(t + 1) * k] {
            *v /= norm;
        }
    }
    let log_z = shift + c.iter().map(|v| v.ln()).sum::<f64>();
    Some(ScaledForward {
        phi,
        psi,
        alpha,
        c,
        log_z,
    })
}

/// `log Z` alone: the forward pass without backward messages or marginals.
pub fn log_partition(pot: &Potentials) -> Result<f64> {
    pot.check_finite()?;
    let k = pot.num_labels();
    if pot.len() == 1 {
        return Ok(log_sum_exp(&pot.scores()[..k]));
    }
    if let Some(f) = scaled_forward(pot) {
        return Ok(f.log_z);
    }
    let log_z = log_sum_exp(&forward_table(pot)[(pot.len() - 1) * k..]);
    if !log_z.is_finite() {
        return Err(Error::Numeric("log-partition is not finite".into()));
    }
    Ok(log_z)
}

/// Forward-backward on exponentiated potentials with per-position
/// normalizers; `None` sends the caller to the log-space recursion.
fn infer_scaled(pot: &Potentials) -> Option<Posterior> {
    let (len, k) = (pot.len(), pot.num_labels());
    let kk = k * k;
    let ScaledForward {
        phi,
        psi,
        alpha,
        c,
        log_z,
    } = scaled_forward(pot)?;

    let mut beta = vec![1.0; len * k];
    for t in (0..len - 1).rev() {
        for a in 0..k {
            let mut acc = 0.0;
            for b in 0..k {
                acc += psi[t * kk + a * k + b] * phi[(t + 1) * k + b] * beta[(t + 1) * k + b];
            }
            beta[t * k + a] = acc / c[t + 1];
        }
    }

    let mut marginals = vec![0.0; pot.scores().len()];
    for i in 0..len * k {
        marginals[i] = alpha[i] * beta[i];
    }
    for t in 0..len - 1 {
        for a in 0..k {
            let left = alpha[t * k + a] / c[t + 1];
            for b in 0..k {
                marginals[len * k + t * kk + a * k + b] = left
                    * psi[t * kk + a * k + b]
                    * phi[(t + 1) * k + b]
                    * beta[(t + 1) * k + b];
            }
        }
    }
    Some(Posterior::from_parts(len, k, marginals, log_z))
}

fn infer_log(pot: &Potentials) -> Result<Posterior> {
    let (len, k) = (pot.len(), pot.num_labels());
    let alpha = forward_table(pot);
    let mut buf = vec![0.0; k];

    let mut beta = vec![0.0; len * k];
    for t in (0..len - 1).rev() {
        for a in 0..k {
            for b in 0..k {
                buf[b] = pot.edge(t, a, b) + pot.node(t + 1, b) + beta[(t + 1) * k + b];
            }
            beta[t * k + a] = log_sum_exp(&buf);
        }
    }

    let log_z = log_sum_exp(&alpha[(len - 1) * k..]);
    if !log_z.is_finite() {
        return Err(Error::Numeric("log-partition is not finite".into()));
    }

    let mut marginals = vec![0.0; pot.scores().len()];
    for i in 0..len * k {
        marginals[i] = (alpha[i] + beta[i] - log_z).exp();
    }
    for t in 0..len - 1 {
        for a in 0..k {
            let left = alpha[t * k + a] - log_z;
            for b in 0..k {
                let slot = pot.edge_slot(t, a, b);
                marginals[slot] =
                    (left + pot.edge(t, a, b) + pot.node(t + 1, b) + beta[(t + 1) * k + b]).exp();
            }
        }
    }
    Ok(Posterior::from_parts(len, k, marginals, log_z))
}

/// Highest-scoring assignment. At every backtracking step ties resolve to the
/// lower label index.
pub fn viterbi_decode(pot: &Potentials) -> Result<Vec<usize>> {
    pot.check_finite()?;
    let (len, k) = (pot.len(), pot.num_labels());
    let mut delta = pot.scores()[..k].to_vec();
    let mut back = vec![0usize; len * k];
    let mut next = vec![0.0; k];
    for t in 1..len {
        for b in 0..k {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (a, &d) in delta.iter().enumerate() {
                let s = d + pot.edge(t - 1, a, b);
                if s > best {
                    best = s;
                    arg = a;
                }
            }
            next[b] = best + pot.node(t, b);
            back[t * k + b] = arg;
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut y = vec![0usize; len];
    let mut best = f64::NEG_INFINITY;
    for (b, &d) in delta.iter().enumerate() {
        if d > best {
            best = d;
            y[len - 1] = b;
        }
    }
    for t in (1..len).rev() {
        y[t - 1] = back[t * k + y[t]];
    }
    Ok(y)
}

/// Softmax over `λ·f(x, y)` for a flat instance.
pub fn classify_posterior(params: &ParamVector, inst: &Instance) -> Result<Posterior> {
    let pot = Potentials::from_model(params, InstanceRef::Flat(inst))?;
    infer(&pot)
}

/// Node and edge marginals of a linear-chain CRF by forward-backward.
pub fn chain_posterior(params: &ParamVector, inst: &SequenceInstance) -> Result<Posterior> {
    let pot = Potentials::from_model(params, InstanceRef::Sequence(inst))?;
    infer(&pot)
}

/// Posterior for either instance kind.
pub fn model_posterior(params: &ParamVector, inst: InstanceRef<'_>) -> Result<Posterior> {
    infer(&Potentials::from_model(params, inst)?)
}

pub fn viterbi(params: &ParamVector, inst: &SequenceInstance) -> Result<Vec<usize>> {
    viterbi_decode(&Potentials::from_model(params, InstanceRef::Sequence(inst))?)
}

/// Argmax decoding for either instance kind (length-1 vector when flat).
pub fn decode(params: &ParamVector, inst: InstanceRef<'_>) -> Result<Vec<usize>> {
    viterbi_decode(&Potentials::from_model(params, inst)?)
}

/// Adds `scale · E_post[f(x, y)]` into a dense model-feature buffer.
pub fn accumulate_expected_features(
    post: &Posterior,
    inst: InstanceRef<'_>,
    layout: &Layout,
    scale: f64,
    out: &mut [f64],
) {
    accumulate_slot_features(post.slots(), inst, layout, scale, out);
}

/// Adds `scale · Σ_slot w[slot] · f_slot` where `w` follows the slot layout of
/// `inst` (marginals or empirical slot frequencies).
pub fn accumulate_slot_features(
    slots: &[f64],
    inst: InstanceRef<'_>,
    layout: &Layout,
    scale: f64,
    out: &mut [f64],
) {
    let k = layout.num_labels;
    let len = inst.len();
    debug_assert_eq!(slots.len(), super::potentials::slot_count(len, k));
    for t in 0..len {
        let row = &slots[t * k..(t + 1) * k];
        for &(f, v) in inst.position(t).entries() {
            let base = layout.node_index(f, 0);
            for (y, p) in row.iter().enumerate() {
                out[base + y] += scale * v * p;
            }
        }
    }
    if len > 1 {
        let tbase = layout.transition_index(0, 0);
        let kk = k * k;
        let edges = &slots[len * k..];
        for t in 0..len - 1 {
            for (i, p) in edges[t * kk..(t + 1) * kk].iter().enumerate() {
                out[tbase + i] += scale * p;
            }
        }
    }
}

/// Adds `scale · f(x, y)` for a full assignment `y`.
pub fn accumulate_assignment_features(
    inst: InstanceRef<'_>,
    y: &[usize],
    layout: &Layout,
    scale: f64,
    out: &mut [f64],
) {
    for (t, &yt) in y.iter().enumerate() {
        for &(f, v) in inst.position(t).entries() {
            out[layout.node_index(f, yt)] += scale * v;
        }
        if t > 0 {
            out[layout.transition_index(y[t - 1], yt)] += scale;
        }
    }
}

/// `E_post[f(x, y)]` as a sparse vector over model-feature ids.
pub fn expected_model_features(
    post: &Posterior,
    inst: InstanceRef<'_>,
    layout: &Layout,
) -> SparseFeatures {
    let mut dense = vec![0.0; layout.dim()];
    accumulate_expected_features(post, inst, layout, 1.0, &mut dense);
    to_sparse(&dense)
}

/// `f(x, y)` as a sparse vector over model-feature ids.
pub fn assignment_features(inst: InstanceRef<'_>, y: &[usize], layout: &Layout) -> SparseFeatures {
    let mut dense = vec![0.0; layout.dim()];
    accumulate_assignment_features(inst, y, layout, 1.0, &mut dense);
    to_sparse(&dense)
}

pub(crate) fn to_sparse(dense: &[f64]) -> SparseFeatures {
    let entries = dense
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i, *v))
        .collect();
    SparseFeatures::new(entries).expect("dense buffer yields sorted finite entries")
}

/// `λ·f(x, y)` computed directly from parameters, without potentials.
pub fn score_assignment(params: &ParamVector, inst: InstanceRef<'_>, y: &[usize]) -> f64 {
    let mut s = 0.0;
    for (t, &yt) in y.iter().enumerate() {
        s += params.node_score(inst.position(t), yt);
        if t > 0 {
            s += params.transition(y[t - 1], yt);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::Layout;

    fn flat_pot(scores: &[f64]) -> Potentials {
        Potentials::from_scores(1, scores.len(), scores.to_vec()).unwrap()
    }

    #[test]
    fn scaled_and_log_recursions_agree() {
        let k = 3;
        let len = 4;
        let scores: Vec<f64> = (0..super::super::potentials::slot_count(len, k))
            .map(|i| ((i * 37 % 23) as f64 - 11.0) * 0.7)
            .collect();
        let pot = Potentials::from_scores(len, k, scores).unwrap();
        let a = infer_scaled(&pot).unwrap();
        let b = infer_log(&pot).unwrap();
        assert!((a.log_z() - b.log_z()).abs() < 1e-12);
        for (x, y) in a.slots().iter().zip(b.slots()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn underflow_falls_back_to_log_space() {
        // The best node at t=1 is reachable only through a −2000 edge.
        let (len, k) = (2, 2);
        let mut scores = vec![0.0; super::super::potentials::slot_count(len, k)];
        scores[1] = -2000.0; // node(0, 1)
        scores[2] = -2000.0; // node(1, 0)
        scores[len * k + 1] = -2000.0; // edge 0 → 1
        scores[len * k + 2] = -2000.0; // edge 1 → 0
        scores[len * k + 3] = -2000.0; // edge 1 → 1
        let pot = Potentials::from_scores(len, k, scores).unwrap();
        assert!(infer_scaled(&pot).is_none());
        let post = infer(&pot).unwrap();
        assert!((post.log_z() - (-2000.0 + 2f64.ln())).abs() < 1e-9);
        assert_eq!(log_partition(&pot).unwrap(), post.log_z());
    }

    #[test]
    fn forward_only_log_partition_matches_inference() {
        for (len, k) in [(1, 4), (2, 2), (6, 3)] {
            let scores: Vec<f64> = (0..super::super::potentials::slot_count(len, k))
                .map(|i| ((i * 29 % 17) as f64 - 8.0) * 0.9)
                .collect();
            let pot = Potentials::from_scores(len, k, scores).unwrap();
            assert_eq!(log_partition(&pot).unwrap(), infer(&pot).unwrap().log_z());
        }
    }

    #[test]
    fn softmax_closed_forms() {
        let p = infer(&flat_pot(&[0.0, 3f64.ln()])).unwrap();
        assert!((p.probs()[0] - 0.25).abs() < 1e-12);
        assert!((p.probs()[1] - 0.75).abs() < 1e-12);

        let p = infer(&flat_pot(&[0.0, 0.0, 2f64.ln()])).unwrap();
        for (got, want) in p.probs().iter().zip([0.25, 0.25, 0.5]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_parameters_give_uniform() {
        let params = ParamVector::zeros(Layout::flat(2, 3));
        let inst = Instance::new(SparseFeatures::indicators(&[0, 1]).unwrap(), None);
        let p = classify_posterior(&params, &inst).unwrap();
        for &q in p.probs() {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((p.log_z() - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn uniform_chain() {
        let params = ParamVector::zeros(Layout::chain(1, 2));
        let inst = SequenceInstance::new(vec![SparseFeatures::default(); 3], None).unwrap();
        let p = chain_posterior(&params, &inst).unwrap();
        assert!((p.log_z() - 3.0 * 2f64.ln()).abs() < 1e-12);
        for t in 0..3 {
            for y in 0..2 {
                assert!((p.node(t, y) - 0.5).abs() < 1e-12);
            }
        }
        assert_eq!(viterbi(&params, &inst).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn dominant_node_potentials_decode_to_ones() {
        let layout = Layout::chain(1, 2);
        let mut params = ParamVector::zeros(layout);
        params.weights_mut()[layout.node_index(0, 1)] = 5.0;
        let pos = SparseFeatures::indicators(&[0]).unwrap();
        let inst = SequenceInstance::new(vec![pos; 4], None).unwrap();
        assert_eq!(viterbi(&params, &inst).unwrap(), vec![1, 1, 1, 1]);
    }

    #[test]
    fn feature_out_of_range_is_index_error() {
        let params = ParamVector::zeros(Layout::flat(2, 2));
        let inst = Instance::new(SparseFeatures::indicators(&[5]).unwrap(), None);
        assert!(matches!(
            classify_posterior(&params, &inst),
            Err(Error::Index { index: 5, .. })
        ));
    }

    #[test]
    fn non_finite_potential_is_numeric_error() {
        let mut pot = Potentials::zeros(3, 2);
        pot.scores_mut()[4] = f64::INFINITY;
        assert!(matches!(infer(&pot), Err(Error::Numeric(_))));
    }

    #[test]
    fn expected_features_uniform_and_point_mass() {
        let layout = Layout::flat(1, 2);
        let inst = Instance::new(SparseFeatures::indicators(&[0]).unwrap(), Some(1));
        let post = classify_posterior(&ParamVector::zeros(layout), &inst).unwrap();
        let e = expected_model_features(&post, InstanceRef::Flat(&inst), &layout);
        assert_eq!(e.entries(), &[(0, 0.5), (1, 0.5)]);

        let point = Posterior::from_parts(1, 2, vec![0.0, 1.0], 0.0);
        let e = expected_model_features(&point, InstanceRef::Flat(&inst), &layout);
        let gold = assignment_features(InstanceRef::Flat(&inst), &[1], &layout);
        assert_eq!(e, gold);
    }
}
