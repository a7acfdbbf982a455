//! Sampled expectations under auxiliary distributions that carry global
//! (non-factored) constraint features.
//!
//! Single-site Gibbs with fixed left-to-right sweeps. Each chain starts at the
//! Viterbi path of the factored part of `q` and is driven by a `ChaCha8Rng`
//! seeded from `seed ⊕ instance`, so estimates are bit-reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::{AuxParams, ConstraintKind, ConstraintSet};
use crate::error::{Error, Result};
use crate::model::{
    accumulate_slot_features, forward_table, log_partition, log_sum_exp, slot_count, to_sparse,
    viterbi_decode, InstanceRef, ParamVector, Potentials, SequenceInstance, SparseFeatures,
};
use crate::projections::auxiliary::{check_mu, PreparedAux};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub burn_in: usize,
    pub sweeps: usize,
    /// Keep every `thinning`-th sweep; must divide `sweeps`.
    pub thinning: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            burn_in: 100,
            sweeps: 1000,
            thinning: 1,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::Config("sampler needs at least one sample sweep".into()));
        }
        if self.thinning == 0 || !self.sweeps.is_multiple_of(self.thinning) {
            return Err(Error::Config(format!(
                "thinning {} must divide the {} sample sweeps",
                self.thinning, self.sweeps
            )));
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        self.sweeps / self.thinning
    }

    /// The configuration for the chain of instance `index`.
    pub fn for_instance(&self, index: u64) -> SamplerConfig {
        SamplerConfig {
            seed: self.seed ^ index,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleEstimate {
    /// Estimated `E_q[f(x, y)]` over model-feature ids.
    pub model_features: SparseFeatures,
    /// Retained-sample frequency of every node and edge slot.
    pub slot_frequencies: Vec<f64>,
    /// Active constraints touching the instance, in the order of the values.
    pub constraints: Vec<usize>,
    /// Estimated `E_q[s·f']` per entry of `constraints`.
    pub constraint_values: Vec<f64>,
    /// Naive standard error `sd/√n` per entry of `constraints`.
    pub std_errors: Vec<f64>,
    pub sample_count: usize,
    /// Estimate of `log Z_{λ,μ}` by importance sampling from the factored part.
    pub log_z: f64,
}

/// Incremental evaluator of one global feature under single-site changes.
enum GlobalEval {
    /// Tracks segment count and per-label counts.
    Repetition { segments: usize, counts: Vec<usize> },
    /// Re-evaluates the feature on a modified copy of the assignment.
    Full,
}

struct Chain<'p, 'a> {
    prep: &'p PreparedAux<'a>,
    set: &'p ConstraintSet,
    pot: Potentials,
    weights: Vec<(usize, f64)>,
    evals: Vec<GlobalEval>,
    y: Vec<usize>,
    scratch: Vec<usize>,
}

impl<'p, 'a> Chain<'p, 'a> {
    fn new(prep: &'p PreparedAux<'a>, set: &'p ConstraintSet, mu: &[f64], y: Vec<usize>) -> Self {
        let pot = prep.potentials(mu);
        let k = pot.num_labels();
        let weights = prep.global_weights(mu);
        let evals = weights
            .iter()
            .map(|&(a, _)| match set.feature(a).kind {
                ConstraintKind::RepetitionCount => {
                    let mut counts = vec![0; k];
                    for &l in &y {
                        counts[l] += 1;
                    }
                    GlobalEval::Repetition {
                        segments: 1 + y.windows(2).filter(|w| w[0] != w[1]).count(),
                        counts,
                    }
                }
                _ => GlobalEval::Full,
            })
            .collect();
        let scratch = y.clone();
        Chain {
            prep,
            set,
            pot,
            weights,
            evals,
            y,
            scratch,
        }
    }

    /// Change in segment count when position `t` takes label `c`.
    fn segments_delta(&self, t: usize, c: usize) -> isize {
        let y = &self.y;
        let local = |v: usize| -> isize {
            let mut n = 0;
            if t > 0 && y[t - 1] != v {
                n += 1;
            }
            if t + 1 < y.len() && y[t + 1] != v {
                n += 1;
            }
            n
        };
        local(c) - local(y[t])
    }

    /// Unnormalized log conditional of every label at position `t`.
    fn site_scores(&mut self, t: usize, out: &mut [f64]) -> Result<()> {
        let len = self.y.len();
        let old = self.y[t];
        for (c, o) in out.iter_mut().enumerate() {
            let mut s = self.pot.node(t, c);
            if t > 0 {
                s += self.pot.edge(t - 1, self.y[t - 1], c);
            }
            if t + 1 < len {
                s += self.pot.edge(t, c, self.y[t + 1]);
            }
            *o = s;
        }
        for (g, &(a, w)) in self.evals.iter().zip(&self.weights) {
            if w == 0.0 {
                continue;
            }
            match g {
                GlobalEval::Repetition { segments, counts } => {
                    let distinct = counts.iter().filter(|&&n| n > 0).count() as isize;
                    for (c, o) in out.iter_mut().enumerate() {
                        let seg = *segments as isize + self.segments_delta(t, c);
                        let mut d = distinct;
                        if c != old {
                            if counts[old] == 1 {
                                d -= 1;
                            }
                            if counts[c] == 0 {
                                d += 1;
                            }
                        }
                        *o += w * (seg - d) as f64;
                    }
                }
                GlobalEval::Full => {
                    let f = self.set.feature(a);
                    self.scratch.copy_from_slice(&self.y);
                    for (c, o) in out.iter_mut().enumerate() {
                        self.scratch[t] = c;
                        *o += w * f.evaluate(self.prep.instance(), &self.scratch)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn set_label(&mut self, t: usize, c: usize) {
        let old = self.y[t];
        if old == c {
            return;
        }
        let delta = self.segments_delta(t, c);
        for g in &mut self.evals {
            if let GlobalEval::Repetition { segments, counts } = g {
                *segments = (*segments as isize + delta) as usize;
                counts[old] -= 1;
                counts[c] += 1;
            }
        }
        self.y[t] = c;
    }

    fn sweep(&mut self, rng: &mut ChaCha8Rng, scores: &mut [f64]) -> Result<()> {
        for t in 0..self.y.len() {
            self.site_scores(t, scores)?;
            let c = sample_log_weights(scores, rng);
            self.set_label(t, c);
        }
        Ok(())
    }
}

/// Draws an index with probability `∝ exp(scores[i])`.
fn sample_log_weights(scores: &mut [f64], rng: &mut ChaCha8Rng) -> usize {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in scores.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    scores.len() - 1
}

/// Exact conditional of the label at `position` under `q_{λ,μ}` given the
/// rest of `y`.
pub fn conditional_site_distribution(
    lambda: &ParamVector,
    mu: &AuxParams,
    set: &ConstraintSet,
    j: Option<usize>,
    inst: &SequenceInstance,
    y: &[usize],
    position: usize,
) -> Result<Vec<f64>> {
    check_mu(mu.values(), set)?;
    let k = lambda.num_labels();
    if y.len() != inst.len() {
        return Err(Error::Contract(format!(
            "assignment has length {}, instance has {}",
            y.len(),
            inst.len()
        )));
    }
    if position >= y.len() {
        return Err(Error::Index {
            what: "position",
            index: position,
            limit: y.len(),
        });
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= k) {
        return Err(Error::Index {
            what: "label",
            index: bad,
            limit: k,
        });
    }
    let prep = PreparedAux::new(lambda, set, j, InstanceRef::Sequence(inst))?;
    let mut chain = Chain::new(&prep, set, mu.values(), y.to_vec());
    let mut scores = vec![0.0; k];
    chain.site_scores(position, &mut scores)?;
    let lz = log_sum_exp(&scores);
    Ok(scores.iter().map(|s| (s - lz).exp()).collect())
}

/// Monte-Carlo estimates of `E_q[f]` and `E_q[f']` for one sequence.
pub fn gibbs_expectations(
    lambda: &ParamVector,
    mu: &AuxParams,
    set: &ConstraintSet,
    j: Option<usize>,
    inst: &SequenceInstance,
    sampler: &SamplerConfig,
) -> Result<SampleEstimate> {
    check_mu(mu.values(), set)?;
    let prep = PreparedAux::new(lambda, set, j, InstanceRef::Sequence(inst))?;
    let est = sample_prepared(&prep, mu.values(), set, sampler)?;
    let mut dense = vec![0.0; lambda.layout().dim()];
    accumulate_slot_features(
        &est.slot_frequencies,
        InstanceRef::Sequence(inst),
        &lambda.layout(),
        1.0,
        &mut dense,
    );
    Ok(SampleEstimate {
        model_features: to_sparse(&dense),
        ..est
    })
}

/// Sampler core on a prepared instance. `model_features` is left empty; the
/// caller folds `slot_frequencies` into whatever buffer it needs.
pub(crate) fn sample_prepared(
    prep: &PreparedAux<'_>,
    mu: &[f64],
    set: &ConstraintSet,
    sampler: &SamplerConfig,
) -> Result<SampleEstimate> {
    sampler.validate()?;
    let inst = prep.instance();
    let (len, k) = (inst.len(), prep.base().num_labels());
    let pot = prep.potentials(mu);
    let start = viterbi_decode(&pot)?;
    let mut chain = Chain::new(prep, set, mu, start);
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let mut scores = vec![0.0; k];

    for _ in 0..sampler.burn_in {
        chain.sweep(&mut rng, &mut scores)?;
    }
    let constraints: Vec<usize> = prep.applicable().collect();
    let mut slots = vec![0.0; slot_count(len, k)];
    let mut sum = vec![0.0; constraints.len()];
    let mut sum_sq = vec![0.0; constraints.len()];
    for s in 1..=sampler.sweeps {
        chain.sweep(&mut rng, &mut scores)?;
        if s % sampler.thinning != 0 {
            continue;
        }
        let y = &chain.y;
        for t in 0..len {
            slots[t * k + y[t]] += 1.0;
            if t + 1 < len {
                slots[len * k + (t * k + y[t]) * k + y[t + 1]] += 1.0;
            }
        }
        for (i, &a) in constraints.iter().enumerate() {
            let v = set.evaluate(a, inst, y)?;
            sum[i] += v;
            sum_sq[i] += v * v;
        }
    }
    let n = sampler.sample_count() as f64;
    for s in &mut slots {
        *s /= n;
    }
    let mut std_errors = Vec::with_capacity(sum.len());
    for (s, sq) in sum.iter_mut().zip(&sum_sq) {
        *s /= n;
        let var = (sq / n - *s * *s).max(0.0);
        std_errors.push((var / n).sqrt());
    }
    let log_z = estimate_log_partition(prep, &pot, mu, set, sampler)?;
    Ok(SampleEstimate {
        model_features: SparseFeatures::default(),
        slot_frequencies: slots,
        constraints,
        constraint_values: sum,
        std_errors,
        sample_count: sampler.sample_count(),
        log_z,
    })
}

/// Draws `y ~ softmax(pot)` exactly by forward filtering, backward sampling.
pub(crate) fn sample_exact(pot: &Potentials, alpha: &[f64], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let (len, k) = (pot.len(), pot.num_labels());
    let mut y = vec![0; len];
    let mut w = alpha[(len - 1) * k..].to_vec();
    y[len - 1] = sample_log_weights(&mut w, rng);
    for t in (0..len - 1).rev() {
        for a in 0..k {
            w[a] = alpha[t * k + a] + pot.edge(t, a, y[t + 1]);
        }
        y[t] = sample_log_weights(&mut w, rng);
    }
    y
}

/// `log Z_{λ,μ} = log Z_fact + log E_fact[exp(Σ w_g f'_g)]`, the expectation
/// estimated from exact samples of the factored part.
fn estimate_log_partition(
    prep: &PreparedAux<'_>,
    pot: &Potentials,
    mu: &[f64],
    set: &ConstraintSet,
    sampler: &SamplerConfig,
) -> Result<f64> {
    let log_z_fact = log_partition(pot)?;
    let weights = prep.global_weights(mu);
    if weights.iter().all(|&(_, w)| w == 0.0) {
        return Ok(log_z_fact);
    }
    let alpha = forward_table(pot);
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed ^ 0x5eed_1f5a_0000_0000);
    let n = sampler.sample_count();
    let mut logs = Vec::with_capacity(n);
    for _ in 0..n {
        let y = sample_exact(pot, &alpha, &mut rng);
        let mut g = 0.0;
        for &(a, w) in &weights {
            g += w * set.feature(a).evaluate(prep.instance(), &y)?;
        }
        logs.push(g);
    }
    Ok(log_z_fact + log_sum_exp(&logs) - (n as f64).ln())
}
