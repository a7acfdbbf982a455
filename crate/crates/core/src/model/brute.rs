//! Exhaustive enumeration over all `K^L` label sequences. Used as a test
//! oracle for forward-backward, Viterbi and the constraint expectations.

use crate::error::{Error, Result};

use super::inference::{log_sum_exp, score_assignment, Posterior};
use super::params::ParamVector;
use super::potentials::slot_count;
use super::types::{InstanceRef, SequenceInstance};

/// Largest state space the enumerator will visit.
pub const MAX_STATES: usize = 1_000_000;

pub fn state_count(len: usize, k: usize) -> Option<usize> {
    let mut n: usize = 1;
    for _ in 0..len {
        n = n.checked_mul(k)?;
    }
    Some(n)
}

fn guard(len: usize, k: usize) -> Result<()> {
    match state_count(len, k) {
        Some(n) if n <= MAX_STATES => Ok(()),
        _ => Err(Error::Refused(format!(
            "enumeration over {k}^{len} assignments exceeds {MAX_STATES}"
        ))),
    }
}

/// Calls `visit` on every assignment in lexicographic order.
pub fn for_each_assignment(len: usize, k: usize, mut visit: impl FnMut(&[usize])) -> Result<()> {
    guard(len, k)?;
    let mut y = vec![0usize; len];
    loop {
        visit(&y);
        let mut t = len;
        loop {
            if t == 0 {
                return Ok(());
            }
            t -= 1;
            y[t] += 1;
            if y[t] < k {
                break;
            }
            y[t] = 0;
        }
    }
}

/// Posterior of `p(y) ∝ exp(score(y))` by enumeration, in the slot layout
/// of [`super::potentials::Potentials`].
pub fn enumerate_posterior(
    len: usize,
    k: usize,
    mut score: impl FnMut(&[usize]) -> f64,
) -> Result<Posterior> {
    let mut scores = Vec::new();
    for_each_assignment(len, k, |y| scores.push(score(y)))?;
    let log_z = log_sum_exp(&scores);
    if !log_z.is_finite() {
        return Err(Error::Numeric("log-partition is not finite".into()));
    }
    let mut marginals = vec![0.0; slot_count(len, k)];
    let mut i = 0;
    for_each_assignment(len, k, |y| {
        let p = (scores[i] - log_z).exp();
        i += 1;
        for t in 0..len {
            marginals[t * k + y[t]] += p;
            if t + 1 < len {
                marginals[len * k + (t * k + y[t]) * k + y[t + 1]] += p;
            }
        }
    })?;
    Ok(Posterior::from_parts(len, k, marginals, log_z))
}

/// `E_p[g(y)]` for `p(y) ∝ exp(score(y))`, by enumeration.
pub fn enumerate_expectation(
    len: usize,
    k: usize,
    mut score: impl FnMut(&[usize]) -> f64,
    mut g: impl FnMut(&[usize]) -> f64,
) -> Result<f64> {
    let mut pairs = Vec::new();
    for_each_assignment(len, k, |y| pairs.push((score(y), g(y))))?;
    let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let log_z = log_sum_exp(&scores);
    Ok(pairs.iter().map(|&(s, v)| (s - log_z).exp() * v).sum())
}

/// Highest-scoring assignment; the first one in lexicographic order among ties.
pub fn enumerate_argmax(
    len: usize,
    k: usize,
    mut score: impl FnMut(&[usize]) -> f64,
) -> Result<Vec<usize>> {
    let mut best = f64::NEG_INFINITY;
    let mut arg = vec![0; len];
    for_each_assignment(len, k, |y| {
        let s = score(y);
        if s > best {
            best = s;
            arg.copy_from_slice(y);
        }
    })?;
    Ok(arg)
}

/// Model posterior by enumeration; same output contract as
/// [`super::inference::chain_posterior`].
pub fn brute_force_posterior(params: &ParamVector, inst: &SequenceInstance) -> Result<Posterior> {
    let k = params.num_labels();
    guard(inst.len(), k)?;
    for pos in &inst.positions {
        params.layout().check_features(pos)?;
    }
    let view = InstanceRef::Sequence(inst);
    enumerate_posterior(inst.len(), k, |y| score_assignment(params, view, y))
}

pub fn brute_force_viterbi(params: &ParamVector, inst: &SequenceInstance) -> Result<Vec<usize>> {
    let view = InstanceRef::Sequence(inst);
    enumerate_argmax(inst.len(), params.num_labels(), |y| {
        score_assignment(params, view, y)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::Layout;
    use crate::model::types::SparseFeatures;

    #[test]
    fn guard_refuses_large_spaces() {
        let params = ParamVector::zeros(Layout::chain(1, 4));
        let inst = SequenceInstance::new(vec![SparseFeatures::default(); 11], None).unwrap();
        assert!(matches!(
            brute_force_posterior(&params, &inst),
            Err(Error::Refused(_))
        ));
    }

    #[test]
    fn zero_potentials_length_two() {
        let params = ParamVector::zeros(Layout::chain(1, 2));
        let inst = SequenceInstance::new(vec![SparseFeatures::default(); 2], None).unwrap();
        let p = brute_force_posterior(&params, &inst).unwrap();
        assert!((p.log_z() - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn enumeration_order_is_lexicographic() {
        let mut seen = Vec::new();
        for_each_assignment(2, 2, |y| seen.push(y.to_vec())).unwrap();
        assert_eq!(seen, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }
}
