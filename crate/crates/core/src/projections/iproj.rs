//! I-projection: fit the duals `μ` of `q ∝ p_λ·exp(μ·f')` for fixed `λ`.
//!
//! The dual `Σ_a μ_a u_a − Σ_j [log Z_{λ,μ}(x_j) − log Z_λ(x_j)] − Σ_a pen_a(μ_a)`
//! is maximized; internally its negation is minimized.

use log::{debug, warn};

use crate::constraints::{AuxParams, ConstraintSet, DualBound};
use crate::error::{Error, Result};
use crate::model::{log_partition, Example, ParamVector};
use crate::optim::{minimize, Bound, Stop};

use super::auxiliary::{check_mu, PreparedAux};
use super::config::TrainConfig;
use super::objective::{prepare_all, round_sampler, QStats};

/// Negated smooth dual and its gradient `Σ_j E_q[s·f'] − u + pen'(μ)`.
fn smooth_neg_dual(
    preps: &[PreparedAux<'_>],
    base_log_z: &[f64],
    mu: &[f64],
    set: &ConstraintSet,
    grad: &mut [f64],
) -> Result<f64> {
    let mut value = 0.0;
    for (a, c) in set.active().iter().enumerate() {
        let (pen, dpen) = c.penalty.smooth_penalty(mu[a]);
        value += pen - mu[a] * c.target;
        grad[a] = dpen - c.target;
    }
    for (prep, lz) in preps.iter().zip(base_log_z) {
        let post = prep.posterior(mu, set)?;
        value += post.log_z() - lz;
        for (a, terms) in prep.factored() {
            grad[*a] += post.expect_terms(terms);
        }
    }
    Ok(value)
}

fn base_log_partitions(preps: &[PreparedAux<'_>]) -> Result<Vec<f64>> {
    preps.iter().map(|p| log_partition(p.base())).collect()
}

fn ensure_factored(preps: &[PreparedAux<'_>], set: &ConstraintSet) -> Result<()> {
    for p in preps {
        if let Some(&a) = p.global().first() {
            let f = set.feature(a);
            return Err(Error::Routing(format!("#{} ({})", f.id, f.kind.name())));
        }
    }
    Ok(())
}

/// Dual value and its ascent (sub)gradient `u − Σ_j E_q[s·f'] − ∂pen(μ)` at
/// `mu`. The box penalty's kink uses the minimum-norm subgradient.
pub fn i_objective_and_gradient(
    lambda: &ParamVector,
    mu: &[f64],
    set: &ConstraintSet,
    unlabeled: &[Example],
) -> Result<(f64, Vec<f64>)> {
    check_mu(mu, set)?;
    let preps = prepare_all(lambda, set, unlabeled)?;
    ensure_factored(&preps, set)?;
    let lz = base_log_partitions(&preps)?;
    let mut grad = vec![0.0; set.len()];
    let neg = smooth_neg_dual(&preps, &lz, mu, set, &mut grad)?;
    let mut value = -neg;
    for (a, c) in set.active().iter().enumerate() {
        let w = c.penalty.l1_weight();
        value -= w * mu[a].abs();
        // grad holds E_q − u + pen'; the conjugate subgradient covers −u + ∂pen.
        let expected = grad[a] - c.penalty.smooth_penalty(mu[a]).1 + c.target;
        let (_, sub) =
            crate::constraints::conjugate_value_and_subgradient(&c.penalty, mu[a], c.target);
        grad[a] = -(expected + sub);
    }
    Ok((value, grad))
}

fn optim_bounds(set: &ConstraintSet) -> Vec<Bound> {
    set.bounds()
        .into_iter()
        .map(|b| match b {
            DualBound::Free => Bound::Free,
            DualBound::NonPositive => Bound::NonPositive,
        })
        .collect()
}

/// Exact I-projection. `init` warm-starts the duals (zeros otherwise).
pub fn i_projection(
    lambda: &ParamVector,
    set: &ConstraintSet,
    unlabeled: &[Example],
    cfg: &TrainConfig,
    init: Option<&AuxParams>,
) -> Result<AuxParams> {
    if set.is_empty() {
        return Ok(AuxParams::zeros(set));
    }
    let preps = prepare_all(lambda, set, unlabeled)?;
    ensure_factored(&preps, set)?;
    let lz = base_log_partitions(&preps)?;
    let x0 = match init {
        Some(m) => {
            check_mu(m.values(), set)?;
            m.values().to_vec()
        }
        None => vec![0.0; set.len()],
    };
    let l1: Vec<f64> = set.active().iter().map(|c| c.penalty.l1_weight()).collect();
    let res = minimize(
        |mu, g| smooth_neg_dual(&preps, &lz, mu, set, g),
        x0,
        &l1,
        &optim_bounds(set),
        &cfg.optim(),
    )?;
    report("I-projection", res.stop, res.iterations, res.grad_norm);
    let mut mu = AuxParams::from_values(set, res.x)?;
    mu.project();
    Ok(mu)
}

/// I-projection with sampled expectations on instances carrying global
/// features: projected stochastic (sub)gradient steps of size
/// `step/((k+1)·n_a)`, where `n_a` counts the instances constraint `a`
/// touches. Factored-only instances keep exact expectations.
pub fn sampled_i_projection(
    lambda: &ParamVector,
    set: &ConstraintSet,
    unlabeled: &[Example],
    cfg: &TrainConfig,
    init: Option<&AuxParams>,
    round: u64,
) -> Result<AuxParams> {
    if set.is_empty() {
        return Ok(AuxParams::zeros(set));
    }
    let preps = prepare_all(lambda, set, unlabeled)?;
    let mut mu = match init {
        Some(m) => {
            check_mu(m.values(), set)?;
            m.values().to_vec()
        }
        None => vec![0.0; set.len()],
    };
    let mut reach = vec![0usize; set.len()];
    for p in &preps {
        for a in p.applicable() {
            reach[a] += 1;
        }
    }
    let bounds = set.bounds();
    for k in 0..cfg.sampled_iters {
        let mut grad: Vec<f64> = set
            .active()
            .iter()
            .enumerate()
            .map(|(a, c)| c.penalty.smooth_penalty(mu[a]).1 - c.target)
            .collect();
        for (j, p) in preps.iter().enumerate() {
            let sampler = round_sampler(cfg, j, (round << 16) ^ k as u64);
            let stats = QStats::compute(p, &mu, set, &sampler)?;
            for (a, v) in stats.constraints {
                grad[a] += v;
            }
        }
        for (a, c) in set.active().iter().enumerate() {
            let step = cfg.sampled_step / ((k + 1) as f64 * reach[a].max(1) as f64);
            let mut m = mu[a] - step * grad[a];
            let thresh = step * c.penalty.l1_weight();
            m = m.signum() * (m.abs() - thresh).max(0.0);
            if bounds[a] == DualBound::NonPositive && m > 0.0 {
                m = 0.0;
            }
            if !m.is_finite() {
                return Err(Error::Optimization(format!(
                    "sampled I-projection produced a non-finite dual for constraint {a}"
                )));
            }
            mu[a] = m;
        }
    }
    AuxParams::from_values(set, mu)
}

pub(crate) fn report(what: &str, stop: Stop, iterations: usize, grad_norm: f64) {
    match stop {
        Stop::Converged => debug!("{what}: converged in {iterations} iterations"),
        Stop::MaxIters => {
            warn!("{what}: iteration budget exhausted (gradient norm {grad_norm:.3e})")
        }
        Stop::Stalled => debug!(
            "{what}: line search stalled after {iterations} iterations (gradient norm {grad_norm:.3e})"
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{
        scale_targets, ConstraintFeature, ConstraintKind, ConstraintSpec, PenaltyFamily, Scope,
        TargetMode,
    };
    use crate::model::{Instance, Layout, SparseFeatures};

    fn single(penalty: PenaltyFamily, target: f64) -> (ConstraintSet, Vec<Example>) {
        let data = vec![Example::Flat(Instance::new(
            SparseFeatures::indicators(&[0]).unwrap(),
            None,
        ))];
        let f = ConstraintFeature::new(
            0,
            Scope::PerDataset,
            ConstraintKind::WordLabel {
                trigger: 0,
                label: 1,
                normalize: false,
            },
        );
        let spec = ConstraintSpec::new(f, TargetMode::Proportion, target, penalty).unwrap();
        (scale_targets(&[spec], &data).unwrap(), data)
    }

    #[test]
    fn recovers_ln9_for_sharp_l2() {
        let (set, data) = single(PenaltyFamily::l2(1e-8).unwrap(), 0.9);
        let lambda = ParamVector::zeros(Layout::flat(1, 2));
        let mu = i_projection(&lambda, &set, &data, &TrainConfig::default(), None).unwrap();
        assert!((mu.values()[0] - 9f64.ln()).abs() < 1e-3);
    }

    #[test]
    fn inactive_affine_stays_zero() {
        let (set, data) = single(PenaltyFamily::affine(), 0.7);
        let lambda = ParamVector::zeros(Layout::flat(1, 2));
        let mu = i_projection(&lambda, &set, &data, &TrainConfig::default(), None).unwrap();
        assert_eq!(mu.nu(0), Some(0.0));
    }

    #[test]
    fn empty_set_gives_empty_duals() {
        let set = ConstraintSet::empty(0);
        let lambda = ParamVector::zeros(Layout::flat(1, 2));
        let mu = i_projection(&lambda, &set, &[], &TrainConfig::default(), None).unwrap();
        assert!(mu.is_empty());
    }
}
