//! The joint objective
//! `Σ_i −log p_λ(y_i|x_i) + (α/2)‖λ‖² + γ[Σ_j D(q_j‖p_λ) + Σ_a U_a(E_q[f'_a])]`
//! and the per-instance statistics of `q` it is assembled from.

use crate::constraints::{AuxParams, ConstraintSet};
use crate::error::{Error, Result};
use crate::gibbs::{sample_prepared, SamplerConfig};
use crate::model::{
    accumulate_slot_features, infer, log_partition, supervised_loss_and_gradient, Example, Layout, ParamVector,
    Potentials,
};

use super::auxiliary::{check_mu, PreparedAux};
use super::config::TrainConfig;

/// What the objective and the M-projection need to know about `q` on one
/// unlabeled instance. Exact when no global constraint applies.
#[derive(Debug, Clone)]
pub(crate) struct QStats {
    /// Marginals (or sample frequencies) in slot layout.
    pub slots: Vec<f64>,
    /// `E_q[s·f']` per applicable active constraint.
    pub constraints: Vec<(usize, f64)>,
    pub std_errors: Vec<f64>,
    pub log_z: f64,
    /// Factored potentials of `q`.
    pub potentials: Potentials,
    /// `Σ_global μ_a · E_q[s_a·f'_a]`.
    pub global_term: f64,
}

impl QStats {
    pub fn compute(
        prep: &PreparedAux<'_>,
        mu: &[f64],
        set: &ConstraintSet,
        sampler: &SamplerConfig,
    ) -> Result<Self> {
        let potentials = prep.potentials(mu);
        if !prep.has_global() {
            let post = infer(&potentials)?;
            let constraints = prep
                .factored()
                .iter()
                .map(|(a, terms)| (*a, post.expect_terms(terms)))
                .collect::<Vec<_>>();
            return Ok(QStats {
                std_errors: vec![0.0; constraints.len()],
                slots: post.slots().to_vec(),
                constraints,
                log_z: post.log_z(),
                potentials,
                global_term: 0.0,
            });
        }
        let est = sample_prepared(prep, mu, set, sampler)?;
        let global_term = est
            .constraints
            .iter()
            .zip(&est.constraint_values)
            .filter(|(a, _)| prep.global().contains(a))
            .map(|(&a, v)| mu[a] * v)
            .sum();
        Ok(QStats {
            slots: est.slot_frequencies,
            constraints: est.constraints.into_iter().zip(est.constraint_values).collect(),
            std_errors: est.std_errors,
            log_z: est.log_z,
            potentials,
            global_term,
        })
    }

    /// `D(q‖p)` given the model potentials and log-partition of `p`.
    pub fn kl_to(&self, model: &Potentials, model_log_z: f64) -> f64 {
        let cross: f64 = self
            .slots
            .iter()
            .zip(self.potentials.scores().iter().zip(model.scores()))
            .map(|(m, (q, p))| if *m == 0.0 { 0.0 } else { m * (q - p) })
            .sum();
        cross + self.global_term - self.log_z + model_log_z
    }
}

/// Seed of the chain for unlabeled instance `j` in sampling round `round`.
pub(crate) fn round_sampler(cfg: &TrainConfig, j: usize, round: u64) -> SamplerConfig {
    let mut s = cfg.sampler;
    s.seed = cfg.seed ^ cfg.sampler.seed;
    s.for_instance(j as u64 ^ (round << 32))
}

pub(crate) fn prepare_all<'a>(
    lambda: &ParamVector,
    set: &ConstraintSet,
    unlabeled: &'a [Example],
) -> Result<Vec<PreparedAux<'a>>> {
    if set.num_instances() != unlabeled.len() {
        return Err(Error::Contract(format!(
            "constraint set was scaled on {} instances, got {}",
            set.num_instances(),
            unlabeled.len()
        )));
    }
    unlabeled
        .iter()
        .enumerate()
        .map(|(j, ex)| PreparedAux::new(lambda, set, Some(j), ex.as_ref()))
        .collect()
}

pub(crate) fn collect_stats(
    preps: &[PreparedAux<'_>],
    mu: &[f64],
    set: &ConstraintSet,
    cfg: &TrainConfig,
    round: u64,
) -> Result<Vec<QStats>> {
    preps
        .iter()
        .enumerate()
        .map(|(j, p)| QStats::compute(p, mu, set, &round_sampler(cfg, j, round)))
        .collect()
}

/// `Σ_j E_q[f(x_j, y)]` as a dense model-feature vector.
pub(crate) fn q_feature_target(
    stats: &[QStats],
    unlabeled: &[Example],
    layout: &Layout,
) -> Vec<f64> {
    let mut target = vec![0.0; layout.dim()];
    for (s, ex) in stats.iter().zip(unlabeled) {
        accumulate_slot_features(&s.slots, ex.as_ref(), layout, 1.0, &mut target);
    }
    target
}

/// `Σ_a U_a(Σ_j E_q[s·f'_a])`; indicator slack widens to three standard
/// errors when the expectation is sampled.
pub(crate) fn penalty_sum(stats: &[QStats], set: &ConstraintSet) -> f64 {
    let n = set.len();
    let mut value = vec![0.0; n];
    let mut var = vec![0.0; n];
    for s in stats {
        for (&(a, v), se) in s.constraints.iter().zip(&s.std_errors) {
            value[a] += v;
            var[a] += se * se;
        }
    }
    set.active()
        .iter()
        .enumerate()
        .map(|(a, c)| {
            let slack = (1e-6 * c.target.abs().max(1.0)).max(3.0 * var[a].sqrt());
            c.penalty.primal_within(value[a], c.target, slack)
        })
        .sum()
}

/// The joint objective with `q` given by precomputed statistics (possibly
/// built from an older `λ`).
pub(crate) fn joint_from_stats(
    lambda: &ParamVector,
    stats: &[QStats],
    set: &ConstraintSet,
    labeled: &[Example],
    unlabeled: &[Example],
    cfg: &TrainConfig,
) -> Result<f64> {
    let (mut value, _) =
        supervised_loss_and_gradient(lambda, labeled.iter().map(Example::as_ref), cfg.alpha)?;
    if cfg.gamma == 0.0 {
        return Ok(value);
    }
    let mut kl = 0.0;
    for (s, ex) in stats.iter().zip(unlabeled) {
        let pot = Potentials::from_model(lambda, ex.as_ref())?;
        let log_z = log_partition(&pot)?;
        kl += s.kl_to(&pot, log_z);
    }
    value += cfg.gamma * (kl + penalty_sum(stats, set));
    Ok(value)
}

/// Joint objective at `(λ, q_{λ,μ})`. With global constraints the KL term
/// and the expectations are sampled estimates.
pub fn joint_objective(
    lambda: &ParamVector,
    mu: &AuxParams,
    set: &ConstraintSet,
    labeled: &[Example],
    unlabeled: &[Example],
    cfg: &TrainConfig,
) -> Result<f64> {
    joint_objective_with_q(lambda, lambda, mu, set, labeled, unlabeled, cfg)
}

/// Joint objective at `(λ, q)` where `q ∝ exp(λ_q·f + μ·f')` is held fixed;
/// this is the value an M-projection decreases.
pub fn joint_objective_with_q(
    lambda: &ParamVector,
    q_lambda: &ParamVector,
    mu: &AuxParams,
    set: &ConstraintSet,
    labeled: &[Example],
    unlabeled: &[Example],
    cfg: &TrainConfig,
) -> Result<f64> {
    check_mu(mu.values(), set)?;
    let stats = if cfg.gamma == 0.0 {
        Vec::new()
    } else {
        let preps = prepare_all(q_lambda, set, unlabeled)?;
        collect_stats(&preps, mu.values(), set, cfg, 0)?
    };
    joint_from_stats(lambda, &stats, set, labeled, unlabeled, cfg)
}
