//! Batch alternating projections and the online stochastic variant.

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::constraints::{AuxParams, ConstraintSet};
use crate::error::{Error, Result};
use crate::model::{
    accumulate_assignment_features, accumulate_expected_features, infer, Example, InstanceRef,
    Layout, ParamVector, Potentials,
};

use super::auxiliary::PreparedAux;
use super::config::{Mode, RateSchedule, TrainConfig};
use super::iproj::{i_projection, sampled_i_projection};
use super::mproj::{m_projection, supervised_train};
use super::objective::{collect_stats, joint_from_stats, prepare_all, q_feature_target};

#[derive(Debug, Clone, PartialEq)]
pub struct APState {
    pub lambda: ParamVector,
    pub mu: AuxParams,
    /// Completed rounds (batch) or steps (online).
    pub iteration: usize,
    /// Joint objective before any projection.
    pub initial_objective: f64,
    /// Batch: the joint objective after every I- and M-projection (`2T`
    /// values). Online: one value per epoch.
    pub objective_trace: Vec<f64>,
    /// True when expectations (and so the trace) are Monte-Carlo estimates.
    pub sampled: bool,
}

fn check_inputs(
    labeled: &[Example],
    unlabeled: &[Example],
    set: &ConstraintSet,
    cfg: &TrainConfig,
) -> Result<()> {
    cfg.validate()?;
    if cfg.gamma > 0.0 && unlabeled.is_empty() {
        return Err(Error::Config(
            "gamma > 0 needs a non-empty unlabeled set".into(),
        ));
    }
    if set.num_instances() != unlabeled.len() {
        return Err(Error::Contract(format!(
            "constraint set was scaled on {} instances, got {}",
            set.num_instances(),
            unlabeled.len()
        )));
    }
    if let Some(ex) = labeled.iter().find(|e| !e.is_labeled()) {
        return Err(Error::Contract(format!(
            "labeled set contains an unlabeled instance of length {}",
            ex.len()
        )));
    }
    Ok(())
}

fn initial_lambda(layout: Layout, labeled: &[Example], cfg: &TrainConfig) -> Result<ParamVector> {
    if cfg.warm_start && !labeled.is_empty() {
        supervised_train(layout, labeled, cfg)
    } else {
        Ok(ParamVector::zeros(layout))
    }
}

/// Trains with the configured mode: `T` rounds of I- then M-projection
/// (batch) or `T` epochs of stochastic updates (online).
pub fn ap_train(
    layout: Layout,
    labeled: &[Example],
    unlabeled: &[Example],
    set: &ConstraintSet,
    cfg: &TrainConfig,
) -> Result<APState> {
    if cfg.mode == Mode::Online {
        return online_ap_train(layout, labeled, unlabeled, set, cfg);
    }
    check_inputs(labeled, unlabeled, set, cfg)?;
    let mut lambda = initial_lambda(layout, labeled, cfg)?;
    let mut mu = AuxParams::zeros(set);
    let use_unlabeled = cfg.gamma > 0.0;
    let sampled = use_unlabeled
        && prepare_all(&lambda, set, unlabeled)?.iter().any(PreparedAux::has_global);

    let stats = |lambda: &ParamVector, mu: &AuxParams, round: u64| {
        if use_unlabeled {
            let preps = prepare_all(lambda, set, unlabeled)?;
            collect_stats(&preps, mu.values(), set, cfg, round)
        } else {
            Ok(Vec::new())
        }
    };
    let initial_objective = joint_from_stats(
        &lambda,
        &stats(&lambda, &mu, 0)?,
        set,
        labeled,
        unlabeled,
        cfg,
    )?;
    let mut trace = Vec::with_capacity(2 * cfg.iterations);
    for t in 1..=cfg.iterations {
        if use_unlabeled && !set.is_empty() {
            mu = if sampled {
                sampled_i_projection(&lambda, set, unlabeled, cfg, Some(&mu), t as u64)?
            } else {
                i_projection(&lambda, set, unlabeled, cfg, Some(&mu))?
            };
        }
        let q = stats(&lambda, &mu, t as u64)?;
        trace.push(joint_from_stats(&lambda, &q, set, labeled, unlabeled, cfg)?);
        let target = if use_unlabeled {
            q_feature_target(&q, unlabeled, &layout)
        } else {
            vec![0.0; layout.dim()]
        };
        lambda = m_projection(&lambda, &target, labeled, unlabeled, cfg)?;
        trace.push(joint_from_stats(&lambda, &q, set, labeled, unlabeled, cfg)?);
        info!(
            "round {t}: objective {:.6} after I, {:.6} after M",
            trace[trace.len() - 2],
            trace[trace.len() - 1]
        );
    }
    Ok(APState {
        lambda,
        mu,
        iteration: cfg.iterations,
        initial_objective,
        objective_trace: trace,
        sampled,
    })
}

/// One element of the online stream.
#[derive(Debug, Clone, Copy)]
pub enum OnlineItem<'a> {
    Labeled(InstanceRef<'a>),
    /// An unlabeled instance and its index in the scaled constraint set.
    Unlabeled { index: usize, inst: InstanceRef<'a> },
}

/// One stochastic update with rate `η = 1/(t + 1/η0)`.
///
/// Labeled: `λ += η[f(x,y) − E_p[f] − αλ/n]`. Unlabeled: with `q` built from
/// the current `μ`, per-dataset duals move by
/// `η[u/(n−m) − E_q[s·f'] − pen'(μ)/(n−m)]` (per-instance ones use their own
/// target and no share), then `λ += η[γ(E_q[f] − E_p[f]) − αλ/n]`.
pub fn online_ap_step(
    mut state: APState,
    item: OnlineItem<'_>,
    set: &ConstraintSet,
    cfg: &TrainConfig,
    t: usize,
) -> Result<APState> {
    let (n, m) = cfg
        .online_sizes
        .ok_or_else(|| Error::Config("online updates need the sizes n and m".into()))?;
    if t == 0 {
        return Err(Error::Contract("online step index starts at 1".into()));
    }
    let eta = 1.0 / (t as f64 + 1.0 / cfg.eta0);
    let layout = state.lambda.layout();
    let mut step = vec![0.0; layout.dim()];
    match item {
        OnlineItem::Labeled(inst) => {
            let gold = inst
                .gold()
                .ok_or_else(|| Error::Contract("labeled online item has no labels".into()))?;
            let post = infer(&Potentials::from_model(&state.lambda, inst)?)?;
            accumulate_assignment_features(inst, &gold, &layout, 1.0, &mut step);
            accumulate_expected_features(&post, inst, &layout, -1.0, &mut step);
        }
        OnlineItem::Unlabeled { index, inst } => {
            if n <= m {
                return Err(Error::Config(format!(
                    "online sizes need n > m for unlabeled updates, got n={n} m={m}"
                )));
            }
            let share = (n - m) as f64;
            let prep = PreparedAux::new(&state.lambda, set, Some(index), inst)?;
            let mu = state.mu.values().to_vec();
            let q = prep.posterior(&mu, set)?;
            let p = infer(prep.base())?;
            for (a, terms) in prep.factored() {
                let c = &set.active()[*a];
                let div = if c.instance.is_some() { 1.0 } else { share };
                let (_, dpen) = c.penalty.smooth_penalty(mu[*a]);
                let g = c.target / div - q.expect_terms(terms) - dpen / div;
                let mut v = mu[*a] + eta * g;
                let thresh = eta * c.penalty.l1_weight() / div;
                v = v.signum() * (v.abs() - thresh).max(0.0);
                state.mu.values_mut()[*a] = v;
            }
            state.mu.project();
            accumulate_expected_features(&q, inst, &layout, cfg.gamma, &mut step);
            accumulate_expected_features(&p, inst, &layout, -cfg.gamma, &mut step);
        }
    }
    let shrink = cfg.alpha / n as f64;
    for (w, s) in state.lambda.weights_mut().iter_mut().zip(&step) {
        *w += eta * (s - shrink * *w);
    }
    if state.lambda.weights().iter().any(|w| !w.is_finite()) {
        return Err(Error::Optimization(format!("online step {t} diverged")));
    }
    state.iteration = t;
    Ok(state)
}

/// `T` epochs over labeled and unlabeled instances in a seeded random order
/// per epoch; records the joint objective after each epoch. The rate index
/// passed to each step follows `cfg.schedule`.
pub fn online_ap_train(
    layout: Layout,
    labeled: &[Example],
    unlabeled: &[Example],
    set: &ConstraintSet,
    cfg: &TrainConfig,
) -> Result<APState> {
    check_inputs(labeled, unlabeled, set, cfg)?;
    let mut cfg = cfg.clone();
    let sizes = cfg
        .online_sizes
        .unwrap_or((labeled.len() + unlabeled.len(), labeled.len()));
    cfg.online_sizes = Some(sizes);
    let objective = |lambda: &ParamVector, mu: &AuxParams| {
        let stats = if cfg.gamma > 0.0 {
            collect_stats(&prepare_all(lambda, set, unlabeled)?, mu.values(), set, &cfg, 0)?
        } else {
            Vec::new()
        };
        joint_from_stats(lambda, &stats, set, labeled, unlabeled, &cfg)
    };

    let lambda = initial_lambda(layout, labeled, &cfg)?;
    let mu = AuxParams::zeros(set);
    let initial_objective = objective(&lambda, &mu)?;
    let mut state = APState {
        lambda,
        mu,
        iteration: 0,
        initial_objective,
        objective_trace: Vec::with_capacity(cfg.iterations),
        sampled: false,
    };
    let mut order: Vec<OnlineItem<'_>> = labeled
        .iter()
        .map(|e| OnlineItem::Labeled(e.as_ref()))
        .collect();
    if cfg.gamma > 0.0 {
        order.extend(
            unlabeled
                .iter()
                .enumerate()
                .map(|(index, e)| OnlineItem::Unlabeled {
                    index,
                    inst: e.as_ref(),
                }),
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut t = 0;
    for epoch in 1..=cfg.iterations {
        order.shuffle(&mut rng);
        for &item in &order {
            t += 1;
            let tick = match cfg.schedule {
                RateSchedule::PerExample => t,
                RateSchedule::PerEpoch => epoch,
            };
            state = online_ap_step(state, item, set, &cfg, tick)?;
            state.iteration = t;
        }
        let value = objective(&state.lambda, &state.mu)?;
        info!("epoch {epoch}: objective {value:.6}");
        state.objective_trace.push(value);
    }
    Ok(state)
}
