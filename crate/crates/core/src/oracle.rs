//! Randomized invariant suite: dynamic programming against enumeration,
//! analytic gradients against central differences, monotone training
//! traces, projection optimality conditions and sampler accuracy.
//!
//! Every check reports the worst deviation it saw; a check passes when that
//! deviation is at or below its tolerance (NaN never passes).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::{
    expected_constraint, repetition_count, scale_targets, AuxParams, ConstraintFeature,
    ConstraintKind, ConstraintSet, ConstraintSpec, PenaltyFamily, Scope, TargetMode,
};
use crate::error::Result;
use crate::ge::{ge_gradient, ge_objective, ge_terms_from_set};
use crate::gibbs::{gibbs_expectations, SamplerConfig};
use crate::model::brute::{enumerate_expectation, for_each_assignment};
use crate::model::{
    assignment_features, brute_force_posterior, brute_force_viterbi, chain_posterior,
    expected_model_features, score_assignment, supervised_loss_and_gradient, viterbi, Example,
    Instance, InstanceRef, Layout, ParamVector, Potentials, SequenceInstance, SparseFeatures,
};
use crate::optim::{finite_difference_gradient, relative_error};
use crate::projections::{
    ap_train, aux_posterior, i_objective_and_gradient, i_projection, m_objective_and_gradient,
    TrainConfig,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub cases: usize,
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

/// Finite-difference step and the floor of the relative-error denominator.
const FD_STEP: f64 = 1e-5;
const FD_FLOOR: f64 = 1e-6;

pub fn random_features(rng: &mut impl Rng, vocab: usize) -> SparseFeatures {
    let mut entries = Vec::new();
    for f in 0..vocab {
        if rng.gen_bool(0.5) {
            entries.push((f, rng.gen_range(0.25..1.5)));
        }
    }
    SparseFeatures::new(entries).expect("ids ascend")
}

pub fn random_sequence(
    rng: &mut impl Rng,
    len: usize,
    vocab: usize,
    k: Option<usize>,
) -> SequenceInstance {
    let positions = (0..len).map(|_| random_features(rng, vocab)).collect();
    let labels = k.map(|k| (0..len).map(|_| rng.gen_range(0..k)).collect());
    SequenceInstance::new(positions, labels).expect("consistent lengths")
}

pub fn random_flat(rng: &mut impl Rng, vocab: usize, k: Option<usize>) -> Instance {
    Instance::new(random_features(rng, vocab), k.map(|k| rng.gen_range(0..k)))
}

pub fn random_params(rng: &mut impl Rng, layout: Layout, scale: f64) -> ParamVector {
    let w = (0..layout.dim()).map(|_| rng.gen_range(-scale..scale)).collect();
    ParamVector::from_weights(layout, w).expect("dimension matches layout")
}

/// A small flat or chain problem: `(layout, labeled, unlabeled)`.
fn random_problem(rng: &mut ChaCha8Rng, chain: bool) -> (Layout, Vec<Example>, Vec<Example>) {
    let k = rng.gen_range(2..=3);
    let vocab = rng.gen_range(2..=4);
    let make = |rng: &mut ChaCha8Rng, labeled: bool| -> Example {
        let y = labeled.then_some(k);
        if chain {
            let len = rng.gen_range(1..=4);
            Example::Sequence(random_sequence(rng, len, vocab, y))
        } else {
            Example::Flat(random_flat(rng, vocab, y))
        }
    };
    let labeled = (0..2).map(|_| make(rng, true)).collect();
    let unlabeled = (0..3).map(|_| make(rng, false)).collect();
    let layout = if chain {
        Layout::chain(vocab, k)
    } else {
        Layout::flat(vocab, k)
    };
    (layout, labeled, unlabeled)
}

/// Factored constraints with targets drawn as expectations under a random
/// model, which keeps them strictly feasible.
fn random_constraints(
    rng: &mut ChaCha8Rng,
    layout: Layout,
    unlabeled: &[Example],
    penalty: impl Fn(&mut ChaCha8Rng, usize) -> PenaltyFamily,
) -> Result<ConstraintSet> {
    let k = layout.num_labels;
    // Triggers are drawn from features present in the pool so that no
    // constraint is deactivated.
    let mut present: Vec<usize> = unlabeled
        .iter()
        .flat_map(|ex| {
            let inst = ex.as_ref();
            (0..inst.len())
                .flat_map(move |t| inst.position(t).entries().iter().map(|e| e.0))
        })
        .collect();
    present.sort_unstable();
    present.dedup();
    if present.is_empty() {
        present.push(0);
    }
    let trigger = |rng: &mut ChaCha8Rng| present[rng.gen_range(0..present.len())];
    let mut kinds = Vec::new();
    if layout.is_chain() {
        kinds.push(ConstraintKind::TokenLabel {
            trigger: trigger(rng),
            label: rng.gen_range(0..k),
        });
        kinds.push(ConstraintKind::SelfTransition);
        kinds.push(ConstraintKind::StartLabel {
            label: rng.gen_range(0..k),
        });
    } else {
        for _ in 0..3 {
            kinds.push(ConstraintKind::WordLabel {
                trigger: trigger(rng),
                label: rng.gen_range(0..k),
                normalize: rng.gen_bool(0.5),
            });
        }
    }
    let truth = random_params(rng, layout, 1.0);
    let mut specs = Vec::new();
    for (id, kind) in kinds.into_iter().enumerate() {
        let feature = ConstraintFeature::new(id, Scope::PerDataset, kind);
        let mut target = 0.0;
        for ex in unlabeled {
            let inst = ex.as_ref();
            let post = crate::model::model_posterior(&truth, inst)?;
            target += expected_constraint(&feature, &post, inst)?;
        }
        let pen = penalty(rng, id);
        specs.push(ConstraintSpec::new(feature, TargetMode::Count, target, pen)?);
    }
    scale_targets(&specs, unlabeled)
}

/// Forward-backward marginals, log-partitions, expectations and Viterbi
/// against enumeration on chains with `L ≤ 5`, `K ≤ 4`.
pub fn check_chain_inference(seed: u64, cases: usize) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let len = rng.gen_range(1..=5);
        let k = rng.gen_range(1..=4);
        let vocab = rng.gen_range(1..=4);
        let layout = Layout::chain(vocab, k);
        let lambda = random_params(&mut rng, layout, 2.0);
        let inst = random_sequence(&mut rng, len, vocab, None);
        let view = InstanceRef::Sequence(&inst);

        let fast = chain_posterior(&lambda, &inst)?;
        let slow = brute_force_posterior(&lambda, &inst)?;
        worst = worst.max((fast.log_z() - slow.log_z()).abs());
        for (a, b) in fast.slots().iter().zip(slow.slots()) {
            worst = worst.max((a - b).abs());
        }

        // E[f] for every model feature.
        let expected = expected_model_features(&fast, view, &layout);
        let mut brute = vec![0.0; layout.dim()];
        let log_z = slow.log_z();
        for_each_assignment(len, k, |y| {
            let p = (score_assignment(&lambda, view, y) - log_z).exp();
            for &(i, v) in assignment_features(view, y, &layout).entries() {
                brute[i] += p * v;
            }
        })?;
        for (i, b) in brute.iter().enumerate() {
            worst = worst.max((expected.get(i) - b).abs());
        }

        // Factored constraint expectations.
        let kinds = [
            ConstraintKind::TokenLabel {
                trigger: rng.gen_range(0..vocab),
                label: rng.gen_range(0..k),
            },
            ConstraintKind::SelfTransition,
            ConstraintKind::TransitionOnPredicate {
                predicate: rng.gen_range(0..vocab),
                holds: rng.gen_bool(0.5),
            },
            ConstraintKind::StartLabel {
                label: rng.gen_range(0..k),
            },
        ];
        for kind in kinds {
            let f = ConstraintFeature::new(0, Scope::PerInstance, kind);
            let dp = expected_constraint(&f, &fast, view)?;
            let en = enumerate_expectation(
                len,
                k,
                |y| score_assignment(&lambda, view, y),
                |y| f.evaluate(view, y).unwrap_or(f64::NAN),
            )?;
            worst = worst.max((dp - en).abs());
        }

        // Viterbi ties are broken differently; compare path scores.
        let a = viterbi(&lambda, &inst)?;
        let b = brute_force_viterbi(&lambda, &inst)?;
        worst = worst.max(
            (score_assignment(&lambda, view, &a) - score_assignment(&lambda, view, &b)).abs(),
        );
    }
    Ok(CheckOutcome {
        name: "chain inference vs enumeration",
        cases,
        worst,
        tolerance: 1e-9,
    })
}

fn gradient_outcome(name: &'static str, cases: usize, worst: f64) -> CheckOutcome {
    CheckOutcome {
        name,
        cases,
        worst,
        tolerance: 1e-4,
    }
}

pub fn check_supervised_gradient(seed: u64, cases: usize) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for c in 0..cases {
        let (layout, labeled, _) = random_problem(&mut rng, c % 2 == 1);
        let alpha = rng.gen_range(0.0..1.0);
        let x = random_params(&mut rng, layout, 1.0).into_weights();
        let loss = |w: &[f64]| -> Result<(f64, Vec<f64>)> {
            let p = ParamVector::from_weights(layout, w.to_vec())?;
            supervised_loss_and_gradient(&p, labeled.iter().map(Example::as_ref), alpha)
        };
        let (_, g) = loss(&x)?;
        let fd = finite_difference_gradient(|w| Ok(loss(w)?.0), &x, FD_STEP)?;
        worst = worst.max(relative_error(&g, &fd, FD_FLOOR));
    }
    Ok(gradient_outcome("supervised gradient", cases, worst))
}

pub fn check_m_gradient(seed: u64, cases: usize) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for c in 0..cases {
        let (layout, labeled, unlabeled) = random_problem(&mut rng, c % 2 == 1);
        let alpha = rng.gen_range(0.0..1.0);
        let gamma = rng.gen_range(0.0..2.0);
        let target: Vec<f64> = (0..layout.dim()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let x = random_params(&mut rng, layout, 1.0).into_weights();
        let obj = |w: &[f64]| -> Result<(f64, Vec<f64>)> {
            let p = ParamVector::from_weights(layout, w.to_vec())?;
            m_objective_and_gradient(&p, &target, &labeled, &unlabeled, alpha, gamma)
        };
        let (_, g) = obj(&x)?;
        let fd = finite_difference_gradient(|w| Ok(obj(w)?.0), &x, FD_STEP)?;
        worst = worst.max(relative_error(&g, &fd, FD_FLOOR));
    }
    Ok(gradient_outcome("M-projection gradient", cases, worst))
}

/// Dual gradient at duals kept away from the box kink and the affine bound.
pub fn check_i_gradient(seed: u64, cases: usize) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for c in 0..cases {
        let (layout, _, unlabeled) = random_problem(&mut rng, c % 2 == 1);
        let set = random_constraints(&mut rng, layout, &unlabeled, |r, id| match id % 3 {
            0 => PenaltyFamily::l2(r.gen_range(0.1..2.0)).expect("beta > 0"),
            1 => PenaltyFamily::l1_box(r.gen_range(0.1..2.0)).expect("beta > 0"),
            _ => PenaltyFamily::affine(),
        })?;
        let lambda = random_params(&mut rng, layout, 1.0);
        let mu: Vec<f64> = set
            .active()
            .iter()
            .map(|a| {
                let m = rng.gen_range(0.1..1.5);
                match a.penalty.bound() {
                    crate::constraints::DualBound::NonPositive => -m,
                    _ if rng.gen_bool(0.5) => -m,
                    _ => m,
                }
            })
            .collect();
        let (_, g) = i_objective_and_gradient(&lambda, &mu, &set, &unlabeled)?;
        let fd = finite_difference_gradient(
            |m| Ok(i_objective_and_gradient(&lambda, m, &set, &unlabeled)?.0),
            &mu,
            FD_STEP,
        )?;
        worst = worst.max(relative_error(&g, &fd, FD_FLOOR));
    }
    Ok(gradient_outcome("I-projection dual gradient", cases, worst))
}

/// Covariance-form GE gradient against differences of the GE objective.
pub fn check_ge_gradient(seed: u64, cases: usize) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (layout, _, unlabeled) = random_problem(&mut rng, false);
        let set = random_constraints(&mut rng, layout, &unlabeled, |_, _| {
            PenaltyFamily::l2(1.0).expect("beta > 0")
        })?;
        let mut terms = ge_terms_from_set(&set, 1.0)?;
        for t in &mut terms {
            t.weight = rng.gen_range(0.1..3.0);
            t.target += rng.gen_range(-0.5..0.5);
        }
        let x = random_params(&mut rng, layout, 1.0).into_weights();
        let value = |w: &[f64]| -> Result<f64> {
            ge_objective(&ParamVector::from_weights(layout, w.to_vec())?, &terms, &[], &unlabeled, 0.0)
        };
        let g = ge_gradient(&ParamVector::from_weights(layout, x.clone())?, &terms, &unlabeled)?;
        let fd = finite_difference_gradient(value, &x, FD_STEP)?;
        worst = worst.max(relative_error(&g, &fd, FD_FLOOR));
    }
    Ok(gradient_outcome("GE gradient", cases, worst))
}

/// Largest increase of the joint objective between consecutive projection
/// steps of batch training with factored constraints.
pub fn check_monotone(seed: u64, cases: usize, rounds: usize) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = f64::NEG_INFINITY;
    for c in 0..cases {
        let (layout, labeled, unlabeled) = random_problem(&mut rng, c % 2 == 1);
        let set = random_constraints(&mut rng, layout, &unlabeled, |r, id| {
            let beta = r.gen_range(0.05..1.0);
            if id % 2 == 0 {
                PenaltyFamily::l2(beta).expect("beta > 0")
            } else {
                PenaltyFamily::l1_box(beta).expect("beta > 0")
            }
        })?;
        let cfg = TrainConfig {
            alpha: rng.gen_range(0.1..1.0),
            gamma: rng.gen_range(0.5..2.0),
            iterations: rounds,
            inner_tolerance: 1e-10,
            inner_max_iters: 2000,
            ..TrainConfig::classification()
        };
        let state = ap_train(layout, &labeled, &unlabeled, &set, &cfg)?;
        let mut prev = state.initial_objective;
        for &v in &state.objective_trace {
            worst = worst.max(v - prev);
            prev = v;
        }
    }
    Ok(CheckOutcome {
        name: "joint objective non-increasing",
        cases,
        worst: worst.max(0.0),
        tolerance: 1e-8,
    })
}

/// Tight l2 constraints with feasible targets are met, and affine duals
/// satisfy feasibility and complementary slackness.
pub fn check_kkt(seed: u64, cases: usize) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for c in 0..cases {
        let (layout, _, unlabeled) = random_problem(&mut rng, c % 2 == 1);
        let set = random_constraints(&mut rng, layout, &unlabeled, |_, id| {
            if id % 2 == 0 {
                PenaltyFamily::l2(1e-6).expect("beta > 0")
            } else {
                PenaltyFamily::affine()
            }
        })?;
        let lambda = random_params(&mut rng, layout, 1.0);
        let cfg = TrainConfig {
            inner_tolerance: 1e-9,
            inner_max_iters: 5000,
            ..TrainConfig::classification()
        };
        let mu = i_projection(&lambda, &set, &unlabeled, &cfg, None)?;
        let sums = constraint_sums(&lambda, &mu, &set, &unlabeled)?;
        for (a, act) in set.active().iter().enumerate() {
            let gap = sums[a] - act.target;
            let dev = match mu.nu(a) {
                None => gap.abs(),
                // Feasible, and either slack dual or tight constraint.
                Some(nu) => {
                    let feas = gap.max(0.0);
                    let slack = if nu <= 1e-6 { 0.0 } else { gap.abs() };
                    feas.max(slack)
                }
            };
            worst = worst.max(dev);
        }
    }
    Ok(CheckOutcome {
        name: "I-projection KKT conditions",
        cases,
        worst,
        tolerance: 1e-3,
    })
}

/// `Σ_j E_q[s·f'_a]` for every active constraint.
pub fn constraint_sums(
    lambda: &ParamVector,
    mu: &AuxParams,
    set: &ConstraintSet,
    unlabeled: &[Example],
) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; set.len()];
    for (j, ex) in unlabeled.iter().enumerate() {
        let inst = ex.as_ref();
        let post = aux_posterior(lambda, mu, set, Some(j), inst)?;
        for a in set.applicable(Some(j)) {
            sums[a] += set.active()[a].scale * expected_constraint(set.feature(a), &post, inst)?;
        }
    }
    Ok(sums)
}

/// Gibbs estimate of the repetition count under `q` against enumeration.
/// Returns the worst absolute error over `cases` random chains with
/// `K^L ≤ 4096`; `samples` counts retained sweeps.
pub fn check_gibbs(
    seed: u64,
    cases: usize,
    samples: usize,
    thinning: usize,
    tolerance: f64,
) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for c in 0..cases {
        let (len, k) = [(6, 4), (4, 3), (7, 3), (12, 2), (5, 5)][c % 5];
        let vocab = 3;
        let layout = Layout::chain(vocab, k);
        let lambda = random_params(&mut rng, layout, 1.0);
        let inst = random_sequence(&mut rng, len, vocab, None);
        let data = vec![Example::Sequence(inst.clone())];
        let f = ConstraintFeature::new(0, Scope::PerInstance, ConstraintKind::RepetitionCount);
        let spec = ConstraintSpec::new(f, TargetMode::Count, 0.0, PenaltyFamily::affine())?;
        let set = scale_targets(&[spec], &data)?;
        if set.is_empty() {
            continue;
        }
        let m = -rng.gen_range(0.0..1.5);
        let mu = AuxParams::from_values(&set, vec![m])?;
        let sampler = SamplerConfig {
            burn_in: 200,
            sweeps: samples * thinning,
            thinning,
            seed: seed.wrapping_add(c as u64),
        };
        let est = gibbs_expectations(&lambda, &mu, &set, Some(0), &inst, &sampler)?;
        let pot = Potentials::from_model(&lambda, InstanceRef::Sequence(&inst))?;
        let rep = |y: &[usize]| repetition_count(y) as f64;
        let exact = enumerate_expectation(len, k, |y| pot.assignment_score(y) + m * rep(y), rep)?;
        worst = worst.max((est.constraint_values[0] - exact).abs());
    }
    Ok(CheckOutcome {
        name: "Gibbs repetition-count expectation",
        cases,
        worst,
        tolerance,
    })
}

/// The suite behind `oracle-check`, at the sizes used by the acceptance
/// criteria (smaller for the training-based checks).
pub fn oracle_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        check_chain_inference(seed, 200)?,
        check_supervised_gradient(seed.wrapping_add(1), 50)?,
        check_m_gradient(seed.wrapping_add(2), 50)?,
        check_i_gradient(seed.wrapping_add(3), 50)?,
        check_ge_gradient(seed.wrapping_add(4), 50)?,
        check_monotone(seed.wrapping_add(5), 6, 5)?,
        check_kkt(seed.wrapping_add(6), 10)?,
        check_gibbs(seed.wrapping_add(7), 3, 10_000, 1, 0.05)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_small() {
        for o in [
            check_chain_inference(1, 20).unwrap(),
            check_supervised_gradient(2, 6).unwrap(),
            check_m_gradient(3, 6).unwrap(),
            check_i_gradient(4, 6).unwrap(),
            check_ge_gradient(5, 6).unwrap(),
            check_kkt(6, 4).unwrap(),
            check_monotone(7, 2, 3).unwrap(),
        ] {
            assert!(o.passed(), "{o:?}");
        }
    }
}
