//! Generalized-expectation training of the flat classifier: log-loss plus
//! squared-difference penalties on model expectations of constraint features.

use crate::constraints::{ConstraintFeature, ConstraintKind, ConstraintSet, PenaltyKind, Scope};
use crate::error::{Error, Result};
use crate::model::{
    infer, supervised_loss_and_gradient, Example, Instance, InstanceRef, Layout, ParamVector,
    Posterior, Potentials,
};
use crate::optim::minimize;
use crate::projections::TrainConfig;

#[derive(Debug, Clone)]
pub struct GETerm {
    pub feature: ConstraintFeature,
    /// Target for `Σ_j E_p[scale·f']` over the unlabeled set.
    pub target: f64,
    pub weight: f64,
    /// Multiplier on the raw feature (`1/N` for count-normalized features).
    pub scale: f64,
}

impl GETerm {
    pub fn new(feature: ConstraintFeature, target: f64, weight: f64) -> Result<Self> {
        match feature.kind {
            ConstraintKind::WordLabel { .. } | ConstraintKind::CustomCount(_) => {}
            _ => {
                return Err(Error::Contract(format!(
                    "GE terms take flat features, got {}",
                    feature.kind.name()
                )))
            }
        }
        if !(weight >= 0.0 && weight.is_finite() && target.is_finite()) {
            return Err(Error::Config(format!(
                "GE term needs finite target and weight >= 0, got {target}, {weight}"
            )));
        }
        Ok(GETerm {
            feature,
            target,
            weight,
            scale: 1.0,
        })
    }
}

/// One GE term per per-dataset constraint of a scaled set, sharing its
/// target and feature scale.
pub fn ge_terms_from_set(set: &ConstraintSet, weight: f64) -> Result<Vec<GETerm>> {
    let mut terms = Vec::new();
    for (a, c) in set.active().iter().enumerate() {
        if c.instance.is_some() || set.feature(a).scope == Scope::PerInstance {
            continue;
        }
        let mut term = GETerm::new(set.feature(a).clone(), c.target, weight)?;
        term.scale = c.scale;
        terms.push(term);
    }
    Ok(terms)
}

/// GE terms scoring the same squared deviation as the l2 constraints of a
/// scaled set: weight `γ/(2β)`. Box and affine constraints have no squared
/// form and are skipped.
pub fn ge_terms_matching_l2(set: &ConstraintSet, gamma: f64) -> Result<Vec<GETerm>> {
    let mut terms = Vec::new();
    for (a, c) in set.active().iter().enumerate() {
        if c.instance.is_some() || c.penalty.kind != PenaltyKind::L2 {
            continue;
        }
        let mut term = GETerm::new(set.feature(a).clone(), c.target, gamma / (2.0 * c.penalty.beta))?;
        term.scale = c.scale;
        terms.push(term);
    }
    Ok(terms)
}

fn flat(ex: &Example) -> Result<&Instance> {
    match ex {
        Example::Flat(i) => Ok(i),
        Example::Sequence(_) => Err(Error::Contract(
            "GE training covers flat classification only".into(),
        )),
    }
}

/// Per-instance posterior and, for every term that is non-zero on the
/// instance, the `K` values of its scaled feature.
struct Cached {
    post: Posterior,
    values: Vec<(usize, Vec<f64>)>,
}

fn cache(lambda: &ParamVector, terms: &[GETerm], unlabeled: &[Example]) -> Result<Vec<Cached>> {
    let k = lambda.num_labels();
    unlabeled
        .iter()
        .map(|ex| {
            let inst = InstanceRef::Flat(flat(ex)?);
            let post = infer(&Potentials::from_model(lambda, inst)?)?;
            let mut values = Vec::new();
            for (a, t) in terms.iter().enumerate() {
                let v = (0..k)
                    .map(|y| Ok(t.scale * t.feature.evaluate(inst, &[y])?))
                    .collect::<Result<Vec<f64>>>()?;
                if v.iter().any(|x| *x != 0.0) {
                    values.push((a, v));
                }
            }
            Ok(Cached { post, values })
        })
        .collect()
}

/// `F_a = Σ_j E_p[scale·f'_a]` for every term.
fn term_expectations(cached: &[Cached], n_terms: usize) -> Vec<f64> {
    let mut f = vec![0.0; n_terms];
    for c in cached {
        for (a, vals) in &c.values {
            f[*a] += vals.iter().zip(c.post.probs()).map(|(v, p)| v * p).sum::<f64>();
        }
    }
    f
}

fn penalty_value(terms: &[GETerm], f: &[f64]) -> f64 {
    terms
        .iter()
        .zip(f)
        .map(|(t, fa)| t.weight * (t.target - fa).powi(2))
        .sum()
}

/// `Σ_i −log p(y_i|x_i) + (α/2)‖λ‖² + Σ_a w_a (u_a − F_a)²`.
pub fn ge_objective(
    lambda: &ParamVector,
    terms: &[GETerm],
    labeled: &[Example],
    unlabeled: &[Example],
    alpha: f64,
) -> Result<f64> {
    let (value, _) =
        supervised_loss_and_gradient(lambda, labeled.iter().map(Example::as_ref), alpha)?;
    let f = term_expectations(&cache(lambda, terms, unlabeled)?, terms.len());
    Ok(value + penalty_value(terms, &f))
}

/// Penalty value and gradient from one pass over the unlabeled set.
fn penalty_value_and_gradient(
    lambda: &ParamVector,
    terms: &[GETerm],
    unlabeled: &[Example],
) -> Result<(f64, Vec<f64>)> {
    let cached = cache(lambda, terms, unlabeled)?;
    let f = term_expectations(&cached, terms.len());
    let layout = lambda.layout();
    let k = layout.num_labels;
    let mut grad = vec![0.0; layout.dim()];
    let mut d = vec![0.0; k];
    for (c, ex) in cached.iter().zip(unlabeled) {
        let inst = flat(ex)?;
        let probs = c.post.probs();
        // Per-label covariance weights Σ_a coef_a · p(y)(f'_a(y) − E f'_a).
        d.iter_mut().for_each(|v| *v = 0.0);
        for (a, vals) in &c.values {
            let coef = -2.0 * terms[*a].weight * (terms[*a].target - f[*a]);
            if coef == 0.0 {
                continue;
            }
            let mean: f64 = vals.iter().zip(probs).map(|(v, p)| v * p).sum();
            for y in 0..k {
                d[y] += coef * probs[y] * (vals[y] - mean);
            }
        }
        for &(feat, x) in inst.features.entries() {
            let base = layout.node_index(feat, 0);
            for y in 0..k {
                grad[base + y] += x * d[y];
            }
        }
    }
    Ok((penalty_value(terms, &f), grad))
}

/// Gradient of the GE penalty part, oriented for minimization:
/// `−2 w_a (u_a − F_a) Σ_j Cov_p(scale·f'_a, f_i)`.
pub fn ge_gradient(lambda: &ParamVector, terms: &[GETerm], unlabeled: &[Example]) -> Result<Vec<f64>> {
    Ok(penalty_value_and_gradient(lambda, terms, unlabeled)?.1)
}

/// Minimizes [`ge_objective`] from `λ = 0`.
pub fn ge_train(
    layout: Layout,
    terms: &[GETerm],
    labeled: &[Example],
    unlabeled: &[Example],
    cfg: &TrainConfig,
) -> Result<ParamVector> {
    cfg.validate()?;
    if layout.is_chain() {
        return Err(Error::Contract("GE training covers flat classification only".into()));
    }
    let res = minimize(
        |w, g| {
            let params = ParamVector::from_weights(layout, w.to_vec())?;
            let (sup, sg) =
                supervised_loss_and_gradient(&params, labeled.iter().map(Example::as_ref), cfg.alpha)?;
            let (ge, gg) = penalty_value_and_gradient(&params, terms, unlabeled)?;
            for ((o, a), b) in g.iter_mut().zip(&sg).zip(&gg) {
                *o = a + b;
            }
            Ok(sup + ge)
        },
        vec![0.0; layout.dim()],
        &[],
        &[],
        &cfg.optim(),
    )?;
    crate::projections::report_stop("GE", res.stop, res.iterations, res.grad_norm);
    ParamVector::from_weights(layout, res.x)
}

/// Input feature ids that trigger some word-label term.
pub fn trigger_features(terms: &[GETerm]) -> Vec<usize> {
    let mut ids: Vec<usize> = terms
        .iter()
        .filter_map(|t| match t.feature.kind {
            ConstraintKind::WordLabel { trigger, .. } => Some(trigger),
            _ => None,
        })
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Copies of `data` keeping only the given input features.
pub fn restrict_features(data: &[Example], keep: &[usize]) -> Vec<Example> {
    data.iter()
        .map(|ex| match ex {
            Example::Flat(i) => Example::Flat(Instance::new(
                i.features.retain(|f| keep.binary_search(&f).is_ok()),
                i.label,
            )),
            Example::Sequence(s) => {
                let mut s = s.clone();
                for p in &mut s.positions {
                    *p = p.retain(|f| keep.binary_search(&f).is_ok());
                }
                Example::Sequence(s)
            }
        })
        .collect()
}

/// GE with every non-trigger input feature removed; the returned model can
/// score unrestricted inputs because the removed features keep zero weight.
pub fn ge_base_train(
    layout: Layout,
    terms: &[GETerm],
    labeled: &[Example],
    unlabeled: &[Example],
    cfg: &TrainConfig,
) -> Result<ParamVector> {
    let keep = trigger_features(terms);
    ge_train(
        layout,
        terms,
        &restrict_features(labeled, &keep),
        &restrict_features(unlabeled, &keep),
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SparseFeatures;

    fn term(target: f64) -> GETerm {
        let f = ConstraintFeature::new(
            0,
            Scope::PerDataset,
            ConstraintKind::WordLabel {
                trigger: 0,
                label: 1,
                normalize: false,
            },
        );
        GETerm::new(f, target, 1.0).unwrap()
    }

    fn one() -> Vec<Example> {
        vec![Example::Flat(Instance::new(SparseFeatures::indicators(&[0]).unwrap(), None))]
    }

    #[test]
    fn satisfied_term_is_flat() {
        let lambda = ParamVector::zeros(Layout::flat(1, 2));
        let terms = [term(0.5)];
        assert_eq!(ge_objective(&lambda, &terms, &[], &one(), 0.0).unwrap(), 0.0);
        assert!(ge_gradient(&lambda, &terms, &one()).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn bernoulli_covariance() {
        // With f_i = f' = 1(y=1): ∂F/∂λ_{0,1} = p(1)(1 − p(1)).
        let mut lambda = ParamVector::zeros(Layout::flat(1, 2));
        lambda.weights_mut()[1] = 0.7;
        let terms = [term(0.0)];
        let p1 = 1.0 / (1.0 + (-0.7f64).exp());
        let g = ge_gradient(&lambda, &terms, &one()).unwrap();
        // coefficient −2(u − F) = 2·p1
        assert!((g[1] - 2.0 * p1 * p1 * (1.0 - p1)).abs() < 1e-12);
    }

    #[test]
    fn penalty_forces_expectation() {
        let cfg = TrainConfig {
            alpha: 1e-4,
            ..TrainConfig::classification()
        };
        let lambda = ge_train(Layout::flat(1, 2), &[term(0.9)], &[], &one(), &cfg).unwrap();
        let p = infer(&Potentials::from_model(&lambda, one()[0].as_ref()).unwrap()).unwrap();
        assert!((p.probs()[1] - 0.9).abs() < 1e-2);
    }
}
