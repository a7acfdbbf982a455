//! M-projection: refit `λ` to labeled data and the fixed moments of `q`.

use crate::error::{Error, Result};
use crate::model::{
    accumulate_expected_features, infer, supervised_loss_and_gradient, Example, Layout,
    ParamVector, Potentials,
};
use crate::optim::minimize;

use super::config::TrainConfig;
use super::iproj::report;

/// Negated M-projection objective
/// `Σ_i[log Z_λ(x_i) − λ·f(x_i,y_i)] + (α/2)‖λ‖² + γ Σ_j[log Z_λ(x_j) − λ·E_q[f]]`
/// and its gradient. `q_target` is `Σ_j E_q[f(x_j, y)]` as a dense vector.
pub fn m_objective_and_gradient(
    lambda: &ParamVector,
    q_target: &[f64],
    labeled: &[Example],
    unlabeled: &[Example],
    alpha: f64,
    gamma: f64,
) -> Result<(f64, Vec<f64>)> {
    let layout = lambda.layout();
    if q_target.len() != layout.dim() {
        return Err(Error::Contract(format!(
            "q moments have dimension {}, model has {}",
            q_target.len(),
            layout.dim()
        )));
    }
    let (mut value, mut grad) =
        supervised_loss_and_gradient(lambda, labeled.iter().map(Example::as_ref), alpha)?;
    if gamma == 0.0 {
        return Ok((value, grad));
    }
    for ex in unlabeled {
        let post = infer(&Potentials::from_model(lambda, ex.as_ref())?)?;
        value += gamma * post.log_z();
        accumulate_expected_features(&post, ex.as_ref(), &layout, gamma, &mut grad);
    }
    for ((g, t), w) in grad.iter_mut().zip(q_target).zip(lambda.weights()) {
        value -= gamma * w * t;
        *g -= gamma * t;
    }
    Ok((value, grad))
}

/// Minimizes [`m_objective_and_gradient`] starting from `init`.
pub fn m_projection(
    init: &ParamVector,
    q_target: &[f64],
    labeled: &[Example],
    unlabeled: &[Example],
    cfg: &TrainConfig,
) -> Result<ParamVector> {
    let layout = init.layout();
    let res = minimize(
        |w, g| {
            let params = ParamVector::from_weights(layout, w.to_vec())?;
            let (v, grad) =
                m_objective_and_gradient(&params, q_target, labeled, unlabeled, cfg.alpha, cfg.gamma)?;
            g.copy_from_slice(&grad);
            Ok(v)
        },
        init.weights().to_vec(),
        &[],
        &[],
        &cfg.optim(),
    )?;
    report("M-projection", res.stop, res.iterations, res.grad_norm);
    ParamVector::from_weights(layout, res.x)
}

/// L2-regularized maximum likelihood on labeled data from `λ = 0`.
pub fn supervised_train(layout: Layout, labeled: &[Example], cfg: &TrainConfig) -> Result<ParamVector> {
    let sup = TrainConfig {
        gamma: 0.0,
        ..cfg.clone()
    };
    m_projection(
        &ParamVector::zeros(layout),
        &vec![0.0; layout.dim()],
        labeled,
        &[],
        &sup,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Instance, SparseFeatures};

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn one_instance_optimum() {
        // Both labels carry the feature, so λ_0 = −λ_1 at the optimum and
        // stationarity reads λ_1 = 1 − σ(2λ_1).
        let labeled = vec![Example::Flat(Instance::new(
            SparseFeatures::indicators(&[0]).unwrap(),
            Some(1),
        ))];
        let cfg = TrainConfig::classification();
        let lambda = supervised_train(Layout::flat(1, 2), &labeled, &cfg).unwrap();
        let w = lambda.weights();
        let sigma = |x: f64| 1.0 / (1.0 + (-x).exp());
        let root = bisect(|l| l - (1.0 - sigma(2.0 * l)), 0.0, 1.0);
        assert!((w[0] + w[1]).abs() < 1e-6);
        assert!((w[1] - root).abs() < 1e-6);
    }
}
