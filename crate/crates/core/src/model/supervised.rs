use crate::error::{Error, Result};

use super::inference::{
    accumulate_assignment_features, accumulate_expected_features, infer, score_assignment,
};
use super::params::ParamVector;
use super::potentials::Potentials;
use super::types::InstanceRef;

/// L2-regularized log-loss `Σ −log p_λ(y|x) + (α/2)‖λ‖²` and its gradient
/// `Σ (E_p[f] − f(x, y)) + αλ`.
pub fn supervised_loss_and_gradient<'a, I>(
    params: &ParamVector,
    data: I,
    alpha: f64,
) -> Result<(f64, Vec<f64>)>
where
    I: IntoIterator<Item = InstanceRef<'a>>,
{
    if alpha < 0.0 {
        return Err(Error::Config(format!("alpha must be non-negative, got {alpha}")));
    }
    let layout = params.layout();
    let mut grad: Vec<f64> = params.weights().iter().map(|w| alpha * w).collect();
    let mut loss = 0.5 * alpha * params.squared_norm();
    for inst in data {
        let gold = inst
            .gold()
            .ok_or_else(|| Error::Contract("supervised loss needs labeled instances".into()))?;
        let pot = Potentials::from_model(params, inst)?;
        let post = infer(&pot)?;
        loss += post.log_z() - score_assignment(params, inst, &gold);
        accumulate_expected_features(&post, inst, &layout, 1.0, &mut grad);
        accumulate_assignment_features(inst, &gold, &layout, -1.0, &mut grad);
    }
    Ok((loss, grad))
}
