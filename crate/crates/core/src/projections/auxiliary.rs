//! The auxiliary distribution `q ∝ exp(λ·f + Σ μ_a·s_a·f'_a)` of one instance,
//! split into a factored part (chain potentials) and the global features that
//! need sampling.

use crate::constraints::{AuxParams, ConstraintSet};
use crate::error::{Error, Result};
use crate::model::{infer, InstanceRef, ParamVector, Posterior, Potentials};

/// Per-instance pieces of `q` that do not depend on `μ`.
#[derive(Debug, Clone)]
pub struct PreparedAux<'a> {
    inst: InstanceRef<'a>,
    base: Potentials,
    /// Active constraint index and its terms with the target scale folded in.
    factored: Vec<(usize, Vec<(usize, f64)>)>,
    /// Active constraints that are global on this instance.
    global: Vec<usize>,
    scales: Vec<f64>,
}

impl<'a> PreparedAux<'a> {
    /// `j` is the instance's index in the scaled unlabeled set, or `None` for
    /// an instance outside it (per-dataset constraints only).
    pub fn new(
        lambda: &ParamVector,
        set: &ConstraintSet,
        j: Option<usize>,
        inst: InstanceRef<'a>,
    ) -> Result<Self> {
        let base = Potentials::from_model(lambda, inst)?;
        let k = lambda.num_labels();
        let applicable: Vec<usize> = match j {
            Some(j) if j >= set.num_instances() => {
                return Err(Error::Index {
                    what: "unlabeled instance",
                    index: j,
                    limit: set.num_instances(),
                })
            }
            Some(j) => set.applicable_ref(j).to_vec(),
            None => set.applicable(None),
        };
        let mut factored = Vec::new();
        let mut global = Vec::new();
        for a in applicable {
            let scale = set.active()[a].scale;
            match set.feature(a).factor_terms(inst, k)? {
                Some(mut terms) => {
                    for t in &mut terms {
                        t.1 *= scale;
                    }
                    factored.push((a, terms));
                }
                None => global.push(a),
            }
        }
        let scales = set.active().iter().map(|c| c.scale).collect();
        Ok(PreparedAux {
            inst,
            base,
            factored,
            global,
            scales,
        })
    }

    pub fn instance(&self) -> InstanceRef<'a> {
        self.inst
    }

    /// Model potentials `λ·f`.
    pub fn base(&self) -> &Potentials {
        &self.base
    }

    pub fn factored(&self) -> &[(usize, Vec<(usize, f64)>)] {
        &self.factored
    }

    pub fn global(&self) -> &[usize] {
        &self.global
    }

    pub fn has_global(&self) -> bool {
        !self.global.is_empty()
    }

    /// All active constraints touching this instance, factored first.
    pub fn applicable(&self) -> impl Iterator<Item = usize> + '_ {
        self.factored.iter().map(|(a, _)| *a).chain(self.global.iter().copied())
    }

    /// Potentials of the factored part of `q` at duals `mu`.
    pub fn potentials(&self, mu: &[f64]) -> Potentials {
        let mut pot = self.base.clone();
        for (a, terms) in &self.factored {
            if mu[*a] != 0.0 {
                pot.add_terms(terms, mu[*a]);
            }
        }
        pot
    }

    /// Weights `μ_a·s_a` of the global features, paired with their index.
    pub fn global_weights(&self, mu: &[f64]) -> Vec<(usize, f64)> {
        self.global.iter().map(|&a| (a, mu[a] * self.scales[a])).collect()
    }

    /// Exact posterior of `q`; refused when a global feature is present.
    pub fn posterior(&self, mu: &[f64], set: &ConstraintSet) -> Result<Posterior> {
        if let Some(&a) = self.global.first() {
            let f = set.feature(a);
            return Err(Error::Routing(format!("#{} ({})", f.id, f.kind.name())));
        }
        infer(&self.potentials(mu))
    }
}

/// Exact posterior of the auxiliary distribution `q_{λ,μ}` of one instance.
/// Equals the model posterior when `μ = 0`.
pub fn aux_posterior(
    lambda: &ParamVector,
    mu: &AuxParams,
    set: &ConstraintSet,
    j: Option<usize>,
    inst: InstanceRef<'_>,
) -> Result<Posterior> {
    check_mu(mu.values(), set)?;
    PreparedAux::new(lambda, set, j, inst)?.posterior(mu.values(), set)
}

pub(crate) fn check_mu(mu: &[f64], set: &ConstraintSet) -> Result<()> {
    if mu.len() != set.len() {
        return Err(Error::Contract(format!(
            "{} dual values for {} active constraints",
            mu.len(),
            set.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{
        scale_targets, ConstraintFeature, ConstraintKind, ConstraintSpec, PenaltyFamily, Scope,
        TargetMode,
    };
    use crate::model::{model_posterior, Example, Instance, Layout, SparseFeatures};

    #[test]
    fn sigmoid_closed_form() {
        let inst = Instance::new(SparseFeatures::indicators(&[0]).unwrap(), None);
        let data = vec![Example::Flat(inst)];
        let feature = ConstraintFeature::new(
            0,
            Scope::PerDataset,
            ConstraintKind::WordLabel {
                trigger: 0,
                label: 1,
                normalize: false,
            },
        );
        let spec = ConstraintSpec::new(
            feature,
            TargetMode::Proportion,
            0.9,
            PenaltyFamily::l2(1.0).unwrap(),
        )
        .unwrap();
        let set = scale_targets(&[spec], &data).unwrap();
        let lambda = ParamVector::zeros(Layout::flat(1, 2));
        let mu = AuxParams::from_values(&set, vec![9f64.ln()]).unwrap();
        let q = aux_posterior(&lambda, &mu, &set, Some(0), data[0].as_ref()).unwrap();
        assert!((q.probs()[1] - 0.9).abs() < 1e-12);

        let zero = AuxParams::zeros(&set);
        let q = aux_posterior(&lambda, &zero, &set, Some(0), data[0].as_ref()).unwrap();
        assert_eq!(q, model_posterior(&lambda, data[0].as_ref()).unwrap());
    }
}
