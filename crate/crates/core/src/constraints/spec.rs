use log::warn;

use crate::error::{Error, Result};
use crate::model::{Example, InstanceRef};

use super::feature::{ConstraintFeature, ConstraintKind, Scope};
use super::penalty::{DualBound, PenaltyFamily, PenaltyKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetMode {
    /// Fraction of the applicable units (trigger documents, trigger tokens,
    /// transitions, ...); scaled to a count on the unlabeled set.
    Proportion,
    /// An expected count used as-is.
    Count,
}

#[derive(Debug, Clone)]
pub struct ConstraintSpec {
    pub feature: ConstraintFeature,
    pub target_mode: TargetMode,
    pub target: f64,
    pub penalty: PenaltyFamily,
}

impl ConstraintSpec {
    pub fn new(
        feature: ConstraintFeature,
        target_mode: TargetMode,
        target: f64,
        penalty: PenaltyFamily,
    ) -> Result<Self> {
        if !target.is_finite() {
            return Err(Error::Config(format!("constraint #{} has non-finite target", feature.id)));
        }
        if target_mode == TargetMode::Proportion && !(0.0..=1.0).contains(&target) {
            return Err(Error::Config(format!(
                "constraint #{}: proportion target {target} outside [0, 1]",
                feature.id
            )));
        }
        Ok(ConstraintSpec {
            feature,
            target_mode,
            target,
            penalty,
        })
    }
}

/// A constraint after target scaling: one per per-dataset spec, one per
/// (spec, instance) pair for per-instance specs.
#[derive(Debug, Clone)]
pub struct ActiveConstraint {
    pub spec: usize,
    /// Index into the unlabeled set for per-instance constraints.
    pub instance: Option<usize>,
    pub target: f64,
    /// Penalty with `β` expressed in the same units as `target`.
    pub penalty: PenaltyFamily,
    /// Multiplier applied to the raw feature (`1/N` for count-normalized
    /// word-label features, otherwise 1).
    pub scale: f64,
}

/// Constraint specs scaled against one unlabeled set.
#[derive(Debug, Clone, Default)]
pub struct ConstraintSet {
    specs: Vec<ConstraintSpec>,
    active: Vec<ActiveConstraint>,
    by_instance: Vec<Vec<usize>>,
    deactivated: Vec<(usize, String)>,
}

impl ConstraintSet {
    pub fn empty(num_unlabeled: usize) -> Self {
        ConstraintSet {
            by_instance: vec![Vec::new(); num_unlabeled],
            ..Default::default()
        }
    }

    pub fn specs(&self) -> &[ConstraintSpec] {
        &self.specs
    }

    pub fn active(&self) -> &[ActiveConstraint] {
        &self.active
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn num_instances(&self) -> usize {
        self.by_instance.len()
    }

    /// Specs dropped during scaling, with the reason.
    pub fn deactivated(&self) -> &[(usize, String)] {
        &self.deactivated
    }

    pub fn feature(&self, active: usize) -> &ConstraintFeature {
        &self.specs[self.active[active].spec].feature
    }

    /// Active constraints touching unlabeled instance `j` (all per-dataset
    /// constraints plus `j`'s own per-instance ones). `None` means an instance
    /// outside the scaled set, which only sees per-dataset constraints.
    pub fn applicable(&self, j: Option<usize>) -> Vec<usize> {
        match j {
            Some(j) => self.by_instance[j].clone(),
            None => (0..self.active.len())
                .filter(|&i| self.active[i].instance.is_none())
                .collect(),
        }
    }

    pub(crate) fn applicable_ref(&self, j: usize) -> &[usize] {
        &self.by_instance[j]
    }

    /// Scaled feature value `scale · f'(x, y)` of an active constraint.
    pub fn evaluate(&self, active: usize, inst: InstanceRef<'_>, y: &[usize]) -> Result<f64> {
        Ok(self.active[active].scale * self.feature(active).evaluate(inst, y)?)
    }

    pub fn bounds(&self) -> Vec<DualBound> {
        self.active.iter().map(|a| a.penalty.bound()).collect()
    }

    /// Number of per-dataset constraints; online updates spread their
    /// targets uniformly over the unlabeled instances.
    pub fn per_dataset_count(&self) -> usize {
        self.active.iter().filter(|a| a.instance.is_none()).count()
    }
}

/// Scales proportion targets to counts over `unlabeled` and expands
/// per-instance specs into one constraint per instance.
///
/// A spec with no applicable units (trigger never seen, no transitions, ...)
/// is deactivated with a warning.
pub fn scale_targets(specs: &[ConstraintSpec], unlabeled: &[Example]) -> Result<ConstraintSet> {
    let mut set = ConstraintSet::empty(unlabeled.len());
    set.specs = specs.to_vec();
    for (s, spec) in specs.iter().enumerate() {
        let units: Vec<usize> = unlabeled
            .iter()
            .map(|ex| spec.feature.units(ex.as_ref()))
            .collect::<Result<_>>()?;
        let scale_for = |n: usize| -> f64 {
            match spec.feature.kind {
                ConstraintKind::WordLabel { normalize: true, .. } if n > 0 => 1.0 / n as f64,
                _ => 1.0,
            }
        };
        let make = |n: usize, instance: Option<usize>| -> Result<ActiveConstraint> {
            let scale = scale_for(n);
            let extent = match spec.target_mode {
                TargetMode::Proportion => n as f64 * scale,
                TargetMode::Count => scale,
            };
            let penalty = match spec.penalty.kind {
                PenaltyKind::L1Box => PenaltyFamily::l1_box(spec.penalty.beta * extent)?,
                _ => spec.penalty,
            };
            Ok(ActiveConstraint {
                spec: s,
                instance,
                target: spec.target * extent,
                penalty,
                scale,
            })
        };
        match spec.feature.scope {
            Scope::PerDataset => {
                let n: usize = units.iter().sum();
                if n == 0 {
                    let reason = format!(
                        "{} constraint #{} has no applicable units in the unlabeled data",
                        spec.feature.kind.name(),
                        spec.feature.id
                    );
                    warn!("{reason}; deactivated");
                    set.deactivated.push((s, reason));
                    continue;
                }
                let idx = set.active.len();
                set.active.push(make(n, None)?);
                for list in &mut set.by_instance {
                    list.push(idx);
                }
            }
            Scope::PerInstance => {
                let mut any = false;
                for (j, &n) in units.iter().enumerate() {
                    if n == 0 {
                        continue;
                    }
                    any = true;
                    let idx = set.active.len();
                    set.active.push(make(n, Some(j))?);
                    set.by_instance[j].push(idx);
                }
                if !any {
                    let reason = format!(
                        "per-instance {} constraint #{} applies to no unlabeled instance",
                        spec.feature.kind.name(),
                        spec.feature.id
                    );
                    warn!("{reason}; deactivated");
                    set.deactivated.push((s, reason));
                }
            }
        }
    }
    Ok(set)
}

/// Dual parameters `μ`, one per active constraint. Upper-bound (affine)
/// entries are kept non-positive; [`AuxParams::nu`] reports them as `ν = −μ ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxParams {
    mu: Vec<f64>,
    bounds: Vec<DualBound>,
}

impl AuxParams {
    pub fn zeros(set: &ConstraintSet) -> Self {
        AuxParams {
            mu: vec![0.0; set.len()],
            bounds: set.bounds(),
        }
    }

    pub fn from_values(set: &ConstraintSet, mu: Vec<f64>) -> Result<Self> {
        if mu.len() != set.len() {
            return Err(Error::Contract(format!(
                "{} dual values for {} constraints",
                mu.len(),
                set.len()
            )));
        }
        let bounds = set.bounds();
        for (i, (&m, b)) in mu.iter().zip(&bounds).enumerate() {
            if !m.is_finite() {
                return Err(Error::Numeric(format!("dual {i} is not finite")));
            }
            if *b == DualBound::NonPositive && m > 0.0 {
                return Err(Error::Contract(format!(
                    "dual {i} of an upper-bound constraint must be non-positive"
                )));
            }
        }
        Ok(AuxParams { mu, bounds })
    }

    pub fn values(&self) -> &[f64] {
        &self.mu
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.mu
    }

    pub fn bounds(&self) -> &[DualBound] {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.mu.iter().all(|&m| m == 0.0)
    }

    /// Dual of an upper-bound constraint in its non-negative form.
    pub fn nu(&self, i: usize) -> Option<f64> {
        (self.bounds[i] == DualBound::NonPositive).then(|| -self.mu[i])
    }

    /// Projects every entry onto its feasible region.
    pub(crate) fn project(&mut self) {
        for (m, b) in self.mu.iter_mut().zip(&self.bounds) {
            if *b == DualBound::NonPositive && *m > 0.0 {
                *m = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Instance, SequenceInstance, SparseFeatures};

    fn docs_with_trigger(with: usize, without: usize) -> Vec<Example> {
        let mut v = Vec::new();
        for _ in 0..with {
            v.push(Example::Flat(Instance::new(SparseFeatures::indicators(&[0, 1]).unwrap(), None)));
        }
        for _ in 0..without {
            v.push(Example::Flat(Instance::new(SparseFeatures::indicators(&[1]).unwrap(), None)));
        }
        v
    }

    fn word_label(normalize: bool) -> ConstraintFeature {
        ConstraintFeature::new(
            0,
            Scope::PerDataset,
            ConstraintKind::WordLabel {
                trigger: 0,
                label: 0,
                normalize,
            },
        )
    }

    #[test]
    fn proportion_scales_by_trigger_documents() {
        let spec = ConstraintSpec::new(
            word_label(false),
            TargetMode::Proportion,
            0.95,
            PenaltyFamily::l2(0.01).unwrap(),
        )
        .unwrap();
        let set = scale_targets(&[spec], &docs_with_trigger(40, 7)).unwrap();
        assert_eq!(set.len(), 1);
        assert!((set.active()[0].target - 38.0).abs() < 1e-12);
    }

    #[test]
    fn box_half_width_scales_with_target() {
        let spec = ConstraintSpec::new(
            word_label(false),
            TargetMode::Proportion,
            0.8,
            PenaltyFamily::l1_box(0.1).unwrap(),
        )
        .unwrap();
        let set = scale_targets(&[spec], &docs_with_trigger(10, 3)).unwrap();
        let a = &set.active()[0];
        assert!((a.target - 8.0).abs() < 1e-12);
        assert!((a.penalty.beta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_word_label_keeps_proportion() {
        let spec = ConstraintSpec::new(
            word_label(true),
            TargetMode::Proportion,
            0.9,
            PenaltyFamily::l2(0.01).unwrap(),
        )
        .unwrap();
        let set = scale_targets(&[spec], &docs_with_trigger(20, 1)).unwrap();
        let a = &set.active()[0];
        assert!((a.target - 0.9).abs() < 1e-12);
        assert!((a.scale - 0.05).abs() < 1e-15);
    }

    #[test]
    fn per_instance_count_target() {
        let seqs: Vec<Example> = (0..5)
            .map(|_| {
                Example::Sequence(
                    SequenceInstance::new(vec![SparseFeatures::default(); 4], None).unwrap(),
                )
            })
            .collect();
        let spec = ConstraintSpec::new(
            ConstraintFeature::new(0, Scope::PerInstance, ConstraintKind::RepetitionCount),
            TargetMode::Count,
            1.0,
            PenaltyFamily::affine(),
        )
        .unwrap();
        let set = scale_targets(&[spec], &seqs).unwrap();
        assert_eq!(set.len(), 5);
        for (j, a) in set.active().iter().enumerate() {
            assert_eq!(a.instance, Some(j));
            assert_eq!(a.target, 1.0);
            assert_eq!(set.applicable(Some(j)), vec![j]);
        }
    }

    #[test]
    fn absent_trigger_deactivates() {
        let spec = ConstraintSpec::new(
            word_label(false),
            TargetMode::Proportion,
            0.5,
            PenaltyFamily::l2(1.0).unwrap(),
        )
        .unwrap();
        let set = scale_targets(&[spec], &docs_with_trigger(0, 4)).unwrap();
        assert!(set.is_empty());
        assert_eq!(set.deactivated().len(), 1);
    }

    #[test]
    fn proportion_outside_unit_interval_rejected() {
        assert!(ConstraintSpec::new(
            word_label(false),
            TargetMode::Proportion,
            1.5,
            PenaltyFamily::affine()
        )
        .is_err());
    }
}
