use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{InstanceRef, Posterior};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// One constraint copy (and dual variable) per unlabeled instance.
    PerInstance,
    /// A single constraint on the sum over the unlabeled set.
    PerDataset,
}

type CustomFn = dyn Fn(InstanceRef<'_>, &[usize]) -> f64 + Send + Sync;

/// A user-supplied constraint function of `(x, y)`. Over sequences it is
/// treated as global (not edge-factored) and routed through the sampler.
#[derive(Clone)]
pub struct CustomCount {
    name: String,
    eval: Arc<CustomFn>,
}

impl CustomCount {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(InstanceRef<'_>, &[usize]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CustomCount {
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, inst: InstanceRef<'_>, y: &[usize]) -> f64 {
        (self.eval)(inst, y)
    }
}

impl fmt::Debug for CustomCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomCount").field("name", &self.name).finish()
    }
}

#[derive(Debug, Clone)]
pub enum ConstraintKind {
    /// `I(trigger ∈ x ∧ y = label)` on a flat instance. With `normalize`, the
    /// feature is divided by the number of instances containing the trigger.
    WordLabel {
        trigger: usize,
        label: usize,
        normalize: bool,
    },
    /// `Σ_t I(trigger ∈ x_t ∧ y_t = label)`.
    TokenLabel { trigger: usize, label: usize },
    /// `Σ_{t≥1} I(y_{t−1} = y_t)`.
    SelfTransition,
    /// `Σ_{t≥1} I(y_{t−1} ≠ y_t ∧ [predicate ∈ x_{t−1}] = holds)`: label
    /// changes right after a token where the predicate holds (or does not).
    TransitionOnPredicate { predicate: usize, holds: bool },
    /// `I(y_1 = label)`.
    StartLabel { label: usize },
    /// Number of maximal constant-label segments minus number of distinct
    /// labels; zero iff no label re-enters after leaving.
    RepetitionCount,
    CustomCount(CustomCount),
}

impl ConstraintKind {
    pub fn name(&self) -> &'static str {
        match self {
            ConstraintKind::WordLabel { .. } => "word-label",
            ConstraintKind::TokenLabel { .. } => "token-label",
            ConstraintKind::SelfTransition => "self-transition",
            ConstraintKind::TransitionOnPredicate { .. } => "transition-on-predicate",
            ConstraintKind::StartLabel { .. } => "start-label",
            ConstraintKind::RepetitionCount => "repetition-count",
            ConstraintKind::CustomCount(_) => "custom-count",
        }
    }

    /// Labels referenced by the kind, if any.
    pub fn label(&self) -> Option<usize> {
        match self {
            ConstraintKind::WordLabel { label, .. }
            | ConstraintKind::TokenLabel { label, .. }
            | ConstraintKind::StartLabel { label } => Some(*label),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConstraintFeature {
    pub id: usize,
    pub scope: Scope,
    pub kind: ConstraintKind,
}

impl ConstraintFeature {
    pub fn new(id: usize, scope: Scope, kind: ConstraintKind) -> Self {
        ConstraintFeature { id, scope, kind }
    }

    fn describe(&self) -> String {
        format!("#{} ({})", self.id, self.kind.name())
    }

    fn incompatible(&self, what: &str) -> Error {
        Error::Contract(format!(
            "constraint {} cannot be evaluated on a {what} instance",
            self.describe()
        ))
    }

    /// True when the feature cannot be written as node/edge terms on `inst`.
    pub fn is_global_on(&self, inst: InstanceRef<'_>) -> bool {
        inst.is_sequence()
            && matches!(
                self.kind,
                ConstraintKind::RepetitionCount | ConstraintKind::CustomCount(_)
            )
    }

    /// Applicable units used for proportion targets: trigger documents, trigger
    /// tokens, transitions, predicate edges, or one per instance.
    pub fn units(&self, inst: InstanceRef<'_>) -> Result<usize> {
        Ok(match (&self.kind, inst) {
            (ConstraintKind::WordLabel { trigger, .. }, InstanceRef::Flat(i)) => {
                usize::from(i.features.contains(*trigger))
            }
            (ConstraintKind::TokenLabel { trigger, .. }, InstanceRef::Sequence(s)) => {
                s.positions.iter().filter(|p| p.contains(*trigger)).count()
            }
            (ConstraintKind::SelfTransition, InstanceRef::Sequence(s)) => s.len() - 1,
            (ConstraintKind::TransitionOnPredicate { predicate, holds }, InstanceRef::Sequence(s)) => {
                s.positions[..s.len() - 1]
                    .iter()
                    .filter(|p| p.contains(*predicate) == *holds)
                    .count()
            }
            (ConstraintKind::StartLabel { .. }, InstanceRef::Sequence(_))
            | (ConstraintKind::RepetitionCount, InstanceRef::Sequence(_))
            | (ConstraintKind::CustomCount(_), _) => 1,
            (_, InstanceRef::Flat(_)) => return Err(self.incompatible("flat")),
            (_, InstanceRef::Sequence(_)) => return Err(self.incompatible("sequence")),
        })
    }

    /// `f'(x, y)` for a complete assignment.
    pub fn evaluate(&self, inst: InstanceRef<'_>, y: &[usize]) -> Result<f64> {
        if y.len() != inst.len() {
            return Err(Error::Contract(format!(
                "assignment has length {}, instance has {}",
                y.len(),
                inst.len()
            )));
        }
        let count = |n: usize| n as f64;
        Ok(match (&self.kind, inst) {
            (ConstraintKind::WordLabel { trigger, label, .. }, InstanceRef::Flat(i)) => {
                if i.features.contains(*trigger) && y[0] == *label {
                    1.0
                } else {
                    0.0
                }
            }
            (ConstraintKind::TokenLabel { trigger, label }, InstanceRef::Sequence(s)) => count(
                (0..s.len())
                    .filter(|&t| y[t] == *label && s.positions[t].contains(*trigger))
                    .count(),
            ),
            (ConstraintKind::SelfTransition, InstanceRef::Sequence(_)) => {
                count(y.windows(2).filter(|w| w[0] == w[1]).count())
            }
            (ConstraintKind::TransitionOnPredicate { predicate, holds }, InstanceRef::Sequence(s)) => {
                count(
                    (1..s.len())
                        .filter(|&t| {
                            y[t - 1] != y[t] && s.positions[t - 1].contains(*predicate) == *holds
                        })
                        .count(),
                )
            }
            (ConstraintKind::StartLabel { label }, InstanceRef::Sequence(_)) => {
                if y[0] == *label {
                    1.0
                } else {
                    0.0
                }
            }
            (ConstraintKind::RepetitionCount, InstanceRef::Sequence(_)) => {
                count(repetition_count(y))
            }
            (ConstraintKind::CustomCount(c), _) => c.eval(inst, y),
            (_, InstanceRef::Flat(_)) => return Err(self.incompatible("flat")),
            (_, InstanceRef::Sequence(_)) => return Err(self.incompatible("sequence")),
        })
    }

    /// The feature as `(slot, value)` pairs over the potential layout of `inst`
    /// with `k` labels, or `None` when it is global on this instance.
    pub fn factor_terms(&self, inst: InstanceRef<'_>, k: usize) -> Result<Option<Vec<(usize, f64)>>> {
        if self.is_global_on(inst) {
            return Ok(None);
        }
        let len = inst.len();
        let node = |t: usize, y: usize| t * k + y;
        let edge = |t: usize, a: usize, b: usize| len * k + (t * k + a) * k + b;
        let check_label = |label: usize| {
            if label >= k {
                Err(Error::Index {
                    what: "constraint label",
                    index: label,
                    limit: k,
                })
            } else {
                Ok(())
            }
        };
        let terms = match (&self.kind, inst) {
            (_, InstanceRef::Flat(_)) => {
                // Flat outputs are enumerable: one slot per label.
                let mut terms = Vec::new();
                for y in 0..k {
                    let v = self.evaluate(inst, &[y])?;
                    if v != 0.0 {
                        terms.push((y, v));
                    }
                }
                terms
            }
            (ConstraintKind::TokenLabel { trigger, label }, InstanceRef::Sequence(s)) => {
                check_label(*label)?;
                (0..len)
                    .filter(|&t| s.positions[t].contains(*trigger))
                    .map(|t| (node(t, *label), 1.0))
                    .collect()
            }
            (ConstraintKind::SelfTransition, InstanceRef::Sequence(_)) => (0..len.saturating_sub(1))
                .flat_map(|t| (0..k).map(move |a| (edge(t, a, a), 1.0)))
                .collect(),
            (ConstraintKind::TransitionOnPredicate { predicate, holds }, InstanceRef::Sequence(s)) => {
                let mut terms = Vec::new();
                for t in 0..len.saturating_sub(1) {
                    if s.positions[t].contains(*predicate) == *holds {
                        for a in 0..k {
                            for b in (0..k).filter(|&b| b != a) {
                                terms.push((edge(t, a, b), 1.0));
                            }
                        }
                    }
                }
                terms
            }
            (ConstraintKind::StartLabel { label }, InstanceRef::Sequence(_)) => {
                check_label(*label)?;
                vec![(node(0, *label), 1.0)]
            }
            (_, InstanceRef::Sequence(_)) => return Err(self.incompatible("sequence")),
        };
        Ok(Some(terms))
    }
}

/// Segments minus distinct labels of an assignment.
pub fn repetition_count(y: &[usize]) -> usize {
    if y.is_empty() {
        return 0;
    }
    let segments = 1 + y.windows(2).filter(|w| w[0] != w[1]).count();
    let mut seen: Vec<usize> = y.to_vec();
    seen.sort_unstable();
    seen.dedup();
    segments - seen.len()
}

/// `E_post[f'(x, y)]` from exact marginals. Global features are refused.
pub fn expected_constraint(
    feature: &ConstraintFeature,
    post: &Posterior,
    inst: InstanceRef<'_>,
) -> Result<f64> {
    if post.len() != inst.len() {
        return Err(Error::Contract("posterior does not match instance length".into()));
    }
    match feature.factor_terms(inst, post.num_labels())? {
        Some(terms) => Ok(post.expect_terms(&terms)),
        None => Err(Error::Routing(format!("#{} ({})", feature.id, feature.kind.name()))),
    }
}

/// `f'(x, y)` for a complete assignment.
pub fn evaluate_constraint(
    feature: &ConstraintFeature,
    inst: InstanceRef<'_>,
    y: &[usize],
) -> Result<f64> {
    feature.evaluate(inst, y)
}
