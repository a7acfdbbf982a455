//! Auxiliary constraint features `f'`, targets, and the penalty families.

mod feature;
mod penalty;
mod spec;

pub use feature::{
    evaluate_constraint, expected_constraint, repetition_count, ConstraintFeature, ConstraintKind,
    CustomCount, Scope,
};
pub use penalty::{conjugate_value_and_subgradient, DualBound, PenaltyFamily, PenaltyKind};
pub use spec::{
    scale_targets, ActiveConstraint, AuxParams, ConstraintSet, ConstraintSpec, TargetMode,
};
