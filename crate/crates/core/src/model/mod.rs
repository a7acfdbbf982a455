//! Conditional exponential-family models: a multiclass log-linear classifier
//! and a linear-chain CRF, with exact inference and an enumeration oracle.

pub mod brute;
mod inference;
mod params;
mod potentials;
mod supervised;
mod types;

pub use brute::{brute_force_posterior, brute_force_viterbi};
pub use inference::{
    accumulate_assignment_features, accumulate_expected_features, accumulate_slot_features,
    assignment_features,
    chain_posterior, classify_posterior, decode, expected_model_features, infer, log_partition, model_posterior,
    score_assignment, viterbi, viterbi_decode, Posterior,
};
pub(crate) use inference::{forward_table, log_sum_exp, to_sparse};
pub use params::{Layout, ParamVector, Structure};
pub use potentials::{slot_count, Potentials};
pub use supervised::supervised_loss_and_gradient;
pub use types::{Example, Instance, InstanceRef, LabelSpace, SequenceInstance, SparseFeatures};
