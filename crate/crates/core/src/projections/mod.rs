//! Alternating information and moment projections over `(q, λ)`.

pub(crate) mod auxiliary;
mod config;
mod iproj;
mod mproj;
mod objective;
mod train;

pub use auxiliary::{aux_posterior, PreparedAux};
pub use config::{Mode, RateSchedule, TrainConfig, CLASSIFICATION_BETA, SEQUENCE_BETA};
pub use iproj::{i_objective_and_gradient, i_projection, sampled_i_projection};
pub use mproj::{m_objective_and_gradient, m_projection, supervised_train};
pub use objective::{joint_objective, joint_objective_with_q};
pub use train::{ap_train, online_ap_step, online_ap_train, APState, OnlineItem};
pub(crate) use iproj::report as report_stop;
