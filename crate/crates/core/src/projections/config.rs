use crate::error::{Error, Result};
use crate::gibbs::SamplerConfig;
use crate::optim::OptimConfig;

/// Box/l2 strength used when a classification constraint file gives no `beta`.
pub const CLASSIFICATION_BETA: f64 = 0.01;
/// Same for sequence tasks.
pub const SEQUENCE_BETA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Batch,
    Online,
}

/// What the online rate index `t` in `η = 1/(t + 1/η0)` counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateSchedule {
    /// One tick per instance seen.
    PerExample,
    /// One tick per pass over the data; constant within a pass.
    PerEpoch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Gaussian prior weight on `λ`.
    pub alpha: f64,
    /// Weight of the unlabeled term; 0 reduces to supervised training.
    pub gamma: f64,
    /// Alternating rounds `T` (batch) or epochs (online).
    pub iterations: usize,
    pub inner_tolerance: f64,
    pub inner_max_iters: usize,
    /// Initial online rate; `η_t = 1/(t + 1/η0)`.
    pub eta0: f64,
    pub schedule: RateSchedule,
    pub mode: Mode,
    pub seed: u64,
    /// Start `λ` from the supervised optimum on the labeled data instead of 0.
    pub warm_start: bool,
    /// Budget for instances whose auxiliary distribution needs sampling.
    pub sampler: SamplerConfig,
    /// Stochastic-gradient steps of the sampled I-projection.
    pub sampled_iters: usize,
    /// Base step of the sampled I-projection, decayed as `1/(k+1)`.
    pub sampled_step: f64,
    /// `(n, m)`: total and labeled instance counts seen by the online
    /// updates. `None` makes online steps fail.
    pub online_sizes: Option<(usize, usize)>,
}

impl TrainConfig {
    pub fn classification() -> Self {
        TrainConfig {
            alpha: 1.0,
            gamma: 1.0,
            iterations: 10,
            inner_tolerance: 1e-6,
            inner_max_iters: 500,
            eta0: 0.1,
            schedule: RateSchedule::PerExample,
            mode: Mode::Batch,
            seed: 0,
            warm_start: false,
            sampler: SamplerConfig::default(),
            sampled_iters: 20,
            sampled_step: 1.0,
            online_sizes: None,
        }
    }

    pub fn sequence() -> Self {
        TrainConfig {
            gamma: 0.1,
            ..Self::classification()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be finite and >= 0, got {}", self.gamma));
        }
        if self.iterations == 0 {
            return bad("T must be at least 1".into());
        }
        if self.inner_tolerance.is_nan() || self.inner_tolerance <= 0.0 {
            return bad(format!("inner tolerance must be > 0, got {}", self.inner_tolerance));
        }
        if self.inner_max_iters == 0 {
            return bad("inner iteration budget must be at least 1".into());
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return bad(format!("eta0 must be > 0, got {}", self.eta0));
        }
        if !(self.sampled_step > 0.0 && self.sampled_step.is_finite()) {
            return bad(format!("sampled step must be > 0, got {}", self.sampled_step));
        }
        if let Some((n, m)) = self.online_sizes {
            if m >= n {
                return bad(format!("online sizes need n > m, got n={n} m={m}"));
            }
        }
        self.sampler.validate()
    }

    pub(crate) fn optim(&self) -> OptimConfig {
        OptimConfig {
            tolerance: self.inner_tolerance,
            max_iters: self.inner_max_iters,
            ..OptimConfig::default()
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::classification()
    }
}
