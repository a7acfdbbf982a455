//! The three convex penalty families on auxiliary expectations and their
//! conjugates.
//!
//! Dual variables `μ` enter the auxiliary distribution as `exp(μ·f')`, and the
//! dual objective for one constraint is `−Σ log Z + μu − pen(μ)`, i.e. the
//! conjugate term `U*(−μ) = −μu + pen(μ)` is subtracted. For an upper bound
//! `E_q[f'] ≤ u` the dual is sign-constrained to `μ ≤ 0` (equivalently
//! `ν = −μ ≥ 0` with `q ∝ p·exp(−ν f')`).

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyKind {
    /// `U(v) = (1/2β)(u − v)²`.
    L2,
    /// Indicator of `|u − v| ≤ β`.
    L1Box,
    /// Indicator of `v ≤ u`.
    Affine,
}

impl PenaltyKind {
    pub fn name(self) -> &'static str {
        match self {
            PenaltyKind::L2 => "l2",
            PenaltyKind::L1Box => "l1box",
            PenaltyKind::Affine => "affine",
        }
    }
}

/// Feasible region of a dual variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualBound {
    Free,
    NonPositive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyFamily {
    pub kind: PenaltyKind,
    pub beta: f64,
}

/// Slack allowed when evaluating indicator penalties on computed expectations.
const FEASIBILITY_SLACK: f64 = 1e-6;

impl PenaltyFamily {
    pub fn new(kind: PenaltyKind, beta: f64) -> Result<Self> {
        let ok = match kind {
            PenaltyKind::L2 => beta > 0.0,
            PenaltyKind::L1Box => beta >= 0.0,
            PenaltyKind::Affine => true,
        } && beta.is_finite();
        if !ok {
            return Err(Error::Config(format!(
                "invalid beta {beta} for {} penalty",
                kind.name()
            )));
        }
        Ok(PenaltyFamily { kind, beta })
    }

    pub fn l2(beta: f64) -> Result<Self> {
        Self::new(PenaltyKind::L2, beta)
    }

    pub fn l1_box(beta: f64) -> Result<Self> {
        Self::new(PenaltyKind::L1Box, beta)
    }

    pub fn affine() -> Self {
        PenaltyFamily {
            kind: PenaltyKind::Affine,
            beta: 0.0,
        }
    }

    pub fn bound(&self) -> DualBound {
        match self.kind {
            PenaltyKind::Affine => DualBound::NonPositive,
            _ => DualBound::Free,
        }
    }

    /// `U(v)` against target `u`; indicator families return `+∞` outside
    /// their feasible set.
    pub fn primal(&self, value: f64, u: f64) -> f64 {
        self.primal_within(value, u, FEASIBILITY_SLACK * u.abs().max(1.0))
    }

    /// [`Self::primal`] with an explicit feasibility slack for indicator
    /// families (used with sampled expectations).
    pub fn primal_within(&self, value: f64, u: f64, slack: f64) -> f64 {
        match self.kind {
            PenaltyKind::L2 => (u - value).powi(2) / (2.0 * self.beta),
            PenaltyKind::L1Box if (u - value).abs() <= self.beta + slack => 0.0,
            PenaltyKind::Affine if value <= u + slack => 0.0,
            _ => f64::INFINITY,
        }
    }

    /// The smooth part `pen(μ)` of the conjugate (the `β|μ|` kink of the box
    /// family is excluded and handled as an L1 weight by the optimizer).
    pub(crate) fn smooth_penalty(&self, mu: f64) -> (f64, f64) {
        match self.kind {
            PenaltyKind::L2 => (0.5 * self.beta * mu * mu, self.beta * mu),
            _ => (0.0, 0.0),
        }
    }

    pub(crate) fn l1_weight(&self) -> f64 {
        match self.kind {
            PenaltyKind::L1Box => self.beta,
            _ => 0.0,
        }
    }
}

/// `U*(−μ)` and a subgradient with respect to `μ`. At the box kink `μ = 0`
/// the minimum-norm element of `[−u−β, −u+β]` is returned.
pub fn conjugate_value_and_subgradient(penalty: &PenaltyFamily, mu: f64, u: f64) -> (f64, f64) {
    let beta = penalty.beta;
    match penalty.kind {
        PenaltyKind::L2 => (-mu * u + 0.5 * beta * mu * mu, -u + beta * mu),
        PenaltyKind::L1Box => {
            let value = -mu * u + beta * mu.abs();
            let sub = if mu > 0.0 {
                -u + beta
            } else if mu < 0.0 {
                -u - beta
            } else {
                0.0f64.clamp(-u - beta, -u + beta)
            };
            (value, sub)
        }
        PenaltyKind::Affine => (-mu * u, -u),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l2_conjugate_examples() {
        let p = PenaltyFamily::l2(0.5).unwrap();
        assert_eq!(conjugate_value_and_subgradient(&p, 0.0, 1.0), (0.0, -1.0));
        let (v, g) = conjugate_value_and_subgradient(&p, 2.0, 1.0);
        assert!((v + 1.0).abs() < 1e-15);
        assert!(g.abs() < 1e-15);
    }

    #[test]
    fn affine_conjugate_is_linear() {
        let (v, g) = conjugate_value_and_subgradient(&PenaltyFamily::affine(), 3.0, 1.0);
        assert_eq!(v, -3.0);
        assert_eq!(g, -1.0);
    }

    #[test]
    fn box_min_norm_subgradient_at_kink() {
        let p = PenaltyFamily::l1_box(1.0).unwrap();
        assert_eq!(conjugate_value_and_subgradient(&p, 0.0, 0.5).1, 0.0);
        assert_eq!(conjugate_value_and_subgradient(&p, 0.0, 2.0).1, -1.0);
        assert_eq!(conjugate_value_and_subgradient(&p, 0.0, -3.0).1, 2.0);
    }

    #[test]
    fn beta_validation() {
        assert!(PenaltyFamily::l2(0.0).is_err());
        assert!(PenaltyFamily::l1_box(0.0).is_ok());
        assert!(PenaltyFamily::l1_box(-1.0).is_err());
    }

    /// `U*(s) = sup_v [s·v − U(v)]`, checked on a fine grid.
    #[test]
    fn conjugates_match_grid_sup() {
        let grid: Vec<f64> = (-40_000..=40_000).map(|i| i as f64 * 1e-3).collect();
        for &(beta, u, mu) in &[(0.5, 1.0, 2.0), (2.0, -0.3, 0.7), (1.0, 0.4, -1.5)] {
            let l2 = PenaltyFamily::l2(beta).unwrap();
            let sup = grid
                .iter()
                .map(|&v| -mu * v - l2.primal(v, u))
                .fold(f64::NEG_INFINITY, f64::max);
            let (val, _) = conjugate_value_and_subgradient(&l2, mu, u);
            assert!((sup - val).abs() < 1e-3, "l2 β={beta} u={u} μ={mu}: {sup} vs {val}");

            let bx = PenaltyFamily::l1_box(beta).unwrap();
            let sup = grid
                .iter()
                .filter(|&&v| (u - v).abs() <= beta)
                .map(|&v| -mu * v)
                .fold(f64::NEG_INFINITY, f64::max);
            let (val, _) = conjugate_value_and_subgradient(&bx, mu, u);
            assert!((sup - val).abs() < 1e-3, "box β={beta} u={u} μ={mu}: {sup} vs {val}");
        }
    }
}
