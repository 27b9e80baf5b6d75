//! Two-time-scale step sizes.
//!
//! `α(t) = α₀ / (t+1)^τ₁` drives the slow subgradient descent and
//! `β(t) = β₀ / (t+1)^τ₂` the fast consensus mixing. Convergence needs
//! `0.5 < τ₂ < τ₁ ≤ 1`, `2τ₁ − τ₂ > 1`, `α₀ ≥ 1` and
//! `β₀ ≤ 2 / (λ₂ + λₙ)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::SpectralInfo;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("{name} = {value} is not finite")]
    NonFinite { name: &'static str, value: f64 },
    #[error("alpha0 >= 1 violated: alpha0 = {0}")]
    AlphaTooSmall(f64),
    #[error("alpha0 > 0 violated: alpha0 = {0}")]
    AlphaNonPositive(f64),
    #[error("beta0 > 0 violated: beta0 = {0}")]
    BetaNonPositive(f64),
    #[error("tau2 > 0.5 violated: tau2 = {0}")]
    Tau2TooSmall(f64),
    #[error("tau2 < tau1 violated: tau1 = {tau1}, tau2 = {tau2}")]
    TausNotSeparated { tau1: f64, tau2: f64 },
    #[error("tau1 <= 1 violated: tau1 = {0}")]
    Tau1TooLarge(f64),
    #[error("2*tau1 - tau2 > 1 violated: 2*{tau1} - {tau2} = {value}")]
    TauBalance { tau1: f64, tau2: f64, value: f64 },
    #[error("beta0 <= 2/(lambda2 + lambdaN) violated: beta0 = {beta0}, bound = {bound}")]
    BetaAboveBound { beta0: f64, bound: f64 },
    #[error("lambda2 > 0 violated: the graph is disconnected (lambda2 = {0})")]
    Disconnected(f64),
}

/// `β₀` as configured: a number, or derived from the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Beta0 {
    Value(f64),
    Auto(AutoTag),
}

/// The literal string `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl Beta0 {
    pub const AUTO: Beta0 = Beta0::Auto(AutoTag::Auto);
}

/// Step-size parameters before they are checked against a topology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSchedule {
    pub alpha0: f64,
    pub beta0: Beta0,
    pub tau1: f64,
    pub tau2: f64,
}

impl StepSchedule {
    /// `α₀ = 80`, `β₀` auto, `τ₁ = 1`, `τ₂ = 0.505`.
    pub fn reference() -> Self {
        Self {
            alpha0: 80.0,
            beta0: Beta0::AUTO,
            tau1: 1.0,
            tau2: 0.505,
        }
    }

    /// Replaces an `auto` `β₀` with `2/(λ₂+λₙ)` and checks every constraint.
    ///
    /// With `allow_unsafe` only finiteness, positivity and connectivity are
    /// enforced.
    pub fn resolve(
        &self,
        spectral: &SpectralInfo,
        allow_unsafe: bool,
    ) -> Result<ResolvedSchedule, ScheduleError> {
        if spectral.lambda2.is_nan() || spectral.lambda2 <= 0.0 {
            return Err(ScheduleError::Disconnected(spectral.lambda2));
        }
        let bound = spectral.beta_bound();
        let beta0 = match self.beta0 {
            Beta0::Value(v) => v,
            Beta0::Auto(_) => bound,
        };
        for (name, value) in [
            ("alpha0", self.alpha0),
            ("beta0", beta0),
            ("tau1", self.tau1),
            ("tau2", self.tau2),
        ] {
            if !value.is_finite() {
                return Err(ScheduleError::NonFinite { name, value });
            }
        }
        if self.alpha0 <= 0.0 {
            return Err(ScheduleError::AlphaNonPositive(self.alpha0));
        }
        if beta0 <= 0.0 {
            return Err(ScheduleError::BetaNonPositive(beta0));
        }
        if !allow_unsafe {
            check_exponents(self.tau1, self.tau2)?;
            if self.alpha0 < 1.0 {
                return Err(ScheduleError::AlphaTooSmall(self.alpha0));
            }
            // Equality is allowed; `auto` sits exactly on the bound.
            if beta0 > bound {
                return Err(ScheduleError::BetaAboveBound { beta0, bound });
            }
        }
        Ok(ResolvedSchedule {
            alpha0: self.alpha0,
            beta0,
            tau1: self.tau1,
            tau2: self.tau2,
        })
    }
}

fn check_exponents(tau1: f64, tau2: f64) -> Result<(), ScheduleError> {
    if tau2 <= 0.5 {
        return Err(ScheduleError::Tau2TooSmall(tau2));
    }
    if tau2 >= tau1 {
        return Err(ScheduleError::TausNotSeparated { tau1, tau2 });
    }
    if tau1 > 1.0 {
        return Err(ScheduleError::Tau1TooLarge(tau1));
    }
    let value = 2.0 * tau1 - tau2;
    if value <= 1.0 {
        return Err(ScheduleError::TauBalance { tau1, tau2, value });
    }
    Ok(())
}

/// A schedule with a concrete `β₀`, validated against a topology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSchedule {
    pub alpha0: f64,
    pub beta0: f64,
    pub tau1: f64,
    pub tau2: f64,
}

impl ResolvedSchedule {
    #[inline]
    pub fn alpha(&self, t: u64) -> f64 {
        self.alpha0 / ((t + 1) as f64).powf(self.tau1)
    }

    #[inline]
    pub fn beta(&self, t: u64) -> f64 {
        self.beta0 / ((t + 1) as f64).powf(self.tau2)
    }

    pub fn as_config(&self) -> StepSchedule {
        StepSchedule {
            alpha0: self.alpha0,
            beta0: Beta0::Value(self.beta0),
            tau1: self.tau1,
            tau2: self.tau2,
        }
    }
}
