//! Physical parameters and the reaction term.
//!
//! A [`ModelParams`] value is immutable once built. Construction validates the
//! KPP property of the reaction on a sample grid and checks that the stored
//! `fprime0` matches the reaction's slope at the origin.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Number of samples used when validating a reaction at construction time.
const VALIDATION_SAMPLES: usize = 1000;

/// Tolerance of the monotonicity test on `f(v)/v`.
const RATIO_TOL: f64 = 1e-12;

/// Errors raised while building [`ModelParams`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    /// A scalar parameter is out of range.
    #[error("parameter `{name}` = {value} is invalid: {reason}")]
    InvalidParam {
        /// Config-level name of the parameter.
        name: &'static str,
        /// Offending value.
        value: f64,
        /// Human-readable constraint.
        reason: &'static str,
    },
    /// The reaction term failed the KPP check.
    #[error("reaction is not KPP: {0}")]
    NotKpp(KppViolation),
    /// The stored slope at zero disagrees with the reaction.
    #[error("fprime0 = {stored} but f(h)/h = {measured} at h = {h:e}")]
    SlopeMismatch {
        /// Declared `fprime0`.
        stored: f64,
        /// Measured difference quotient.
        measured: f64,
        /// Step used.
        h: f64,
    },
}

/// A reaction rule `f(v)`.
#[derive(Clone)]
pub enum Reaction {
    /// `v(1 - v)` for `v < 1`, extended by zero for `v >= 1`.
    Logistic,
    /// `f = 0`, used for conservation runs.
    Zero,
    /// User supplied closure.
    Custom {
        /// Label written to output headers.
        name: String,
        /// The rule itself.
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl Reaction {
    /// Wraps a closure as a reaction.
    pub fn custom(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Reaction::Custom {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    /// Evaluates `f(v)`.
    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        match self {
            Reaction::Logistic => {
                if v >= 1.0 {
                    0.0
                } else {
                    v * (1.0 - v)
                }
            }
            Reaction::Zero => 0.0,
            Reaction::Custom { f, .. } => f(v),
        }
    }

    /// Short label.
    pub fn name(&self) -> &str {
        match self {
            Reaction::Logistic => "logistic",
            Reaction::Zero => "zero",
            Reaction::Custom { name, .. } => name,
        }
    }
}

impl fmt::Debug for Reaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Reaction({})", self.name())
    }
}

/// The logistic rule `v(1 - v)`, with `f'(0) = 1`.
pub fn logistic_reaction() -> Reaction {
    Reaction::Logistic
}

/// Why a reaction failed [`kpp_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KppFailure {
    /// `f(0) != 0`.
    NonzeroAtZero,
    /// `f(1) != 0`.
    NonzeroAtOne,
    /// `f(v) <= 0` for some interior sample.
    NotPositive,
    /// `f(v)/v` increased between consecutive samples.
    RatioIncreasing,
    /// `f` returned NaN or an infinity.
    NonFinite,
}

/// First failing sample of a [`kpp_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KppViolation {
    /// Failure kind.
    pub kind: KppFailure,
    /// Sample position.
    pub v: f64,
    /// `f(v)` at that sample.
    pub value: f64,
}

impl fmt::Display for KppViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at v = {} (f = {})", self.kind, self.v, self.value)
    }
}

/// Checks the KPP property of `f` on `n_samples` equispaced points of `[0, 1]`.
///
/// Returns `Ok(())` or the first violation found. Endpoint and positivity
/// tests use a `1e-12` tolerance, as does the monotonicity test on `f(v)/v`.
///
/// # Panics
///
/// Panics if `n_samples < 2`.
pub fn kpp_check(f: impl Fn(f64) -> f64, n_samples: usize) -> Result<(), KppViolation> {
    assert!(n_samples >= 2, "kpp_check needs at least two samples");
    let check = |v: f64| -> Result<f64, KppViolation> {
        let value = f(v);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(KppViolation { kind: KppFailure::NonFinite, v, value })
        }
    };
    for (v, kind) in [(0.0, KppFailure::NonzeroAtZero), (1.0, KppFailure::NonzeroAtOne)] {
        let value = check(v)?;
        if value.abs() > RATIO_TOL {
            return Err(KppViolation { kind, v, value });
        }
    }
    let step = 1.0 / (n_samples - 1) as f64;
    let mut prev_ratio = f64::INFINITY;
    for k in 1..n_samples {
        let v = if k == n_samples - 1 { 1.0 } else { k as f64 * step };
        let value = check(v)?;
        if k < n_samples - 1 && value <= 0.0 {
            return Err(KppViolation { kind: KppFailure::NotPositive, v, value });
        }
        let ratio = value / v;
        if ratio > prev_ratio + RATIO_TOL {
            return Err(KppViolation { kind: KppFailure::RatioIncreasing, v, value });
        }
        prev_ratio = ratio;
    }
    Ok(())
}

/// Diffusivities, exchange rates and reaction of the field-road system.
#[derive(Debug, Clone)]
pub struct ModelParams {
    /// Field diffusivity `d`.
    pub d: f64,
    /// Road diffusivity `D`.
    pub road_d: f64,
    /// Road to field exchange rate `mu`.
    pub mu: f64,
    /// Field to road exchange rate `nu`.
    pub nu: f64,
    /// Reaction in the field.
    pub reaction: Reaction,
    /// `f'(0)`.
    pub fprime0: f64,
    /// Penalization used when the reaction is replaced by `(f'(0) - delta) v`.
    pub delta: f64,
}

fn positive(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidParam {
            name,
            value,
            reason: "must be finite and > 0",
        })
    }
}

impl ModelParams {
    /// Logistic parameters with the default penalization `delta = 0.05`.
    pub fn logistic(d: f64, road_d: f64, mu: f64, nu: f64) -> Result<Self, ModelError> {
        Self::new(d, road_d, mu, nu, Reaction::Logistic, 1.0)
    }

    /// Builds and validates parameters for a KPP reaction with slope `fprime0`.
    ///
    /// `delta` defaults to `0.05 * fprime0`.
    pub fn new(
        d: f64,
        road_d: f64,
        mu: f64,
        nu: f64,
        reaction: Reaction,
        fprime0: f64,
    ) -> Result<Self, ModelError> {
        positive("d", d)?;
        positive("D", road_d)?;
        positive("mu", mu)?;
        positive("nu", nu)?;
        positive("fprime0", fprime0)?;
        let f = |v| reaction.eval(v);
        kpp_check(f, VALIDATION_SAMPLES).map_err(ModelError::NotKpp)?;
        let h = 1e-8;
        let measured = reaction.eval(h) / h;
        if (measured - fprime0).abs() > 1e-6 * fprime0.max(1.0) {
            return Err(ModelError::SlopeMismatch {
                stored: fprime0,
                measured,
                h,
            });
        }
        Ok(ModelParams {
            d,
            road_d,
            mu,
            nu,
            reaction,
            fprime0,
            delta: 0.05 * fprime0,
        })
    }

    /// Parameters with `f = 0`, for conservation runs only.
    ///
    /// `fprime0` and `delta` are zero, so these parameters are rejected by the
    /// dispersion and certificate routines.
    pub fn conservative(d: f64, road_d: f64, mu: f64, nu: f64) -> Result<Self, ModelError> {
        positive("d", d)?;
        positive("D", road_d)?;
        positive("mu", mu)?;
        positive("nu", nu)?;
        Ok(ModelParams {
            d,
            road_d,
            mu,
            nu,
            reaction: Reaction::Zero,
            fprime0: 0.0,
            delta: 0.0,
        })
    }

    /// Replaces `delta`; requires `0 <= delta < fprime0`.
    pub fn with_delta(mut self, delta: f64) -> Result<Self, ModelError> {
        if !(delta.is_finite() && delta >= 0.0 && delta < self.fprime0) {
            return Err(ModelError::InvalidParam {
                name: "delta",
                value: delta,
                reason: "must satisfy 0 <= delta < fprime0",
            });
        }
        self.delta = delta;
        Ok(self)
    }

    /// Growth rate of the linearized, penalized reaction.
    pub fn penalized_growth(&self) -> f64 {
        self.fprime0 - self.delta
    }

    /// Copy whose `fprime0` is `fprime0 - delta` and whose `delta` is zero.
    ///
    /// Only the linear quantities are changed; the reaction closure is kept.
    pub fn penalized(&self) -> ModelParams {
        ModelParams {
            fprime0: self.penalized_growth(),
            delta: 0.0,
            ..self.clone()
        }
    }

    /// True when `f` is a KPP rule with positive slope.
    pub fn is_kpp(&self) -> bool {
        self.fprime0 > 0.0 && !matches!(self.reaction, Reaction::Zero)
    }

    /// Positive constant steady state `(nu/mu, 1)`.
    pub fn steady_state(&self) -> (f64, f64) {
        (self.nu / self.mu, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_values() {
        let f = logistic_reaction();
        assert_eq!(f.eval(0.0), 0.0);
        assert_eq!(f.eval(0.5), 0.25);
        assert_eq!(f.eval(1.5), 0.0);
    }

    #[test]
    fn logistic_is_kpp() {
        for n in [2, 3, 10, 1000] {
            assert!(kpp_check(|v| Reaction::Logistic.eval(v), n).is_ok());
        }
    }

    #[test]
    fn square_fails_at_one() {
        let err = kpp_check(|v| v * v, 1000).unwrap_err();
        assert_eq!(err.kind, KppFailure::NonzeroAtOne);
    }

    #[test]
    fn nan_is_reported_separately() {
        let err = kpp_check(|v| if v > 0.5 { f64::NAN } else { v * (1.0 - v) }, 100).unwrap_err();
        assert_eq!(err.kind, KppFailure::NonFinite);
    }

    #[test]
    fn bad_params_name_the_key() {
        let err = ModelParams::logistic(1.0, -1.0, 1.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("`D`"));
        assert!(ModelParams::logistic(1.0, 1.0, 1.0, 1.0)
            .unwrap()
            .with_delta(1.0)
            .is_err());
    }

    #[test]
    fn slope_mismatch_detected() {
        let err = ModelParams::new(1.0, 1.0, 1.0, 1.0, Reaction::Logistic, 2.0).unwrap_err();
        assert!(matches!(err, ModelError::SlopeMismatch { .. }));
    }
}
