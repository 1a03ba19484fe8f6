//! Algebraic speed systems: real base and perturbed systems, the complex strip
//! system, and the speeds `c_KPP`, `c_BRR`, `c_L`.

use thiserror::Error;

use crate::model::ModelParams;

mod complex;
mod real;

pub use complex::{
    c_l, critical_pair, default_seeds, solve_complex, z_residuals, ComplexDispersion, DEDUP_TOL, MIN_IMAG,
    ROOT_RESIDUAL,
};
pub use real::{
    c_brr, c_kpp, circle_alpha, curve_alpha, intersection_witness, perturbed_witness, perturbed_witness_eps,
    PerturbedWitness, RealDispersion,
};

/// Errors of the dispersion solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispersionError {
    /// The speed is below `c_KPP`, so the circle is empty.
    #[error("c = {c} is below c_KPP = {c_kpp}")]
    BelowKpp {
        /// Requested speed.
        c: f64,
        /// Threshold.
        c_kpp: f64,
    },
    /// No solution of the requested system.
    #[error("no perturbed witness at c = {c}")]
    NoWitness {
        /// Speed tried last.
        c: f64,
    },
    /// Perturbation parameters out of range.
    #[error("invalid perturbation eta = {eta}, eps = {eps}")]
    BadPerturbation {
        /// `eta`.
        eta: f64,
        /// `eps`.
        eps: f64,
    },
    /// Non-positive tolerance.
    #[error("tolerance must be > 0, got {0}")]
    BadTolerance(f64),
    /// Non-positive strip height.
    #[error("strip height must be > 0, got {0}")]
    BadHeight(f64),
    /// The existence predicate is not monotone near the returned speed.
    #[error("existence predicate not monotone near c = {c} (tol {tol})")]
    NonMonotone {
        /// Returned boundary.
        c: f64,
        /// Tolerance used.
        tol: f64,
    },
    /// No complex root below `c_BRR` for this strip height.
    #[error("L = {0} too small: no constrained complex root below c_BRR")]
    HeightTooSmall(f64),
    /// `D <= 2d`: there is no road-enhanced regime.
    #[error("D <= 2d: no road-enhanced regime")]
    NoRoadRegime,
    /// The reaction has no positive linear growth.
    #[error("reaction must be KPP with f'(0) > 0")]
    NotKpp,
}

pub(crate) fn require_kpp(params: &ModelParams) -> Result<(), DispersionError> {
    if params.is_kpp() {
        Ok(())
    } else {
        Err(DispersionError::NotKpp)
    }
}

/// Which speed governs spreading along the road.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `D < 2d`.
    Kpp,
    /// `D = 2d`, where both speeds coincide.
    Boundary,
    /// `D > 2d`.
    Road,
}

/// Regime of `params`.
pub fn regime(params: &ModelParams) -> Regime {
    let two_d = 2.0 * params.d;
    if params.road_d < two_d {
        Regime::Kpp
    } else if params.road_d == two_d {
        Regime::Boundary
    } else {
        Regime::Road
    }
}
