//! Explicit comparison functions with numerically verified margins.
//!
//! A certificate stores its parameters together with the worst margin of
//! every defining inequality over its sample grid. It is valid when every
//! margin is nonnegative. Derivatives are analytic throughout, so margins
//! carry no discretization error beyond the choice of sample points.

use std::fmt::Write as _;

use thiserror::Error;

use crate::dispersion::{ComplexDispersion, DispersionError};

mod cutoff;
mod hump;
mod psi;
mod subsolution;
mod supersolution;

pub use cutoff::Smoothstep;
pub use hump::{build_hump, Hump, DEFAULT_KAPPA};
pub use psi::{build_psi, Psi, PsiValue};
pub use subsolution::{
    build_subsolution, perturbation_bounds, road_sups, verify_subsolution, FieldDerivs, PerturbationBounds,
    Profile, ProfileSups, Region, RoadSups, LAMBDA_CAP, MAX_LAMBDA_HALVINGS,
};
pub use supersolution::{
    asymptotic_supersolution, asymptotic_supersolution_on, boundary_angular_derivative, conical_supersolution,
    conical_supersolution_on, radial_supersolution, reverify, GridSize, R_CAP,
};

/// Errors of the certificate builders.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertificateError {
    /// A dispersion solve failed (for instance no witness at this speed).
    #[error(transparent)]
    Dispersion(#[from] DispersionError),
    /// A precondition on the parameters does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// `lambda` halving found no complete positivity component.
    #[error("no complete positivity component after {halvings} halvings of lambda")]
    NoComponent {
        /// Halvings tried.
        halvings: usize,
    },
    /// Configuration outside what the verifier handles.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// The geometry could not be evaluated.
    #[error("geometry: {0}")]
    Geometry(String),
}

/// Worst value of one defining inequality, written as `margin >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin {
    /// Short name.
    pub name: &'static str,
    /// Worst margin over the samples.
    pub value: f64,
    /// True for differential inequalities (subject to the refinement check).
    pub pde: bool,
}

impl Margin {
    /// A differential inequality.
    pub fn pde(name: &'static str, value: f64) -> Self {
        Margin { name, value, pde: true }
    }

    /// A pointwise or algebraic check.
    pub fn algebraic(name: &'static str, value: f64) -> Self {
        Margin { name, value, pde: false }
    }
}

fn margins_csv(margins: &[Margin]) -> String {
    let mut s = String::from("name,value,kind\n");
    for m in margins {
        let kind = if m.pde { "pde" } else { "check" };
        let _ = writeln!(s, "{},{:e},{}", m.name, m.value, kind);
    }
    s
}

/// Family of a supersolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuperKind {
    /// `D <= 2d`, radial exponential.
    Radial,
    /// Exact cone with the angular profile `Psi`.
    Conical,
    /// Asymptotically conical field.
    Asymptotic,
}

impl SuperKind {
    /// Lowercase label.
    pub fn name(self) -> &'static str {
        match self {
            SuperKind::Radial => "radial",
            SuperKind::Conical => "conical",
            SuperKind::Asymptotic => "asymptotic",
        }
    }
}

/// A supersolution with its verified margins.
#[derive(Debug, Clone)]
pub struct SupersolutionCertificate {
    /// Family.
    pub kind: SuperKind,
    /// Speed.
    pub c: f64,
    /// Speed at which the algebraic witness was taken (`c` for radial).
    pub c_witness: f64,
    /// Decay rate.
    pub alpha: f64,
    /// Angular growth (0 for radial).
    pub beta: f64,
    /// Field amplitude.
    pub gamma: f64,
    /// Floor of `Psi`.
    pub eta: f64,
    /// Boundary perturbation allowance (asymptotic only).
    pub eps: f64,
    /// Inner radius `R`.
    pub r0: f64,
    /// Half-angle of the cone.
    pub theta0: f64,
    /// Cap `A >= 1`; the supersolution is `min(A e^{...}, steady state)`.
    pub amplitude: f64,
    /// Cutoff used in `Psi`.
    pub cutoff: Smoothstep,
    /// Verification grid.
    pub grid: GridSize,
    /// Radius at which the field margin is smallest.
    pub field_argmin_r: f64,
    /// Road curve (asymptotic only).
    pub geometry: Option<crate::geometry::Geometry>,
    /// Worst margins.
    pub residuals: Vec<Margin>,
    /// All margins nonnegative.
    pub valid: bool,
}

impl SupersolutionCertificate {
    pub(crate) fn finish(mut self) -> Self {
        self.valid = self.residuals.iter().all(|m| m.value >= 0.0 && m.value.is_finite());
        self
    }

    /// The angular profile of this certificate.
    ///
    /// # Panics
    ///
    /// Panics for radial certificates, which have no `Psi`.
    pub fn psi(&self) -> Psi {
        assert!(self.kind != SuperKind::Radial, "radial certificates have no Psi");
        build_psi(self.alpha, self.beta, self.eta, self.r0, self.theta0, self.cutoff)
    }

    /// Margin by name.
    pub fn margin(&self, name: &str) -> Option<f64> {
        self.residuals.iter().find(|m| m.name == name).map(|m| m.value)
    }

    /// Largest relative loss `(coarse - fine)/coarse` of the differential
    /// margins when the grid is refined 2x (0 if nothing degrades).
    pub fn refinement_loss(&self, params: &crate::model::ModelParams) -> Result<f64, CertificateError> {
        let fine = reverify(self, params, self.grid.refined())?;
        let mut worst: f64 = 0.0;
        for m in self.residuals.iter().filter(|m| m.pde) {
            let f = fine.iter().find(|x| x.name == m.name).map(|x| x.value).unwrap_or(f64::NEG_INFINITY);
            if m.value > 0.0 {
                worst = worst.max((m.value - f) / m.value);
            } else if f < m.value {
                worst = f64::INFINITY;
            }
        }
        Ok(worst)
    }

    /// `key: value` report.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "kind: {}", self.kind.name());
        let _ = writeln!(s, "valid: {}", self.valid);
        for (k, v) in [
            ("c", self.c),
            ("c_witness", self.c_witness),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("eta", self.eta),
            ("eps", self.eps),
            ("R", self.r0),
            ("theta0", self.theta0),
            ("amplitude", self.amplitude),
            ("field_argmin_r", self.field_argmin_r),
        ] {
            let _ = writeln!(s, "{k}: {v}");
        }
        let _ = writeln!(s, "cutoff: smoothstep");
        let _ = writeln!(s, "grid: {}x{}", self.grid.nr, self.grid.ntheta);
        if let Some(g) = &self.geometry {
            let _ = writeln!(s, "geometry: {}", g.name());
        }
        for m in &self.residuals {
            let _ = writeln!(s, "margin.{}: {:e}", m.name, m.value);
        }
        s
    }

    /// Margins as CSV (`name,value,kind`).
    pub fn margins_csv(&self) -> String {
        margins_csv(&self.residuals)
    }
}

/// A truncated subsolution with its verified margins.
#[derive(Debug, Clone)]
pub struct SubsolutionCertificate {
    /// Speed.
    pub c: f64,
    /// Strip height.
    pub l: f64,
    /// Localization offset `Lambda` (set by [`verify_subsolution`]).
    pub big_lambda: Option<f64>,
    /// Half-width of the moving window.
    pub w: f64,
    /// Truncation shift.
    pub lambda: f64,
    /// Normalization applied to `U` and `V`.
    pub scale: f64,
    /// Field hump.
    pub hump: Hump,
    /// Root of the strip system.
    pub disp: ComplexDispersion,
    /// Selected components.
    pub region: Region,
    /// Name of the geometry last verified against.
    pub geometry: String,
    /// Worst margins (empty before verification).
    pub residuals: Vec<Margin>,
    /// All margins nonnegative.
    pub valid: bool,
}

impl SubsolutionCertificate {
    /// Evaluator of the normalized `U`, `V`.
    pub fn profile(&self) -> Profile {
        Profile::new(&self.disp, self.scale)
    }

    /// `u_lambda = U - lambda` on `E` and 0 elsewhere.
    pub fn u_truncated(&self, s: f64) -> f64 {
        let (e0, e1) = self.region.e;
        if s > e0 && s < e1 {
            (self.profile().road(s).0 - self.lambda).max(0.0)
        } else {
            0.0
        }
    }

    /// Margin by name.
    pub fn margin(&self, name: &str) -> Option<f64> {
        self.residuals.iter().find(|m| m.name == name).map(|m| m.value)
    }

    /// `key: value` report.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "kind: subsolution");
        let _ = writeln!(s, "valid: {}", self.valid);
        let _ = writeln!(s, "c: {}", self.c);
        let _ = writeln!(s, "L: {}", self.l);
        match self.big_lambda {
            Some(v) => {
                let _ = writeln!(s, "Lambda: {v}");
            }
            None => {
                let _ = writeln!(s, "Lambda: unverified");
            }
        }
        let _ = writeln!(s, "W: {}", self.w);
        let _ = writeln!(s, "lambda: {:e}", self.lambda);
        let _ = writeln!(s, "scale: {:e}", self.scale);
        let _ = writeln!(s, "hump.M: {}", self.hump.m);
        let _ = writeln!(s, "hump.kappa: {}", self.hump.kappa);
        let _ = writeln!(s, "alpha: {} + {}i", self.disp.alpha.re, self.disp.alpha.im);
        let _ = writeln!(s, "beta: {} + {}i", self.disp.beta.re, self.disp.beta.im);
        let _ = writeln!(s, "gamma1: {} + {}i", self.disp.gamma1.re, self.disp.gamma1.im);
        let _ = writeln!(s, "gamma2: {} + {}i", self.disp.gamma2.re, self.disp.gamma2.im);
        let _ = writeln!(s, "region.E: [{}, {}]", self.region.e.0, self.region.e.1);
        let _ = writeln!(
            s,
            "region.F: s in [{}, {}], y <= {}, {} nodes",
            self.region.f_s.0,
            self.region.f_s.1,
            self.region.f_y_max,
            self.region.f_nodes.len()
        );
        let _ = writeln!(s, "geometry: {}", self.geometry);
        for m in &self.residuals {
            let _ = writeln!(s, "margin.{}: {:e}", m.name, m.value);
        }
        s
    }

    /// Margins as CSV (`name,value,kind`).
    pub fn margins_csv(&self) -> String {
        margins_csv(&self.residuals)
    }
}
