//! Radial, conical and asymptotically conical supersolutions.
//!
//! All three have the form `(e^{-alpha(r - ct)}, gamma Psi e^{-alpha(r - ct)})`
//! on `r >= R`. Each defining inequality is evaluated with analytic
//! derivatives on a sample grid and its worst margin is stored.

use rayon::prelude::*;

use super::cutoff::Smoothstep;
use super::psi::{build_psi, Psi};
use super::{CertificateError, Margin, SuperKind, SupersolutionCertificate};
use crate::dispersion::{self, c_brr, c_kpp, perturbed_witness, perturbed_witness_eps, Regime};
use crate::geometry::{polar, Geometry};
use crate::model::ModelParams;

/// Tolerance used by `c_BRR` inside the certificate builders.
const C_BRR_TOL: f64 = 1e-12;
/// Initial `eta`.
const ETA_START: f64 = 0.1;
/// Initial `R`.
const R_START: f64 = 16.0;
/// `R` is never doubled past this value.
pub const R_CAP: f64 = 1_048_576.0;
/// Bounds on `Psi` are checked to this tolerance.
const PSI_TOL: f64 = 1e-12;
/// Radial field margin is checked on `r in [1, R_RADIAL_MAX]`.
const R_RADIAL_MAX: f64 = 1e3;
/// Samples per side in the asymptotic deviation scan.
const DEVIATION_SAMPLES: usize = 2048;
/// Geometric extent of the deviation scan, in units of `x_R`.
const DEVIATION_SPAN: f64 = 1e3;

/// Grid resolution of a supersolution verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSize {
    /// Radial samples on `[R, 10R]`.
    pub nr: usize,
    /// Angular samples.
    pub ntheta: usize,
}

impl Default for GridSize {
    fn default() -> Self {
        GridSize { nr: 512, ntheta: 256 }
    }
}

impl GridSize {
    /// Both counts doubled.
    pub fn refined(self) -> Self {
        GridSize {
            nr: 2 * self.nr,
            ntheta: 2 * self.ntheta,
        }
    }
}

fn linspace(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> + Clone {
    let h = if n > 1 { (b - a) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |k| if k + 1 == n { b } else { a + h * k as f64 })
}

fn geomspace(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> + Clone {
    let (la, lb) = (a.ln(), b.ln());
    linspace(la, lb, n).map(f64::exp)
}

/// Radial supersolution of the regime `D <= 2d`.
///
/// `gamma = mu/nu`, `alpha` is the larger root of `d alpha^2 - c alpha + f'(0)`.
/// Margins: road `alpha c - D alpha^2`, compatibility `c/D - alpha`, exchange
/// (identically zero) and field `alpha c - d alpha^2 + d alpha/r - f'(0)` on a
/// log grid `r in [1, 10^3]`.
pub fn radial_supersolution(c: f64, params: &ModelParams) -> Result<SupersolutionCertificate, CertificateError> {
    dispersion::require_kpp(params)?;
    let (d, big_d, g) = (params.d, params.road_d, params.fprime0);
    if big_d > 2.0 * d {
        return Err(CertificateError::Precondition(format!(
            "radial supersolution needs D <= 2d, got D = {big_d}, d = {d}"
        )));
    }
    let ck = c_kpp(params);
    if !(c >= ck) {
        return Err(CertificateError::Precondition(format!("c = {c} is below c_KPP = {ck}")));
    }
    let disc = (c * c - 4.0 * d * g).max(0.0);
    let alpha = (c + disc.sqrt()) / (2.0 * d);
    let gamma = params.mu / params.nu;
    let road = alpha * c - big_d * alpha * alpha;
    let compat = c / big_d - alpha;
    let exchange = params.nu * gamma - params.mu;
    let (field, r_min) = geomspace(1.0, R_RADIAL_MAX, 1024)
        .map(|r| (alpha * c - d * alpha * alpha + d * alpha / r - g, r))
        .fold((f64::INFINITY, 1.0), |acc, m| if m.0 < acc.0 { m } else { acc });
    let residuals = vec![
        Margin::pde("road", road),
        Margin::algebraic("compatibility", compat),
        Margin::pde("exchange", exchange),
        Margin::pde("field", field),
    ];
    Ok(SupersolutionCertificate::finish(SupersolutionCertificate {
        kind: SuperKind::Radial,
        c,
        c_witness: c,
        alpha,
        beta: 0.0,
        gamma,
        eta: 0.0,
        eps: 0.0,
        r0: 1.0,
        theta0: std::f64::consts::PI,
        amplitude: 1.0,
        cutoff: Smoothstep,
        grid: GridSize { nr: 1024, ntheta: 1 },
        field_argmin_r: r_min,
        geometry: None,
        residuals,
        valid: false,
    }))
}

/// Angular grid on `[-theta_max, theta_max]` with half of `n` points in the
/// cutoff layers `theta0 (1 - 1/sqrt R) <= |theta| <= theta0`.
fn theta_grid(theta0: f64, r0: f64, theta_max: f64, n: usize) -> Vec<f64> {
    let inner = theta0 * (1.0 - 1.0 / r0.sqrt());
    let per_layer = (n / 4).max(2);
    let n_in = n.saturating_sub(2 * per_layer).max(3);
    let mut t: Vec<f64> = linspace(-inner, inner, n_in).collect();
    t.extend(linspace(inner, theta0, per_layer));
    t.extend(linspace(-theta0, -inner, per_layer));
    if theta_max > theta0 {
        let extra = (n / 8).max(2);
        t.extend(linspace(theta0, theta_max, extra));
        t.extend(linspace(-theta_max, -theta0, extra));
    }
    t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    t.dedup();
    t
}

/// Sufficient conditions on `R` for the cutoff terms:
/// `S theta0 / sqrt R (beta^2 theta0 + 2 alpha beta) <= beta^2 eta / 2` and
/// `2 beta sup|phi'| / (sqrt R theta0) + sup|phi''| / (R theta0^2) <= beta^2 eta / 2`,
/// where `S = sup phi(z)(1 - z)` bounds `|phi (|theta| - theta0)| sqrt R / theta0`.
fn cutoff_conditions(alpha: f64, beta: f64, eta: f64, r0: f64, theta0: f64, s: f64) -> bool {
    let rhs = beta * beta * eta / 2.0;
    let sr = r0.sqrt();
    let c1 = theta0 * s / sr * (beta * beta * theta0 + 2.0 * alpha * beta);
    let c2 = 2.0 * beta * Smoothstep::SUP_D1 / (sr * theta0) + Smoothstep::SUP_D2 / (r0 * theta0 * theta0);
    c1 <= rhs && c2 <= rhs
}

/// Field margin `alpha c - f'(0) - d tildeLaplace(Psi) / Psi`.
#[inline]
fn field_margin(psi: &Psi, c: f64, params: &ModelParams, r: f64, theta: f64) -> (f64, f64) {
    let v = psi.eval(r, theta);
    let lap = psi.tilde_laplacian_of(&v, r);
    (psi.alpha * c - params.fprime0 - params.d * lap / v.v, v.v)
}

#[derive(Debug, Clone, Copy)]
struct FieldScan {
    field: f64,
    psi_min: f64,
    psi_max: f64,
    argmin_r: f64,
}

/// Scans the field inequality over `r in [R, 10R]` and `thetas`, skipping
/// points rejected by `inside`.
fn scan_field(
    psi: &Psi,
    c: f64,
    params: &ModelParams,
    nr: usize,
    thetas: &[f64],
    inside: &(dyn Fn(f64, f64) -> bool + Sync),
) -> FieldScan {
    let rs: Vec<f64> = linspace(psi.r0, 10.0 * psi.r0, nr).collect();
    let rows: Vec<FieldScan> = rs
        .par_iter()
        .map(|&r| {
            let mut acc = FieldScan {
                field: f64::INFINITY,
                psi_min: f64::INFINITY,
                psi_max: f64::NEG_INFINITY,
                argmin_r: r,
            };
            for &t in thetas {
                if !inside(r, t) {
                    continue;
                }
                let (m, v) = field_margin(psi, c, params, r, t);
                acc.field = acc.field.min(m);
                acc.psi_min = acc.psi_min.min(v);
                acc.psi_max = acc.psi_max.max(v);
            }
            acc
        })
        .collect();
    rows.into_iter().fold(
        FieldScan {
            field: f64::INFINITY,
            psi_min: f64::INFINITY,
            psi_max: f64::NEG_INFINITY,
            argmin_r: psi.r0,
        },
        |a, b| FieldScan {
            field: a.field.min(b.field),
            psi_min: a.psi_min.min(b.psi_min),
            psi_max: a.psi_max.max(b.psi_max),
            argmin_r: if b.field < a.field { b.argmin_r } else { a.argmin_r },
        },
    )
}

/// Margins of an exact cone `|theta| < theta0` on `r in [R, 10R]`.
fn conical_margins(
    psi: &Psi,
    c: f64,
    gamma: f64,
    params: &ModelParams,
    grid: GridSize,
) -> (Vec<Margin>, f64) {
    let (alpha, theta0) = (psi.alpha, psi.theta0);
    let thetas = theta_grid(theta0, psi.r0, theta0, grid.ntheta);
    let scan = scan_field(psi, c, params, grid.nr, &thetas, &|_, _| true);
    let mut road = f64::INFINITY;
    let mut exchange = f64::INFINITY;
    let mut trace: f64 = 0.0;
    for r in linspace(psi.r0, 10.0 * psi.r0, grid.nr) {
        for t in [theta0, -theta0] {
            let v = psi.eval(r, t);
            road = road.min(alpha * c - params.road_d * alpha * alpha - params.nu * gamma * v.v + params.mu);
            let outward = t.signum() * v.th / r;
            exchange = exchange.min(params.d * gamma * outward - params.mu + params.nu * gamma * v.v);
            trace = trace.max((v.v - 1.0).abs());
        }
    }
    let floor = psi.eta / (1.0 + psi.eta);
    let margins = vec![
        Margin::pde("field", scan.field),
        Margin::pde("road", road),
        Margin::pde("exchange", exchange),
        Margin::algebraic("psi_floor", scan.psi_min - floor + PSI_TOL),
        Margin::algebraic("psi_cap", 1.0 - scan.psi_max + PSI_TOL),
        Margin::algebraic("psi_trace", PSI_TOL - trace),
    ];
    (margins, scan.argmin_r)
}

fn require_road_regime(params: &ModelParams) -> Result<f64, CertificateError> {
    dispersion::require_kpp(params)?;
    if dispersion::regime(params) != Regime::Road {
        return Err(CertificateError::Precondition(format!(
            "conical supersolutions need D > 2d, got D = {}, d = {}",
            params.road_d, params.d
        )));
    }
    Ok(c_brr(params, C_BRR_TOL)?)
}

/// Conical supersolution on the exact cone of half-angle `theta0`.
///
/// The witness is taken at `c_w = (c + c_BRR)/2` so that `alpha (c - c_w)`
/// is left as slack; `gamma` receives half of it. `eta` is halved from 0.1
/// until the `eta`-system has a positive witness, `R` is doubled from 16
/// until the cutoff conditions hold, and then further (up to `2^20`) while
/// the grid margins are negative.
pub fn conical_supersolution(
    c: f64,
    theta0: f64,
    params: &ModelParams,
) -> Result<SupersolutionCertificate, CertificateError> {
    conical_supersolution_on(c, theta0, params, GridSize::default())
}

/// [`conical_supersolution`] on a chosen grid.
pub fn conical_supersolution_on(
    c: f64,
    theta0: f64,
    params: &ModelParams,
    grid: GridSize,
) -> Result<SupersolutionCertificate, CertificateError> {
    if !(theta0 > 0.0 && theta0 < std::f64::consts::PI) {
        return Err(CertificateError::Precondition(format!("theta0 = {theta0} must lie in (0, pi)")));
    }
    let cb = require_road_regime(params)?;
    if !(c > cb) {
        return Err(dispersion::DispersionError::NoWitness { c }.into());
    }
    let c_w = c - 0.5 * (c - cb);
    let mut eta = ETA_START;
    let w = loop {
        match perturbed_witness(c_w, eta, params) {
            Ok(w) => break w.witness,
            Err(_) if eta > 1e-6 => eta *= 0.5,
            Err(e) => return Err(e.into()),
        }
    };
    let (alpha, beta) = (w.alpha, w.beta);
    let gamma = w.gamma + alpha * (c - c_w) / (2.0 * params.nu);
    let s = Smoothstep.sup_phi_gap();
    let mut r0 = R_START;
    while r0 < R_CAP && !cutoff_conditions(alpha, beta, eta, r0, theta0, s) {
        r0 *= 2.0;
    }
    loop {
        let psi = build_psi(alpha, beta, eta, r0, theta0, Smoothstep);
        let (residuals, argmin) = conical_margins(&psi, c, gamma, params, grid);
        let cert = SupersolutionCertificate::finish(SupersolutionCertificate {
            kind: SuperKind::Conical,
            c,
            c_witness: c_w,
            alpha,
            beta,
            gamma,
            eta,
            eps: 0.0,
            r0,
            theta0,
            amplitude: 1.0,
            cutoff: Smoothstep,
            grid,
            field_argmin_r: argmin,
            geometry: None,
            residuals,
            valid: false,
        });
        if cert.valid || r0 >= R_CAP {
            return Ok(cert);
        }
        r0 *= 2.0;
    }
}

/// Boundary quantities of an asymptotically conical road at one `x`.
#[derive(Debug, Clone, Copy)]
struct BoundaryPoint {
    /// `tau`.
    tau: f64,
    /// `thetatilde`.
    theta: f64,
    /// `alpha^2 rt'^2/tau^2 - (alpha/tau)(rt'/tau)'`.
    road_op: f64,
    /// `Psi` on the boundary.
    psi: f64,
    /// Outward flux bracket `(1/(tau rt))((Psi_r - alpha Psi)(x rho' - rho) + Psi_theta (rho rho' + x)/rt)`.
    flux: f64,
}

fn boundary_point(psi: &Psi, geometry: &Geometry, x: f64) -> Result<BoundaryPoint, CertificateError> {
    let (rho, d1, d2) = geometry.eval(x);
    let (r, theta) = polar(x, rho).map_err(|e| CertificateError::Geometry(e.to_string()))?;
    let tau = (1.0 + d1 * d1).sqrt();
    let dtau = d1 * d2 / tau;
    let rp = (x + rho * d1) / r;
    let rpp = (1.0 + d1 * d1 + rho * d2) / r - (x + rho * d1).powi(2) / (r * r * r);
    let a = psi.alpha;
    // (rt'/tau)' = rt''/tau - rt' tau'/tau^2
    let road_op = a * a * rp * rp / (tau * tau) - a / tau * (rpp / tau - rp * dtau / (tau * tau));
    let v = psi.eval(r, theta);
    let flux = ((v.r - a * v.v) * (x * d1 - rho) + v.th * (rho * d1 + x) / r) / (tau * r);
    Ok(BoundaryPoint {
        tau,
        theta,
        road_op,
        psi: v.v,
        flux,
    })
}

/// Positive `x` with `rtilde(x) = target` (and likewise on the left when
/// `left` is set), by bisection on `[0, target]`.
fn x_at_radius(geometry: &Geometry, target: f64, left: bool) -> f64 {
    let m = geometry.metric();
    let sgn = if left { -1.0 } else { 1.0 };
    let f = |x: f64| m.rtilde(sgn * x) - target;
    let (mut lo, mut hi) = (0.0, target);
    if f(lo) >= 0.0 {
        return 0.0;
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    sgn * hi
}

/// Largest boundary deviation from the `(eta, eps)`-system coefficients over
/// `|x| in [x_R, 10^3 x_R]`.
fn max_deviation(psi: &Psi, geometry: &Geometry) -> Result<f64, CertificateError> {
    let target = psi.beta / (1.0 + psi.eta);
    let a2 = psi.alpha * psi.alpha;
    let mut worst: f64 = 0.0;
    for left in [false, true] {
        let x_r = x_at_radius(geometry, psi.r0, left).abs().max(1e-9);
        let sgn = if left { -1.0 } else { 1.0 };
        for x in geomspace(x_r, DEVIATION_SPAN * x_r, DEVIATION_SAMPLES) {
            let b = boundary_point(psi, geometry, sgn * x)?;
            worst = worst
                .max((b.road_op - a2).abs())
                .max((b.psi - 1.0).abs())
                .max((b.flux - target).abs());
        }
    }
    Ok(worst)
}

fn asymptotic_margins(
    psi: &Psi,
    c: f64,
    gamma: f64,
    params: &ModelParams,
    geometry: &Geometry,
    grid: GridSize,
) -> Result<(Vec<Margin>, f64), CertificateError> {
    let alpha = psi.alpha;
    let mut road = f64::INFINITY;
    let mut exchange = f64::INFINITY;
    let mut theta_max = psi.theta0;
    let mut psi_max_b = f64::NEG_INFINITY;
    for left in [false, true] {
        let sgn = if left { -1.0 } else { 1.0 };
        let x0 = x_at_radius(geometry, psi.r0, left).abs();
        let x1 = x_at_radius(geometry, 10.0 * psi.r0, left).abs();
        for x in linspace(x0, x1, grid.nr) {
            let b = boundary_point(psi, geometry, sgn * x)?;
            debug_assert!(b.tau >= 1.0);
            road = road.min(alpha * c - params.road_d * b.road_op - params.nu * gamma * b.psi + params.mu);
            exchange = exchange.min(params.d * gamma * b.flux - params.mu + params.nu * gamma * b.psi);
            theta_max = theta_max.max(b.theta.abs());
            psi_max_b = psi_max_b.max(b.psi);
        }
    }
    let thetas = theta_grid(psi.theta0, psi.r0, theta_max, grid.ntheta);
    let inside = |r: f64, t: f64| {
        let (x, y) = (r * t.sin(), r * t.cos());
        y >= geometry.rho(x)
    };
    let scan = scan_field(psi, c, params, grid.nr, &thetas, &inside);
    let floor = psi.eta / (1.0 + psi.eta);
    let margins = vec![
        Margin::pde("field", scan.field),
        Margin::pde("road", road),
        Margin::pde("exchange", exchange),
        Margin::algebraic("psi_floor", scan.psi_min.min(psi_max_b) - floor + PSI_TOL),
    ];
    Ok((margins, scan.argmin_r))
}

/// Supersolution on an asymptotically conical field.
///
/// Same construction as [`conical_supersolution`] with `theta0` taken from
/// the geometry. After `eta`, `eps` is halved from `eta` until the
/// `(eta, eps)`-system has a witness at `c_w`; `R` is doubled until the
/// cutoff conditions hold and every boundary deviation (road operator vs
/// `alpha^2`, `Psi - 1`, flux vs `beta/(1+eta)`) is at most `eps` on
/// `|x| >= x_R`. The true inequalities are then checked along the boundary
/// and on field points with `r in [R, 10R]`.
pub fn asymptotic_supersolution(
    c: f64,
    geometry: &Geometry,
    params: &ModelParams,
) -> Result<SupersolutionCertificate, CertificateError> {
    asymptotic_supersolution_on(c, geometry, params, GridSize::default())
}

/// [`asymptotic_supersolution`] on a chosen grid.
pub fn asymptotic_supersolution_on(
    c: f64,
    geometry: &Geometry,
    params: &ModelParams,
    grid: GridSize,
) -> Result<SupersolutionCertificate, CertificateError> {
    let cb = require_road_regime(params)?;
    if !(c > cb) {
        return Err(dispersion::DispersionError::NoWitness { c }.into());
    }
    let theta0 = geometry.theta0();
    let c_w = c - 0.5 * (c - cb);
    let mut eta = ETA_START;
    while perturbed_witness(c_w, eta, params).is_err() {
        if eta < 1e-6 {
            return Err(dispersion::DispersionError::NoWitness { c: c_w }.into());
        }
        eta *= 0.5;
    }
    let mut eps = eta;
    let w = loop {
        match perturbed_witness_eps(c_w, eta, eps, params) {
            Ok(w) => break w.witness,
            Err(_) if eps > 1e-9 => eps *= 0.5,
            Err(e) => return Err(e.into()),
        }
    };
    let (alpha, beta) = (w.alpha, w.beta);
    let gamma = w.gamma + alpha * (c - c_w) / (2.0 * params.nu * (1.0 + eps));
    let s = Smoothstep.sup_phi_gap();
    let mut r0 = R_START;
    loop {
        let psi = build_psi(alpha, beta, eta, r0, theta0, Smoothstep);
        if r0 >= R_CAP
            || (cutoff_conditions(alpha, beta, eta, r0, theta0, s) && max_deviation(&psi, geometry)? <= eps)
        {
            break;
        }
        r0 *= 2.0;
    }
    loop {
        let psi = build_psi(alpha, beta, eta, r0, theta0, Smoothstep);
        let (residuals, argmin) = asymptotic_margins(&psi, c, gamma, params, geometry, grid)?;
        let cert = SupersolutionCertificate::finish(SupersolutionCertificate {
            kind: SuperKind::Asymptotic,
            c,
            c_witness: c_w,
            alpha,
            beta,
            gamma,
            eta,
            eps,
            r0,
            theta0,
            amplitude: 1.0,
            cutoff: Smoothstep,
            grid,
            field_argmin_r: argmin,
            geometry: Some(geometry.clone()),
            residuals,
            valid: false,
        });
        if cert.valid || r0 >= R_CAP {
            return Ok(cert);
        }
        r0 *= 2.0;
    }
}

/// Recomputes the margins of `cert` on another grid, keeping every
/// parameter fixed.
pub fn reverify(
    cert: &SupersolutionCertificate,
    params: &ModelParams,
    grid: GridSize,
) -> Result<Vec<Margin>, CertificateError> {
    match cert.kind {
        SuperKind::Radial => Ok(radial_supersolution(cert.c, params)?.residuals),
        SuperKind::Conical => {
            let psi = cert.psi();
            Ok(conical_margins(&psi, cert.c, cert.gamma, params, grid).0)
        }
        SuperKind::Asymptotic => {
            let psi = cert.psi();
            let geometry = cert
                .geometry
                .as_ref()
                .ok_or_else(|| CertificateError::Precondition("certificate has no geometry".into()))?;
            Ok(asymptotic_margins(&psi, cert.c, cert.gamma, params, geometry, grid)?.0)
        }
    }
}

/// Boundary flux `(1/rtilde) d_theta Psi` at `x`, in the outward sense.
pub fn boundary_angular_derivative(cert: &SupersolutionCertificate, geometry: &Geometry, x: f64) -> Result<f64, CertificateError> {
    let psi = cert.psi();
    let (rho, _, _) = geometry.eval(x);
    let (r, theta) = polar(x, rho).map_err(|e| CertificateError::Geometry(e.to_string()))?;
    Ok(theta.signum() * psi.eval(r, theta).th / r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_grid_is_graded() {
        let t = theta_grid(1.0, 100.0, 1.0, 256);
        assert_eq!(*t.first().unwrap(), -1.0);
        assert_eq!(*t.last().unwrap(), 1.0);
        let layer = t.iter().filter(|x| x.abs() >= 0.9).count();
        assert!(layer >= 120, "{layer}");
    }

    #[test]
    fn x_at_radius_inverts_rtilde() {
        let g = Geometry::hyperbola(1.0);
        let x = x_at_radius(&g, 1000.0, false);
        assert!((g.metric().rtilde(x) - 1000.0).abs() < 1e-8);
        let xl = x_at_radius(&g, 1000.0, true);
        assert!((xl + x).abs() < 1e-8);
    }
}
