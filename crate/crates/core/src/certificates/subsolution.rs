//! Truncated complex subsolutions on the flattened half-plane.
//!
//! With a root `(alpha, beta, gamma1, gamma2)` of the strip system and
//! `s = x - ct`,
//!
//! ```text
//! U(s)    = Re e^{-alpha s}
//! V(s, y) = Re gamma1 (e^{-beta y} - e^{-beta (2L - y)}) e^{-alpha s}
//! ```
//!
//! and the shifted pair `(U - lambda, V + lambda phi)` is restricted to one
//! bounded positivity component on the road (`E`) and one in the field (`F`).

use std::collections::VecDeque;

use num_complex::Complex64;

use super::hump::{build_hump, DEFAULT_KAPPA};
use super::{CertificateError, Margin, SubsolutionCertificate};
use crate::dispersion::{self, critical_pair, default_seeds, solve_complex, ComplexDispersion};
use crate::geometry::Geometry;
use crate::model::ModelParams;

/// `lambda` is halved at most this many times.
pub const MAX_LAMBDA_HALVINGS: usize = 60;
/// `Lambda` is never doubled past this value.
pub const LAMBDA_CAP: f64 = 1_048_576.0;
/// Continuity tolerance at component boundaries.
const ZERO_TOL: f64 = 1e-10;
/// Road samples on `[-W, W]`.
const ROAD_SAMPLES: usize = 4096;
/// Field grid (s direction, y direction).
const FIELD_GRID: (usize, usize) = (1024, 256);

/// Selected positivity components.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    /// Road component `E = (s_left, s_right)` of `U - lambda > 0`.
    pub e: (f64, f64),
    /// `s`-extent of the field component `F`.
    pub f_s: (f64, f64),
    /// Largest `y` reached by `F`.
    pub f_y_max: f64,
    /// Grid nodes of `F`, as `(s, y)`.
    pub f_nodes: Vec<(f64, f64)>,
    /// Field grid `(ns, ny)`.
    pub grid: (usize, usize),
    /// Largest `|u_lambda|`, `|v_lambda|` at the refined component boundaries,
    /// relative to the sup of the function on its component (the overall
    /// scale of `U`, `V` is arbitrary).
    pub boundary_residual: f64,
}

/// Evaluator of the normalized `U`, `V` and their derivatives.
#[derive(Debug, Clone, Copy)]
pub struct Profile {
    alpha: Complex64,
    beta: Complex64,
    gamma1: Complex64,
    l: f64,
    scale: f64,
}

/// `V` and its derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldDerivs {
    /// `V`.
    pub v: f64,
    /// `V_x`.
    pub x: f64,
    /// `V_y`.
    pub y: f64,
    /// `V_xy`.
    pub xy: f64,
    /// `V_yy`.
    pub yy: f64,
}

impl Profile {
    pub(crate) fn new(disp: &ComplexDispersion, scale: f64) -> Self {
        Profile {
            alpha: disp.alpha,
            beta: disp.beta,
            gamma1: disp.gamma1,
            l: disp.l,
            scale,
        }
    }

    /// `(U, U_x, U_xx)` at `s`.
    pub fn road(&self, s: f64) -> (f64, f64, f64) {
        let e = (-self.alpha * s).exp() * self.scale;
        (e.re, (-self.alpha * e).re, (self.alpha * self.alpha * e).re)
    }

    /// `V` and its derivatives at `(s, y)`.
    pub fn field(&self, s: f64, y: f64) -> FieldDerivs {
        let e = (-self.alpha * s).exp() * self.scale;
        let lo = (-self.beta * y).exp();
        let hi = (-self.beta * (2.0 * self.l - y)).exp();
        let g = self.gamma1 * (lo - hi);
        let g1 = -self.beta * self.gamma1 * (lo + hi);
        FieldDerivs {
            v: (g * e).re,
            x: (-self.alpha * g * e).re,
            y: (g1 * e).re,
            xy: (-self.alpha * g1 * e).re,
            yy: (self.beta * self.beta * g * e).re,
        }
    }
}

fn bisect_zero(f: impl Fn(f64) -> f64, mut inside: f64, mut outside: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (inside + outside);
        if mid == inside || mid == outside {
            break;
        }
        if f(mid) > 0.0 {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    0.5 * (inside + outside)
}

/// Rightmost complete run of `u > 0` on the road samples, refined to the
/// zeros of `u`. Also returns the relative residual at the two zeros.
fn road_component(u: &impl Fn(f64) -> f64, w: f64) -> Option<(f64, f64, f64)> {
    let n = ROAD_SAMPLES;
    let s_at = |k: usize| -w + 2.0 * w * k as f64 / n as f64;
    let pos: Vec<bool> = (0..=n).map(|k| u(s_at(k)) > 0.0).collect();
    let mut best: Option<(usize, usize)> = None;
    let mut k = 0;
    while k <= n {
        if pos[k] {
            let start = k;
            while k < n && pos[k + 1] {
                k += 1;
            }
            if start > 0 && k < n {
                best = match best {
                    Some((bs, be)) if (be, bs) > (k, start) => Some((bs, be)),
                    _ => Some((start, k)),
                };
            }
        }
        k += 1;
    }
    let (i0, i1) = best?;
    let left = bisect_zero(u, s_at(i0), s_at(i0 - 1));
    let right = bisect_zero(u, s_at(i1), s_at(i1 + 1));
    let peak = (i0..=i1).map(|k| u(s_at(k)).abs()).fold(f64::MIN_POSITIVE, f64::max);
    let res = u(left).abs().max(u(right).abs()) / peak;
    Some((left, right, res))
}

/// Rightmost complete 4-connected component of `v > 0` on the field grid.
/// Nodes on `y = L` are excluded (`v = 0` there by construction).
fn field_component(
    v: &(impl Fn(f64, f64) -> f64 + Sync),
    w: f64,
    l: f64,
) -> Option<(Vec<(usize, usize)>, f64)> {
    let (ns, ny) = FIELD_GRID;
    let s_at = |i: usize| -w + 2.0 * w * i as f64 / ns as f64;
    let y_at = |j: usize| l * j as f64 / ny as f64;
    let idx = |i: usize, j: usize| i * ny + j;
    let mut pos = vec![false; (ns + 1) * ny];
    for i in 0..=ns {
        for j in 0..ny {
            pos[idx(i, j)] = v(s_at(i), y_at(j)) > 0.0;
        }
    }
    let mut label = vec![usize::MAX; pos.len()];
    let mut best: Option<(usize, usize, Vec<(usize, usize)>)> = None;
    let mut queue = VecDeque::new();
    let mut next = 0;
    for i0 in 0..=ns {
        for j0 in 0..ny {
            if !pos[idx(i0, j0)] || label[idx(i0, j0)] != usize::MAX {
                continue;
            }
            let mut comp = Vec::new();
            label[idx(i0, j0)] = next;
            queue.push_back((i0, j0));
            while let Some((i, j)) = queue.pop_front() {
                comp.push((i, j));
                let mut nb = Vec::with_capacity(4);
                if i > 0 {
                    nb.push((i - 1, j));
                }
                if i < ns {
                    nb.push((i + 1, j));
                }
                if j > 0 {
                    nb.push((i, j - 1));
                }
                if j + 1 < ny {
                    nb.push((i, j + 1));
                }
                for (a, b) in nb {
                    if pos[idx(a, b)] && label[idx(a, b)] == usize::MAX {
                        label[idx(a, b)] = next;
                        queue.push_back((a, b));
                    }
                }
            }
            next += 1;
            let imin = comp.iter().map(|p| p.0).min().unwrap();
            let imax = comp.iter().map(|p| p.0).max().unwrap();
            if imin == 0 || imax == ns {
                continue;
            }
            let better = match &best {
                None => true,
                Some((bmin, bmax, _)) => (imax, imin) > (*bmax, *bmin),
            };
            if better {
                best = Some((imin, imax, comp));
            }
        }
    }
    let (_, _, comp) = best?;
    let peak = comp
        .iter()
        .map(|&(i, j)| v(s_at(i), y_at(j)).abs())
        .fold(f64::MIN_POSITIVE, f64::max);
    // refine every boundary edge to the zero of v
    let mut res: f64 = 0.0;
    for &(i, j) in &comp {
        let (s, y) = (s_at(i), y_at(j));
        let mut out = Vec::with_capacity(4);
        if i > 0 && !pos[idx(i - 1, j)] {
            out.push((s_at(i - 1), y));
        }
        if i < ns && !pos[idx(i + 1, j)] {
            out.push((s_at(i + 1), y));
        }
        if j > 0 && !pos[idx(i, j - 1)] {
            out.push((s, y_at(j - 1)));
        }
        if j + 1 < ny && !pos[idx(i, j + 1)] {
            out.push((s, y_at(j + 1)));
        }
        if j + 1 == ny {
            res = res.max(v(s, l).abs());
        }
        for (so, yo) in out {
            let t = bisect_zero(|t| v(s + t * (so - s), y + t * (yo - y)), 0.0, 1.0);
            res = res.max(v(s + t * (so - s), y + t * (yo - y)).abs());
        }
    }
    Some((comp, res / peak))
}

/// Builds a subsolution certificate at speed `c` on the strip of height `l`.
///
/// The root is the first constrained root of the strip system with
/// `Im alpha > 0`. The window half-width is `W = 1.25 P + |Im beta| L / Im alpha`
/// with `P = 2 pi / Im alpha`, so that positivity bands tilted across the
/// strip fit inside. `U`, `V` are scaled so that `max |U| = 1` on the
/// rightmost complete positive interval of `U`. `lambda` is halved from `0.1 max phi` until both shifted
/// functions have a complete positivity component.
pub fn build_subsolution(
    c: f64,
    l: f64,
    params: &ModelParams,
    geometry: &Geometry,
) -> Result<SubsolutionCertificate, CertificateError> {
    dispersion::require_kpp(params)?;
    let hump = build_hump(params, DEFAULT_KAPPA);
    if !(l > hump.m) {
        return Err(CertificateError::Precondition(format!(
            "strip height L = {l} must exceed the hump support M = {}",
            hump.m
        )));
    }
    let (a_star, b_star) = critical_pair(params)?;
    let roots = solve_complex(c, l, params, &default_seeds(a_star, b_star))?;
    let disp = roots
        .iter()
        .map(|r| if r.alpha.im > 0.0 { *r } else { r.conj() })
        .find(|r| r.alpha.re > 0.0)
        .ok_or(dispersion::DispersionError::NoWitness { c })?;
    let a2 = disp.alpha.im;
    let period = 2.0 * std::f64::consts::PI / a2;
    let w = 1.25 * period + disp.beta.im.abs() * l / a2;
    // unit scale on the rightmost complete positive interval of U
    let raw = Profile::new(&disp, 1.0);
    let (r0, r1, _) = road_component(&|s: f64| raw.road(s).0, w).ok_or(CertificateError::NoComponent { halvings: 0 })?;
    let umax = (0..=512)
        .map(|k| raw.road(r0 + (r1 - r0) * k as f64 / 512.0).0.abs())
        .fold(0.0, f64::max);
    let profile = Profile::new(&disp, 1.0 / umax);
    let lambda0 = 0.1 * hump.max_value();
    for k in 0..MAX_LAMBDA_HALVINGS {
        let lambda = lambda0 * 0.5f64.powi(k as i32);
        let u = |s: f64| profile.road(s).0 - lambda;
        let v = |s: f64, y: f64| profile.field(s, y).v + lambda * hump.value(y);
        let Some((e0, e1, e_res)) = road_component(&u, w) else {
            continue;
        };
        let Some((cells, f_res)) = field_component(&v, w, l) else {
            continue;
        };
        let (ns, ny) = FIELD_GRID;
        let f_nodes: Vec<(f64, f64)> = cells
            .iter()
            .map(|&(i, j)| (-w + 2.0 * w * i as f64 / ns as f64, l * j as f64 / ny as f64))
            .collect();
        let s_min = f_nodes.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let s_max = f_nodes.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let y_max = f_nodes.iter().map(|p| p.1).fold(0.0, f64::max);
        let region = Region {
            e: (e0, e1),
            f_s: (s_min, s_max),
            f_y_max: y_max,
            f_nodes,
            grid: FIELD_GRID,
            boundary_residual: e_res.max(f_res),
        };
        return Ok(SubsolutionCertificate {
            c,
            l,
            big_lambda: None,
            w,
            lambda,
            scale: 1.0 / umax,
            hump,
            disp,
            region,
            geometry: geometry.name().to_string(),
            residuals: Vec::new(),
            valid: false,
        });
    }
    Err(CertificateError::NoComponent {
        halvings: MAX_LAMBDA_HALVINGS,
    })
}

/// Suprema of the road metric terms over `s >= Lambda`, in the frame where
/// the right branch of the limiting cone is the horizontal axis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RoadSups {
    /// `sup p^2`.
    pub p2: f64,
    /// `sup |p|`.
    pub p: f64,
    /// `sup |p'|`.
    pub dp: f64,
    /// `sup |1/tau^2 - 1|`.
    pub inv_tau2: f64,
    /// `sup |tau'/tau^3|`.
    pub dtau: f64,
    /// `sup |p/tau|`.
    pub p_over_tau: f64,
    /// `sup |tau - 1|`.
    pub tau_minus_1: f64,
    /// `inf tau`.
    pub inf_tau: f64,
}

/// Samples the road on `s >= Lambda` (geometric spacing up to `10^4 max(Lambda, 1)`).
///
/// For slope `a` the road is rotated so that the line `y = a x` becomes the
/// axis: a point `(x, rho)` maps to `s = (x + a rho)/k`, `n = (rho - a x)/k`
/// with `k = sqrt(1 + a^2)`, giving `p = dn/ds = (rho' - a)/(1 + a rho')` and
/// `dp/ds = rho'' k^3 / (1 + a rho')^3`.
pub fn road_sups(geometry: &Geometry, big_lambda: f64) -> Result<RoadSups, CertificateError> {
    let a = geometry.a();
    let k = (1.0 + a * a).sqrt();
    let x_lo = 0.25 * big_lambda.max(1e-6) / k;
    let x_hi = 1e4 * big_lambda.max(1.0);
    let n = 8192;
    let mut out = RoadSups {
        inf_tau: f64::INFINITY,
        ..Default::default()
    };
    let mut seen = false;
    for j in 0..=n {
        let x = x_lo * (x_hi / x_lo).powf(j as f64 / n as f64);
        let (rho, d1, d2) = geometry.eval(x);
        if (x + a * rho) / k < big_lambda {
            continue;
        }
        let den = 1.0 + a * d1;
        if !(den > 0.0) {
            return Err(CertificateError::Unsupported(format!(
                "road is not a graph over its asymptote at x = {x}"
            )));
        }
        seen = true;
        let p = (d1 - a) / den;
        let dp = d2 * k * k * k / (den * den * den);
        let tau = (1.0 + p * p).sqrt();
        let dtau = p * dp / tau;
        out.p2 = out.p2.max(p * p);
        out.p = out.p.max(p.abs());
        out.dp = out.dp.max(dp.abs());
        out.inv_tau2 = out.inv_tau2.max((1.0 / (tau * tau) - 1.0).abs());
        out.dtau = out.dtau.max((dtau / (tau * tau * tau)).abs());
        out.p_over_tau = out.p_over_tau.max((p / tau).abs());
        out.tau_minus_1 = out.tau_minus_1.max(tau - 1.0);
        out.inf_tau = out.inf_tau.min(tau);
    }
    if !seen {
        return Err(CertificateError::Unsupported("no road samples beyond Lambda".into()));
    }
    Ok(out)
}

/// Suprema of `|U_x|`, `|U_xx|` on `E`, of the `V` derivatives on `F` and of
/// `|V_x|`, `|V_y|` on `E x {0}`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProfileSups {
    /// `sup_E |U_x|`.
    pub ux: f64,
    /// `sup_E |U_xx|`.
    pub uxx: f64,
    /// `sup_F |V_y|`.
    pub vy: f64,
    /// `sup_F |V_xy|`.
    pub vxy: f64,
    /// `sup_F |V_yy|`.
    pub vyy: f64,
    /// `sup_E |V_x(., 0)|`.
    pub vx0: f64,
    /// `sup_E |V_y(., 0)|`.
    pub vy0: f64,
}

fn profile_sups(cert: &SubsolutionCertificate) -> ProfileSups {
    let p = cert.profile();
    let mut out = ProfileSups::default();
    let (e0, e1) = cert.region.e;
    for k in 0..=512 {
        let s = e0 + (e1 - e0) * k as f64 / 512.0;
        let (_, ux, uxx) = p.road(s);
        let f0 = p.field(s, 0.0);
        out.ux = out.ux.max(ux.abs());
        out.uxx = out.uxx.max(uxx.abs());
        out.vx0 = out.vx0.max(f0.x.abs());
        out.vy0 = out.vy0.max(f0.y.abs());
    }
    for &(s, y) in &cert.region.f_nodes {
        let f = p.field(s, y);
        out.vy = out.vy.max(f.y.abs());
        out.vxy = out.vxy.max(f.xy.abs());
        out.vyy = out.vyy.max(f.yy.abs());
    }
    out
}

/// The three perturbation bounds at one `Lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationBounds {
    /// Bound on `sup_E (P1_tau - P1_0) U`.
    pub eps1: f64,
    /// Bound on `sup_F (P2_A - P2_I) V`.
    pub eps2: f64,
    /// Bound on `sup_E (B_{A,tau} - B_{I,0}) V`.
    pub eps3: f64,
    /// Lower bound of `g phi + d div(A grad phi)` on `(0, M)`.
    pub hump_lower: f64,
    /// `inf tau` over the road.
    pub inf_tau: f64,
}

/// Evaluates the perturbation bounds of `cert` for roads beyond `big_lambda`.
///
/// ```text
/// eps1 = D (sup|1/tau^2 - 1| sup|U_xx| + sup|tau'/tau^3| sup|U_x|)
/// eps2 = d (sup p^2 sup|V_yy| + 2 sup|p| sup|V_xy| + sup|p'| sup|V_y|)
/// eps3 = d (sup|p/tau| sup|V_x(.,0)| + sup|tau - 1| sup|V_y(.,0)|)
/// ```
pub fn perturbation_bounds(
    cert: &SubsolutionCertificate,
    params: &ModelParams,
    geometry: &Geometry,
    big_lambda: f64,
) -> Result<PerturbationBounds, CertificateError> {
    let g = road_sups(geometry, big_lambda)?;
    let p = profile_sups(cert);
    let (d, big_d) = (params.d, params.road_d);
    let h = &cert.hump;
    Ok(PerturbationBounds {
        eps1: big_d * (g.inv_tau2 * p.uxx + g.dtau * p.ux),
        eps2: d * (g.p2 * p.vyy + 2.0 * g.p * p.vxy + g.dp * p.vy),
        eps3: d * (g.p_over_tau * p.vx0 + g.tau_minus_1 * p.vy0),
        hump_lower: 1.0 + h.kappa - d * (g.p2 * h.sup_d2() + g.dp * h.sup_d1()),
        inf_tau: g.inf_tau,
    })
}

fn margins_at(cert: &SubsolutionCertificate, params: &ModelParams, b: &PerturbationBounds) -> Vec<Margin> {
    let lam = cert.lambda;
    let (mu, d) = (params.mu, params.d);
    vec![
        Margin::pde("road_perturbation", mu * lam - b.eps1),
        Margin::pde("field_perturbation", lam - b.eps2),
        Margin::pde("hump_lower_bound", b.hump_lower - 1.0),
        Margin::pde(
            "exchange_perturbation",
            -mu * lam + d * lam * b.inf_tau * cert.hump.slope_at_zero() - b.eps3,
        ),
        Margin::algebraic("hump_identity", ZERO_TOL - cert.hump.identity_residual(1000)),
        Margin::algebraic("truncation", ZERO_TOL - cert.region.boundary_residual),
        Margin::algebraic(
            "root_residual",
            dispersion::ROOT_RESIDUAL - cert.disp.max_residual(params),
        ),
    ]
}

/// Verifies the perturbation inequalities, doubling `Lambda` from
/// `lambda_init` until they hold or `Lambda` exceeds `2^20`.
///
/// Roads with `a != 0` are handled in the frame of their right asymptote;
/// asymmetric roads with `a != 0` are rejected as unsupported.
pub fn verify_subsolution(
    cert: &SubsolutionCertificate,
    params: &ModelParams,
    geometry: &Geometry,
    lambda_init: f64,
) -> Result<SubsolutionCertificate, CertificateError> {
    if !(lambda_init > 0.0 && lambda_init.is_finite()) {
        return Err(CertificateError::Precondition(format!("Lambda_init = {lambda_init} must be > 0")));
    }
    if geometry.a() != 0.0 && !geometry.is_even() {
        return Err(CertificateError::Unsupported(format!(
            "asymmetric road `{}` with a = {} is not covered by subsolution certificates",
            geometry.name(),
            geometry.a()
        )));
    }
    let mut big_lambda = lambda_init;
    loop {
        let b = perturbation_bounds(cert, params, geometry, big_lambda)?;
        let residuals = margins_at(cert, params, &b);
        let valid = residuals.iter().all(|m| m.value >= 0.0);
        if valid || big_lambda >= LAMBDA_CAP {
            let mut out = cert.clone();
            out.big_lambda = Some(big_lambda);
            out.geometry = geometry.name().to_string();
            out.residuals = residuals;
            out.valid = valid;
            return Ok(out);
        }
        big_lambda *= 2.0;
    }
}
