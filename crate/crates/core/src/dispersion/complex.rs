//! Complex dispersion system on a strip of height `L` and the speed `c_L`.
//!
//! With `U = Re e^{-alpha s}` on the road and
//! `V = Re (gamma1 e^{-beta y} + gamma2 e^{beta y}) e^{-alpha s}` in the strip,
//! `s = x - ct`, the linearized penalized system reduces to
//!
//! ```text
//! z1 = alpha c - D alpha^2 - nu (gamma1 + gamma2) + mu
//! z2 = alpha c - d (alpha^2 + beta^2) - (f'(0) - delta)
//! z3 = d beta (gamma1 - gamma2) - mu + nu (gamma1 + gamma2)
//! z4 = gamma1 e^{-beta L} + gamma2 e^{beta L}
//! ```
//!
//! `z3` is the Robin condition `-d V_y = mu U - nu V` at `y = 0` and `z4` the
//! Dirichlet condition at `y = L`.

use num_complex::Complex64;

use super::real::{c_brr, c_kpp, intersection_witness};
use super::DispersionError;
use crate::model::ModelParams;

/// Acceptance threshold on the four residuals.
pub const ROOT_RESIDUAL: f64 = 1e-10;
/// Minimal `|Im alpha|`, `|Im beta|` of an accepted root.
pub const MIN_IMAG: f64 = 1e-8;
/// Roots closer than this are merged.
pub const DEDUP_TOL: f64 = 1e-8;

const NEWTON_ITERS: usize = 200;

/// A root `(alpha, beta, gamma1, gamma2)` of the z-system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexDispersion {
    /// Speed.
    pub c: f64,
    /// Strip height.
    pub l: f64,
    /// Complex decay rate along the road.
    pub alpha: Complex64,
    /// Complex transverse rate.
    pub beta: Complex64,
    /// Amplitude of `e^{-beta y}`.
    pub gamma1: Complex64,
    /// Amplitude of `e^{beta y}`.
    pub gamma2: Complex64,
}

impl ComplexDispersion {
    /// Field amplitude profile `gamma1 e^{-beta y} + gamma2 e^{beta y}`.
    pub fn gamma_at(&self, y: f64) -> Complex64 {
        self.gamma1 * (-self.beta * y).exp() + self.gamma2 * (self.beta * y).exp()
    }

    /// Componentwise complex conjugate.
    pub fn conj(&self) -> Self {
        ComplexDispersion {
            alpha: self.alpha.conj(),
            beta: self.beta.conj(),
            gamma1: self.gamma1.conj(),
            gamma2: self.gamma2.conj(),
            ..*self
        }
    }

    /// Largest `|z_i|`.
    pub fn max_residual(&self, params: &ModelParams) -> f64 {
        z_residuals(self, params).iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

/// The four residuals `z1..z4`, evaluated directly.
pub fn z_residuals(sol: &ComplexDispersion, params: &ModelParams) -> [Complex64; 4] {
    let ModelParams {
        d,
        road_d: big_d,
        mu,
        nu,
        ..
    } = *params;
    let g = params.penalized_growth();
    let (a, b, g1, g2, c) = (sol.alpha, sol.beta, sol.gamma1, sol.gamma2, sol.c);
    let z1 = a * c - a * a * big_d - (g1 + g2) * nu + mu;
    let z2 = a * c - (a * a + b * b) * d - g;
    let z3 = b * d * (g1 - g2) - mu + (g1 + g2) * nu;
    let z4 = g1 * (-b * sol.l).exp() + g2 * (b * sol.l).exp();
    [z1, z2, z3, z4]
}

/// `gamma1, gamma2` solving `z3 = z4 = 0` for given `beta`.
fn gammas(beta: Complex64, l: f64, params: &ModelParams) -> (Complex64, Complex64) {
    let e = (-beta * (2.0 * l)).exp();
    let one = Complex64::new(1.0, 0.0);
    let g1 = params.mu / (beta * params.d * (one + e) + (one - e) * params.nu);
    (g1, -g1 * e)
}

/// Reduced residual `(z1, z2)` and its Jacobian in `(alpha, beta)`.
fn reduced(
    a: Complex64,
    b: Complex64,
    c: f64,
    l: f64,
    params: &ModelParams,
) -> ([Complex64; 2], [[Complex64; 2]; 2]) {
    let ModelParams {
        d,
        road_d: big_d,
        mu,
        nu,
        ..
    } = *params;
    let t = (b * l).tanh();
    let den = b * d + t * nu;
    let z1 = a * c - a * a * big_d + b * (mu * d) / den;
    let z2 = a * c - (a * a + b * b) * d - params.penalized_growth();
    let sech2 = Complex64::new(1.0, 0.0) - t * t;
    let dz1_db = (t - b * l * sech2) * (mu * d * nu) / (den * den);
    let jac = [
        [Complex64::new(c, 0.0) - a * (2.0 * big_d), dz1_db],
        [Complex64::new(c, 0.0) - a * (2.0 * d), -b * (2.0 * d)],
    ];
    ([z1, z2], jac)
}

fn newton(
    mut a: Complex64,
    mut b: Complex64,
    c: f64,
    l: f64,
    params: &ModelParams,
) -> Option<(Complex64, Complex64)> {
    for _ in 0..NEWTON_ITERS {
        let ([f1, f2], [[j11, j12], [j21, j22]]) = reduced(a, b, c, l, params);
        let det = j11 * j22 - j12 * j21;
        if det.norm() == 0.0 || !det.is_finite() {
            return None;
        }
        let mut da = (f1 * j22 - f2 * j12) / det;
        let mut db = (j11 * f2 - j21 * f1) / det;
        let size = (da.norm_sqr() + db.norm_sqr()).sqrt();
        let cap = 1.0 + (a.norm_sqr() + b.norm_sqr()).sqrt();
        if size > cap {
            da *= cap / size;
            db *= cap / size;
        }
        a -= da;
        b -= db;
        if !(a.is_finite() && b.is_finite()) {
            return None;
        }
        if size <= 1e-15 * cap {
            break;
        }
    }
    Some((a, b))
}

/// Default Newton seeds around a real pair `(alpha*, beta*)`:
/// every combination of `alpha* (1 ± i s)` and `beta* (1 ± i s)` for
/// `s` in `{0.1, 0.5, 1, 2}`.
pub fn default_seeds(alpha_star: f64, beta_star: f64) -> Vec<(Complex64, Complex64)> {
    let scales = [0.1, 0.5, 1.0, 2.0];
    let mut alphas = Vec::with_capacity(8);
    let mut betas = Vec::with_capacity(8);
    for s in scales {
        for sg in [1.0, -1.0] {
            alphas.push(Complex64::new(alpha_star, sg * s * alpha_star));
            betas.push(Complex64::new(beta_star, sg * s * beta_star));
        }
    }
    let mut seeds = Vec::with_capacity(64);
    for &a in &alphas {
        for &b in &betas {
            seeds.push((a, b));
        }
    }
    seeds
}

/// Real critical pair used to seed the complex search: the tangency point of
/// the penalized base system at its critical speed.
pub fn critical_pair(params: &ModelParams) -> Result<(f64, f64), DispersionError> {
    let pen = params.penalized();
    let cb = c_brr(&pen, 1e-10)?;
    let w = intersection_witness(cb, 0.0, 0.0, &pen)?.ok_or(DispersionError::NoWitness { c: cb })?;
    let beta = if w.beta > 0.0 { w.beta } else { 0.1 * w.alpha };
    Ok((w.alpha, beta))
}

/// Constrained roots of the z-system at speed `c`, found by Newton iteration
/// from each seed.
///
/// Accepted roots have `Re beta > 0`, `|Im alpha|, |Im beta| >= 1e-8` and all
/// residuals at most `1e-10`. The result is sorted by `(Re beta, Re alpha,
/// Im alpha, Im beta)` and deduplicated.
pub fn solve_complex(
    c: f64,
    l: f64,
    params: &ModelParams,
    seeds: &[(Complex64, Complex64)],
) -> Result<Vec<ComplexDispersion>, DispersionError> {
    super::require_kpp(params)?;
    if !(l > 0.0 && l.is_finite()) {
        return Err(DispersionError::BadHeight(l));
    }
    let mut roots: Vec<ComplexDispersion> = seeds
        .iter()
        .filter_map(|&(a0, b0)| {
            let (a, b) = newton(a0, b0, c, l, params)?;
            let (g1, g2) = gammas(b, l, params);
            let sol = ComplexDispersion {
                c,
                l,
                alpha: a,
                beta: b,
                gamma1: g1,
                gamma2: g2,
            };
            let ok = b.re > 0.0
                && a.im.abs() >= MIN_IMAG
                && b.im.abs() >= MIN_IMAG
                && sol.max_residual(params) <= ROOT_RESIDUAL;
            ok.then_some(sol)
        })
        .collect();
    roots.sort_by(|p, q| {
        (p.beta.re, p.alpha.re, p.alpha.im, p.beta.im)
            .partial_cmp(&(q.beta.re, q.alpha.re, q.alpha.im, q.beta.im))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out: Vec<ComplexDispersion> = Vec::with_capacity(roots.len());
    for r in roots {
        let dup = out.iter().any(|q| {
            (q.alpha - r.alpha).norm() <= DEDUP_TOL && (q.beta - r.beta).norm() <= DEDUP_TOL
        });
        if !dup {
            out.push(r);
        }
    }
    Ok(out)
}

/// Critical speed of the strip: the supremum of the speeds below `c_BRR` at
/// which constrained complex roots exist, within `tol`.
///
/// The speeds refer to the penalized growth `f'(0) - delta`.
pub fn c_l(l: f64, params: &ModelParams, tol: f64) -> Result<f64, DispersionError> {
    super::require_kpp(params)?;
    if !(tol > 0.0) {
        return Err(DispersionError::BadTolerance(tol));
    }
    let pen = params.penalized();
    let ck = c_kpp(&pen);
    let cb = c_brr(&pen, (0.01 * tol).max(1e-14))?;
    if cb <= ck {
        return Err(DispersionError::NoRoadRegime);
    }
    let (a_star, b_star) = critical_pair(params)?;
    let seeds = default_seeds(a_star, b_star);
    let has_roots = |c: f64| -> Result<bool, DispersionError> { Ok(!solve_complex(c, l, params, &seeds)?.is_empty()) };
    const GRID: usize = 64;
    let mut upper = cb;
    let mut lower = None;
    for k in 1..GRID {
        let c = cb - (cb - ck) * k as f64 / GRID as f64;
        if has_roots(c)? {
            lower = Some(c);
            break;
        }
        upper = c;
    }
    let mut lo = lower.ok_or(DispersionError::HeightTooSmall(l))?;
    let mut hi = upper;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if has_roots(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if !has_roots(lo - 2.0 * tol)? || has_roots(lo + 2.0 * tol)? {
        return Err(DispersionError::NonMonotone { c: lo, tol });
    }
    if !(ck < lo && lo < cb) {
        return Err(DispersionError::NonMonotone { c: lo, tol });
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams::logistic(1.0, 4.0, 1.0, 1.0).unwrap().with_delta(0.0).unwrap()
    }

    #[test]
    fn z4_vanishes_by_elimination() {
        let p = params();
        let b = Complex64::new(0.3, 0.2);
        let (g1, g2) = gammas(b, 20.0, &p);
        let sol = ComplexDispersion {
            c: 2.1,
            l: 20.0,
            alpha: Complex64::new(0.5, 0.1),
            beta: b,
            gamma1: g1,
            gamma2: g2,
        };
        let z = z_residuals(&sol, &p);
        assert!(z[2].norm() < 1e-15 && z[3].norm() < 1e-15);
    }

    #[test]
    fn zero_inputs() {
        let p = ModelParams::logistic(1.0, 4.0, 1.0, 1.0).unwrap();
        let zero = Complex64::new(0.0, 0.0);
        let sol = ComplexDispersion {
            c: 2.0,
            l: 1.0,
            alpha: zero,
            beta: zero,
            gamma1: zero,
            gamma2: zero,
        };
        let z = z_residuals(&sol, &p);
        assert_eq!(z[1], Complex64::new(-(1.0 - 0.05), 0.0));
        assert_eq!(z[2], Complex64::new(-1.0, 0.0));
    }

    #[test]
    fn jacobian_matches_differences() {
        let p = params();
        let (a, b) = (Complex64::new(0.6, 0.07), Complex64::new(0.13, 0.26));
        let (_, j) = reduced(a, b, 2.15, 20.0, &p);
        let h = 1e-6;
        let (fa, _) = reduced(a + h, b, 2.15, 20.0, &p);
        let (fb, _) = reduced(a, b + h, 2.15, 20.0, &p);
        let (f0, _) = reduced(a - h, b, 2.15, 20.0, &p);
        let (g0, _) = reduced(a, b - h, 2.15, 20.0, &p);
        for r in 0..2 {
            assert!(((fa[r] - f0[r]) / (2.0 * h) - j[r][0]).norm() < 1e-7);
            assert!(((fb[r] - g0[r]) / (2.0 * h) - j[r][1]).norm() < 1e-7);
        }
    }
}
