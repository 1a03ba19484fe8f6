//! Real dispersion systems and the critical speed `c_BRR`.
//!
//! For exponential profiles `u = e^{-alpha(x - ct)}`, `v = gamma e^{-alpha(x - ct) - beta y}`
//! the linearized system becomes, with perturbation parameters `eta, eps >= 0`,
//!
//! ```text
//! -D alpha^2 + c alpha - D eps         = nu gamma (1 + eps) - mu
//! -d alpha^2 + c alpha                 = f'(0) + d beta^2
//! d gamma (beta / (1 + eta) - eps)     = mu - nu gamma (1 - eps)
//! ```
//!
//! `eta = eps = 0` is the base system. The second equation is the circle
//! `(alpha - c/2d)^2 + beta^2 = (c^2 - 4 d f'(0)) / 4d^2`.

use super::DispersionError;
use crate::model::ModelParams;

/// Grid size of the first scan over `alpha`.
const SCAN_POINTS: usize = 2048;

/// A solution `(c, alpha, beta, gamma)` of the real system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealDispersion {
    /// Speed.
    pub c: f64,
    /// Decay rate along the road.
    pub alpha: f64,
    /// Transverse rate.
    pub beta: f64,
    /// Field over road amplitude ratio.
    pub gamma: f64,
    /// Perturbation of the exchange equation.
    pub eta: f64,
    /// Perturbation of the boundary terms.
    pub eps: f64,
}

impl RealDispersion {
    /// Residuals of the road, circle and exchange equations.
    pub fn residuals(&self, p: &ModelParams) -> [f64; 3] {
        let RealDispersion {
            c,
            alpha: a,
            beta: b,
            gamma: g,
            eta,
            eps,
        } = *self;
        [
            -p.road_d * a * a + c * a - p.road_d * eps - p.nu * g * (1.0 + eps) + p.mu,
            -p.d * a * a + c * a - p.fprime0 - p.d * b * b,
            p.d * g * (b / (1.0 + eta) - eps) - p.mu + p.nu * g * (1.0 - eps),
        ]
    }

    /// Largest absolute residual.
    pub fn max_residual(&self, p: &ModelParams) -> f64 {
        self.residuals(p).iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Classical speed `2 sqrt(d f'(0))`.
pub fn c_kpp(params: &ModelParams) -> f64 {
    2.0 * (params.d * params.fprime0).sqrt()
}

/// The two roots `(alpha-, alpha+)` of the road equation at fixed `beta`,
/// with `gamma` eliminated through the exchange equation.
///
/// Returns `None` when the discriminant is negative or when the exchange
/// equation forces `gamma <= 0`.
pub fn curve_alpha(c: f64, beta: f64, eta: f64, eps: f64, params: &ModelParams) -> Option<(f64, f64)> {
    let ModelParams {
        d,
        road_d: big_d,
        mu,
        nu,
        ..
    } = *params;
    let den = d * beta - d * eps * (1.0 + eta) + nu * (1.0 - eps) * (1.0 + eta);
    if den <= 0.0 {
        return None;
    }
    let gamma = mu * (1.0 + eta) / den;
    let disc = c * c - 4.0 * big_d * big_d * eps + 4.0 * big_d * (mu - nu * gamma * (1.0 + eps));
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some(((c - s) / (2.0 * big_d), (c + s) / (2.0 * big_d)))
}

/// The two `alpha` values of the circle at height `beta`, or `None` when
/// `c < c_KPP` or `|beta|` exceeds the radius.
pub fn circle_alpha(c: f64, beta: f64, params: &ModelParams) -> Option<(f64, f64)> {
    let d = params.d;
    let r2 = (c * c - 4.0 * d * params.fprime0) / (4.0 * d * d);
    if r2 < 0.0 {
        return None;
    }
    let h2 = r2 - beta * beta;
    if h2 < 0.0 {
        return None;
    }
    let h = h2.sqrt();
    let m = c / (2.0 * d);
    Some((m - h, m + h))
}

/// The system restricted to `alpha`: road equation gives `gamma`, exchange
/// equation gives `beta`, and `h` is the circle defect.
struct AlphaSection<'a> {
    c: f64,
    eta: f64,
    eps: f64,
    p: &'a ModelParams,
    centre: f64,
    r2: f64,
}

impl AlphaSection<'_> {
    fn gamma(&self, a: f64) -> f64 {
        let p = self.p;
        (p.mu + self.c * a - p.road_d * a * a - p.road_d * self.eps) / (p.nu * (1.0 + self.eps))
    }

    fn beta(&self, g: f64) -> f64 {
        let p = self.p;
        (1.0 + self.eta) * ((p.mu - p.nu * g * (1.0 - self.eps)) / (p.d * g) + self.eps)
    }

    fn h(&self, a: f64) -> f64 {
        let g = self.gamma(a);
        if g <= 0.0 {
            return f64::INFINITY;
        }
        let b = self.beta(g);
        (a - self.centre).powi(2) + b * b - self.r2
    }

    fn witness(&self, a: f64) -> RealDispersion {
        let g = self.gamma(a);
        RealDispersion {
            c: self.c,
            alpha: a,
            beta: self.beta(g),
            gamma: g,
            eta: self.eta,
            eps: self.eps,
        }
    }
}

/// Minimizes `f` on `[lo, hi]` by a grid scan, two local rescans and a
/// golden-section polish around the best point.
fn scan_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let mut a = lo;
    let mut b = hi;
    let mut best = (lo, f(lo));
    for _ in 0..3 {
        let step = (b - a) / SCAN_POINTS as f64;
        for k in 0..=SCAN_POINTS {
            let x = a + step * k as f64;
            let v = f(x);
            if v < best.1 {
                best = (x, v);
            }
        }
        a = (best.0 - 2.0 * step).max(lo);
        b = (best.0 + 2.0 * step).min(hi);
    }
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (b - g * (b - a), a + g * (b - a));
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    for (x, v) in [(x1, f1), (x2, f2)] {
        if v < best.1 {
            best = (x, v);
        }
    }
    best
}

/// Bisection for a sign change of `f` between `lo` (f <= 0) and `hi` (f > 0).
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Intersection of the road-exchange curve with the circle at speed `c`.
///
/// The search runs over `alpha` on the circle's range. Each `alpha` fixes
/// `gamma` (road equation) and then `beta` (exchange equation); a witness
/// exists exactly when the circle defect changes sign. Among the crossings the
/// one with the largest `alpha` and `beta > 0` is returned when available.
pub fn intersection_witness(
    c: f64,
    eta: f64,
    eps: f64,
    params: &ModelParams,
) -> Result<Option<RealDispersion>, DispersionError> {
    super::require_kpp(params)?;
    let ck = c_kpp(params);
    if !(c >= ck) {
        return Err(DispersionError::BelowKpp { c, c_kpp: ck });
    }
    if !(eta >= 0.0 && eps >= 0.0 && eps < 1.0) {
        return Err(DispersionError::BadPerturbation { eta, eps });
    }
    let d = params.d;
    let big_d = params.road_d;
    let centre = c / (2.0 * d);
    let r2 = ((c * c - 4.0 * d * params.fprime0) / (4.0 * d * d)).max(0.0);
    let r = r2.sqrt();
    let sec = AlphaSection {
        c,
        eta,
        eps,
        p: params,
        centre,
        r2,
    };
    // gamma > 0 below the positive root of D a^2 - c a - mu + D eps = 0
    let q = c * c + 4.0 * big_d * (params.mu - big_d * eps);
    let gamma_zero = if q >= 0.0 {
        (c + q.sqrt()) / (2.0 * big_d)
    } else {
        return Ok(None);
    };
    let lo = centre - r;
    let hi = (centre + r).min(gamma_zero * (1.0 - 1e-15));
    if hi < lo {
        return Ok(None);
    }
    if r == 0.0 || hi - lo <= 1e-15 * centre {
        let w = sec.witness(lo);
        return Ok((w.gamma > 0.0 && sec.h(lo).abs() <= 1e-12).then_some(w));
    }
    let hfun = |a: f64| sec.h(a);
    let (amin, hmin) = scan_min(hfun, lo, hi);
    if hmin > 0.0 {
        return Ok(None);
    }
    let right = bisect(hfun, amin, hi);
    let w = sec.witness(right);
    if w.beta > 0.0 {
        return Ok(Some(w));
    }
    // crossing left of the minimum
    let left = bisect(|a| hfun(-a), -amin, -lo);
    let wl = sec.witness(-left);
    Ok(Some(if wl.beta > 0.0 { wl } else { w }))
}

/// Road-enhanced speed: the smallest `c` for which the base system has a
/// solution, or `c_KPP` when `D <= 2d`.
pub fn c_brr(params: &ModelParams, tol: f64) -> Result<f64, DispersionError> {
    super::require_kpp(params)?;
    if !(tol > 0.0) {
        return Err(DispersionError::BadTolerance(tol));
    }
    let ck = c_kpp(params);
    if params.road_d <= 2.0 * params.d {
        return Ok(ck);
    }
    let exists = |c: f64| -> Result<bool, DispersionError> {
        if c < ck {
            return Ok(false);
        }
        Ok(intersection_witness(c, 0.0, 0.0, params)?.is_some())
    };
    let mut lo = ck;
    let mut hi = ck;
    loop {
        hi *= 2.0;
        if exists(hi)? {
            break;
        }
        lo = hi;
        if hi > 1024.0 * ck {
            return Err(DispersionError::NoWitness { c: hi });
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if exists(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if !exists(hi + 2.0 * tol)? || exists(hi - 2.0 * tol)? {
        return Err(DispersionError::NonMonotone { c: hi, tol });
    }
    Ok(hi)
}

/// Witness of the `eta`-perturbed system with its distance to the
/// unperturbed witness at the same speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbedWitness {
    /// Solution of the perturbed system.
    pub witness: RealDispersion,
    /// `|alpha(eta) - alpha(0)|`.
    pub alpha_gap: f64,
    /// `|beta(eta) - beta(0)|`.
    pub beta_gap: f64,
}

/// Solution of the `eta`-system (`eps = 0`) at speed `c`.
pub fn perturbed_witness(c: f64, eta: f64, params: &ModelParams) -> Result<PerturbedWitness, DispersionError> {
    perturbed_witness_eps(c, eta, 0.0, params)
}

/// Solution of the `(eta, eps)`-system at speed `c`.
pub fn perturbed_witness_eps(
    c: f64,
    eta: f64,
    eps: f64,
    params: &ModelParams,
) -> Result<PerturbedWitness, DispersionError> {
    let base = intersection_witness(c, 0.0, 0.0, params)?.ok_or(DispersionError::NoWitness { c })?;
    let witness = intersection_witness(c, eta, eps, params)?.ok_or(DispersionError::NoWitness { c })?;
    if !(witness.alpha > 0.0 && witness.beta > 0.0 && witness.gamma > 0.0) {
        return Err(DispersionError::NoWitness { c });
    }
    Ok(PerturbedWitness {
        witness,
        alpha_gap: (witness.alpha - base.alpha).abs(),
        beta_gap: (witness.beta - base.beta).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(big_d: f64) -> ModelParams {
        ModelParams::logistic(1.0, big_d, 1.0, 1.0).unwrap()
    }

    #[test]
    fn kpp_speed() {
        assert_eq!(c_kpp(&params(1.0)), 2.0);
        let p = ModelParams::logistic(4.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(c_kpp(&p), 4.0);
    }

    #[test]
    fn curve_at_zero_beta() {
        let p = params(3.0);
        let (lo, hi) = curve_alpha(2.5, 0.0, 0.0, 0.0, &p).unwrap();
        assert!(lo.abs() < 1e-15 && (hi - 2.5 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn circle_degenerate_at_kpp() {
        let p = params(1.0);
        assert_eq!(circle_alpha(2.0, 0.0, &p), Some((1.0, 1.0)));
        assert_eq!(circle_alpha(1.0, 0.0, &p), None);
        assert_eq!(circle_alpha(2.5, 1.0, &p), None);
    }

    #[test]
    fn below_kpp_is_an_error() {
        assert!(matches!(
            intersection_witness(1.9, 0.0, 0.0, &params(4.0)),
            Err(DispersionError::BelowKpp { .. })
        ));
    }

    #[test]
    fn early_return_when_road_is_slow() {
        assert_eq!(c_brr(&params(1.0), 1e-8).unwrap(), 2.0);
        assert_eq!(c_brr(&params(2.0), 1e-8).unwrap(), 2.0);
    }

    #[test]
    fn witness_satisfies_base_system() {
        let p = params(4.0);
        let w = intersection_witness(2.4, 0.0, 0.0, &p).unwrap().unwrap();
        assert!(w.max_residual(&p) <= 1e-10);
        assert!((w.gamma - p.mu / (p.nu + p.d * w.beta)).abs() <= 1e-12);
        assert!(w.alpha > 0.0 && w.beta > 0.0);
    }
}
