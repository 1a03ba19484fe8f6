//! Angular profile `Psi(r, theta)` of the conical supersolutions.

use super::cutoff::Smoothstep;

/// `Psi` and its partial derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiValue {
    /// `Psi`.
    pub v: f64,
    /// `d Psi / dr`.
    pub r: f64,
    /// `d^2 Psi / dr^2`.
    pub rr: f64,
    /// `d Psi / dtheta`.
    pub th: f64,
    /// `d^2 Psi / dtheta^2`.
    pub thth: f64,
}

/// `Psi(r, theta) = (phi(k q + 1) e^{beta r q} + eta) / (1 + eta)` with
/// `q = |theta| - theta0` and `k = sqrt(R) / theta0`.
///
/// `Psi = 1` on `|theta| = theta0` and `Psi = eta/(1+eta)` for
/// `|theta| <= theta0 (1 - 1/sqrt(R))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psi {
    /// Decay rate used by [`Psi::tilde_laplacian`].
    pub alpha: f64,
    /// Angular growth rate.
    pub beta: f64,
    /// Floor parameter.
    pub eta: f64,
    /// Inner radius `R`.
    pub r0: f64,
    /// Half-angle.
    pub theta0: f64,
    /// Cutoff.
    pub cutoff: Smoothstep,
}

/// Builds `Psi`; see [`Psi`].
///
/// # Panics
///
/// Panics unless `beta > 0`, `0 < eta < 1`, `R > 0` and `theta0 > 0`.
pub fn build_psi(alpha: f64, beta: f64, eta: f64, r0: f64, theta0: f64, cutoff: Smoothstep) -> Psi {
    assert!(beta > 0.0, "beta must be positive");
    assert!(eta > 0.0 && eta < 1.0, "eta must lie in (0, 1)");
    assert!(r0 > 0.0 && theta0 > 0.0, "R and theta0 must be positive");
    Psi {
        alpha,
        beta,
        eta,
        r0,
        theta0,
        cutoff,
    }
}

impl Psi {
    /// Cutoff slope `sqrt(R) / theta0`.
    pub fn k(&self) -> f64 {
        self.r0.sqrt() / self.theta0
    }

    /// Value and partials at `(r, theta)`.
    #[inline]
    pub fn eval(&self, r: f64, theta: f64) -> PsiValue {
        let q = theta.abs() - self.theta0;
        let k = self.k();
        let (f, f1, f2) = self.cutoff.eval(k * q + 1.0);
        let s = 1.0 / (1.0 + self.eta);
        let b = self.beta;
        if f == 0.0 {
            return PsiValue {
                v: self.eta * s,
                r: 0.0,
                rr: 0.0,
                th: 0.0,
                thth: 0.0,
            };
        }
        let e = (b * r * q).exp() * s;
        let sg = if theta < 0.0 { -1.0 } else { 1.0 };
        PsiValue {
            v: f * e + self.eta * s,
            r: f * b * q * e,
            rr: f * b * b * q * q * e,
            th: sg * (k * f1 + f * b * r) * e,
            thth: (k * k * f2 + 2.0 * k * f1 * b * r + f * b * b * r * r) * e,
        }
    }

    /// `e^{alpha r} Laplace(e^{-alpha r} Psi)` in polar coordinates.
    #[inline]
    pub fn tilde_laplacian_of(&self, p: &PsiValue, r: f64) -> f64 {
        let a = self.alpha;
        p.rr - 2.0 * a * p.r + a * a * p.v + (p.r - a * p.v) / r + p.thth / (r * r)
    }

    /// `e^{alpha r} Laplace(e^{-alpha r} Psi)` at `(r, theta)`.
    pub fn tilde_laplacian(&self, r: f64, theta: f64) -> f64 {
        let p = self.eval(r, theta);
        self.tilde_laplacian_of(&p, r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn psi() -> Psi {
        build_psi(0.6, 0.3, 0.1, 400.0, 0.7, Smoothstep)
    }

    #[test]
    fn boundary_and_floor_values() {
        let p = psi();
        for r in [400.0, 1000.0, 4000.0] {
            assert!((p.eval(r, 0.7).v - 1.0).abs() < 1e-15);
            assert!((p.eval(r, -0.7).v - 1.0).abs() < 1e-15);
            let inner = 0.7 * (1.0 - 1.0 / 20.0);
            assert_eq!(p.eval(r, inner).v, 0.1 / 1.1);
            assert_eq!(p.eval(r, 0.0).v, 0.1 / 1.1);
        }
    }

    #[test]
    fn partials_match_differences() {
        let p = psi();
        let (r, t) = (500.0, 0.69);
        let v = p.eval(r, t);
        let h = 1e-4;
        let dr = (p.eval(r + h, t).v - p.eval(r - h, t).v) / (2.0 * h);
        let drr = (p.eval(r + h, t).r - p.eval(r - h, t).r) / (2.0 * h);
        let dt = (p.eval(r, t + 1e-7).v - p.eval(r, t - 1e-7).v) / 2e-7;
        let dtt = (p.eval(r, t + 1e-7).th - p.eval(r, t - 1e-7).th) / 2e-7;
        assert!((dr - v.r).abs() < 1e-8 * (1.0 + v.r.abs()));
        assert!((drr - v.rr).abs() < 1e-6 * (1.0 + v.rr.abs()));
        assert!((dt - v.th).abs() < 1e-5 * (1.0 + v.th.abs()));
        assert!((dtt - v.thth).abs() < 1e-4 * (1.0 + v.thth.abs()));
    }

    #[test]
    fn laplacian_matches_cartesian_differences() {
        // e^{alpha r} Laplace(e^{-alpha r} Psi) via a 5-point stencil in (x, y)
        let p = psi();
        let f = |x: f64, y: f64| {
            let r = x.hypot(y);
            (-p.alpha * r).exp() * p.eval(r, x.atan2(y)).v
        };
        let (r, t) = (450.0f64, 0.695f64);
        let (x, y) = (r * t.sin(), r * t.cos());
        let h = 1e-2;
        let lap = (f(x + h, y) + f(x - h, y) + f(x, y + h) + f(x, y - h) - 4.0 * f(x, y)) / (h * h);
        let scaled = lap * (p.alpha * r).exp();
        let exact = p.tilde_laplacian(r, t);
        assert!((scaled - exact).abs() < 1e-4 * (1.0 + exact.abs()), "{scaled} vs {exact}");
    }
}
