//! Compactly supported hump `phi(y)` added to the field part of subsolutions.

use crate::model::ModelParams;

/// `phi(y) = A (1 - cos(omega y)) + B sin(omega y)` on `[0, M]`, zero beyond.
///
/// `A = (1 + kappa)/g`, `B = phi'(0)/omega`, `omega = sqrt(g/d)`,
/// `phi'(0) = (2 mu + 1)/d` and `g = f'(0) - delta`, so that
/// `d phi'' + g phi = 1 + kappa` on `(0, M)`. `M` is the first positive zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hump {
    /// Field diffusivity.
    pub d: f64,
    /// Penalized growth `g`.
    pub g: f64,
    /// Excess `kappa` in `d phi'' + g phi = 1 + kappa`.
    pub kappa: f64,
    /// `omega`.
    pub omega: f64,
    /// Cosine coefficient `A`.
    pub a: f64,
    /// Sine coefficient `B`.
    pub b: f64,
    /// Support end `M`.
    pub m: f64,
}

/// Default `kappa`.
pub const DEFAULT_KAPPA: f64 = 0.5;

/// Builds the hump for `params` (penalized growth) and `kappa > 0`.
///
/// # Panics
///
/// Panics if `kappa <= 0` or the penalized growth is not positive.
pub fn build_hump(params: &ModelParams, kappa: f64) -> Hump {
    assert!(kappa > 0.0, "kappa must be positive");
    let g = params.penalized_growth();
    assert!(g > 0.0, "penalized growth must be positive");
    let d = params.d;
    let omega = (g / d).sqrt();
    let a = (1.0 + kappa) / g;
    let b = (2.0 * params.mu + 1.0) / d / omega;
    let mut h = Hump {
        d,
        g,
        kappa,
        omega,
        a,
        b,
        m: f64::NAN,
    };
    h.m = h.first_zero();
    h
}

impl Hump {
    /// The unclamped closed form `(phi, phi', phi'')`.
    fn raw(&self, y: f64) -> (f64, f64, f64) {
        let w = self.omega;
        let (s, c) = (w * y).sin_cos();
        (
            self.a * (1.0 - c) + self.b * s,
            w * (self.a * s + self.b * c),
            w * w * (self.a * c - self.b * s),
        )
    }

    /// First zero in `(pi/omega, 2 pi/omega)`: `phi > 0` at `pi/omega` and
    /// `phi < 0` just below `2 pi/omega`; a scan brackets the sign change and
    /// bisection refines it.
    fn first_zero(&self) -> f64 {
        let lo0 = std::f64::consts::PI / self.omega;
        let hi0 = 2.0 * lo0;
        let n = 4096;
        let step = (hi0 - lo0) / n as f64;
        let mut lo = lo0;
        let mut hi = hi0;
        for k in 1..n {
            let y = lo0 + step * k as f64;
            if self.raw(y).0 <= 0.0 {
                hi = y;
                lo = y - step;
                break;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.raw(mid).0 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// `(phi, phi', phi'')` at `y`; zero outside `[0, M]`.
    pub fn eval(&self, y: f64) -> (f64, f64, f64) {
        if (0.0..=self.m).contains(&y) {
            self.raw(y)
        } else {
            (0.0, 0.0, 0.0)
        }
    }

    /// `phi(y)`.
    pub fn value(&self, y: f64) -> f64 {
        self.eval(y).0
    }

    /// `phi'(0) = (2 mu + 1)/d`.
    pub fn slope_at_zero(&self) -> f64 {
        self.omega * self.b
    }

    /// `max phi = A + sqrt(A^2 + B^2)`.
    pub fn max_value(&self) -> f64 {
        self.a + self.a.hypot(self.b)
    }

    /// Upper bound `omega sqrt(A^2 + B^2)` of `|phi'|`.
    pub fn sup_d1(&self) -> f64 {
        self.omega * self.a.hypot(self.b)
    }

    /// Upper bound `omega^2 sqrt(A^2 + B^2)` of `|phi''|`.
    pub fn sup_d2(&self) -> f64 {
        self.omega * self.omega * self.a.hypot(self.b)
    }

    /// Largest `|d phi'' + g phi - (1 + kappa)|` over `n` interior samples.
    pub fn identity_residual(&self, n: usize) -> f64 {
        (1..=n)
            .map(|k| {
                let y = self.m * k as f64 / (n + 1) as f64;
                let (p, _, p2) = self.eval(y);
                (self.d * p2 + self.g * p - (1.0 + self.kappa)).abs()
            })
            .fold(0.0, f64::max)
    }
}
