//! Quintic smoothstep cutoff.

/// `phi(z) = 6z^5 - 15z^4 + 10z^3` on `[0, 1]`, 0 below, 1 above.
///
/// `phi` is `C^2` with `phi'(0) = phi'(1) = phi''(0) = phi''(1) = 0`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Smoothstep;

impl Smoothstep {
    /// `sup |phi'| = phi'(1/2)`.
    pub const SUP_D1: f64 = 15.0 / 8.0;

    /// `sup |phi''|`, attained at `z = (3 -+ sqrt 3)/6`.
    pub const SUP_D2: f64 = 5.773_502_691_896_258; // 10 / sqrt(3)

    /// `(phi, phi', phi'')` at `z`.
    #[inline]
    pub fn eval(&self, z: f64) -> (f64, f64, f64) {
        if z <= 0.0 {
            (0.0, 0.0, 0.0)
        } else if z >= 1.0 {
            (1.0, 0.0, 0.0)
        } else {
            let z2 = z * z;
            let w = 1.0 - z;
            (
                z2 * z * (10.0 + z * (6.0 * z - 15.0)),
                30.0 * z2 * w * w,
                60.0 * z * (2.0 * z - 1.0) * (z - 1.0),
            )
        }
    }

    /// `phi(z)`.
    pub fn value(&self, z: f64) -> f64 {
        self.eval(z).0
    }

    /// `max_{z in [0,1]} phi(z) (1 - z)`.
    ///
    /// The maximizer solves `phi'(z)(1 - z) = phi(z)`; it is bracketed in
    /// `(1/2, 1)` and located by bisection.
    pub fn sup_phi_gap(&self) -> f64 {
        let g = |z: f64| {
            let (p, dp, _) = self.eval(z);
            dp * (1.0 - z) - p
        };
        let (mut lo, mut hi) = (0.5, 1.0 - 1e-12);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let z = 0.5 * (lo + hi);
        self.value(z) * (1.0 - z)
    }
}
