//! Road curves `y = rho(x)`, polar conventions and the flattening metric.
//!
//! The field is the epigraph `{y >= rho(x)}`. Polar angles are measured from
//! the positive `y` axis: `x = r sin(theta)`, `y = r cos(theta)`, so the cone
//! axis is `theta = 0` and the asymptotic road directions are `theta = ±theta0`.
//!
//! The shear `w = y - rho(x)` maps the field onto the half strip `w >= 0`.
//! In `(x, w)` the Laplacian becomes `div(A grad)` with
//! `A = [[1, -p], [-p, 1 + p^2]]`, `p = rho'(x)`, and `det A = 1`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Errors of this module.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    /// `polar(0, 0)`.
    #[error("polar angle undefined at the origin")]
    Origin,
    /// A sampled table is unusable.
    #[error("invalid road table: {0}")]
    BadTable(String),
    /// Non-finite slope.
    #[error("slope `a` must be finite, got {0}")]
    BadSlope(f64),
}

/// Half-opening angle of the cone `{y >= a|x|}`.
///
/// `atan(1/a)` for `a > 0`, `atan(1/a) + pi` for `a < 0` and `pi/2` for `a = 0`.
pub fn half_angle(a: f64) -> f64 {
    if a == 0.0 {
        FRAC_PI_2
    } else if a > 0.0 {
        (1.0 / a).atan()
    } else {
        (1.0 / a).atan() + PI
    }
}

/// Polar coordinates `(r, theta)` with `x = r sin(theta)`, `y = r cos(theta)`,
/// `theta` in `(-pi, pi]`.
pub fn polar(x: f64, y: f64) -> Result<(f64, f64), GeometryError> {
    if x == 0.0 && y == 0.0 {
        return Err(GeometryError::Origin);
    }
    let r = x.hypot(y);
    let mut theta = x.atan2(y);
    if theta == -PI {
        theta = PI;
    }
    Ok((r, theta))
}

/// Family of a [`Geometry`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    /// `a|x|` outside `[-1, 1]`, polynomial blend inside.
    ExactCone,
    /// `sign(a) sqrt(1 + a^2 x^2)`.
    Hyperbola,
    /// Anything else.
    Custom,
}

/// Blend `p(s) = 15/8 s^2 - 5/4 s^4 + 3/8 s^6` used by the exact cone on `|x| < 1`.
pub const CONE_BLEND: [f64; 3] = [15.0 / 8.0, -5.0 / 4.0, 3.0 / 8.0];

#[inline]
fn cone_blend(s: f64) -> (f64, f64, f64) {
    let [c2, c4, c6] = CONE_BLEND;
    let s2 = s * s;
    let p = s2 * (c2 + s2 * (c4 + s2 * c6));
    let dp = s * (2.0 * c2 + s2 * (4.0 * c4 + s2 * 6.0 * c6));
    let ddp = 2.0 * c2 + s2 * (12.0 * c4 + s2 * 30.0 * c6);
    (p, dp, ddp)
}

type CurveFn = Arc<dyn Fn(f64) -> (f64, f64, f64) + Send + Sync>;

#[derive(Clone)]
enum Curve {
    Cone(f64),
    Hyperbola(f64),
    Closed(CurveFn),
    Table(Table),
}

/// Sampled road with piecewise quadratic interpolation.
#[derive(Clone, Debug)]
struct Table {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Table {
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let n = self.xs.len();
        let (x0, xn) = (self.xs[0], self.xs[n - 1]);
        if x < x0 {
            let (y, dy, _) = self.quad(0, x0);
            return (y + dy * (x - x0), dy, 0.0);
        }
        if x > xn {
            let (y, dy, _) = self.quad(n - 3, xn);
            return (y + dy * (x - xn), dy, 0.0);
        }
        let k = self.xs.partition_point(|&t| t <= x).clamp(1, n - 1) - 1;
        // three nearest nodes: k, k + 1 and whichever neighbour is closer
        let start = if k == 0 {
            0
        } else if k + 2 >= n {
            n - 3
        } else if x - self.xs[k] < self.xs[k + 1] - x {
            k - 1
        } else {
            k
        };
        self.quad(start, x)
    }

    fn quad(&self, s: usize, x: f64) -> (f64, f64, f64) {
        let (x0, x1, x2) = (self.xs[s], self.xs[s + 1], self.xs[s + 2]);
        let (y0, y1, y2) = (self.ys[s], self.ys[s + 1], self.ys[s + 2]);
        let d01 = (y1 - y0) / (x1 - x0);
        let d12 = (y2 - y1) / (x2 - x1);
        let d012 = (d12 - d01) / (x2 - x0);
        let y = y0 + d01 * (x - x0) + d012 * (x - x0) * (x - x1);
        let dy = d01 + d012 * (2.0 * x - x0 - x1);
        (y, dy, 2.0 * d012)
    }
}

/// A road curve with its asymptotic slope and half-angle.
#[derive(Clone)]
pub struct Geometry {
    a: f64,
    theta0: f64,
    kind: GeometryKind,
    name: String,
    curve: Curve,
}

impl fmt::Debug for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Geometry")
            .field("name", &self.name)
            .field("a", &self.a)
            .field("theta0", &self.theta0)
            .finish()
    }
}

impl Geometry {
    /// `rho = a|x|` for `|x| >= 1` and `a p(|x|)` inside, `C^2` everywhere.
    pub fn exact_cone(a: f64) -> Self {
        Geometry {
            a,
            theta0: half_angle(a),
            kind: GeometryKind::ExactCone,
            name: format!("exact_cone:{a}"),
            curve: Curve::Cone(a),
        }
    }

    /// `rho = sign(a) sqrt(1 + a^2 x^2)`, or the flat road when `a = 0`.
    pub fn hyperbola(a: f64) -> Self {
        Geometry {
            a,
            theta0: half_angle(a),
            kind: GeometryKind::Hyperbola,
            name: format!("hyperbola:{a}"),
            curve: Curve::Hyperbola(a),
        }
    }

    /// Flat road `rho = 0`.
    pub fn flat() -> Self {
        Self::exact_cone(0.0)
    }

    /// Decaying bump `rho = h / (1 + x^2)` (asymptotic slope 0).
    pub fn bump(h: f64) -> Self {
        Self::custom(format!("bump:{h}"), 0.0, move |x| {
            let q = 1.0 / (1.0 + x * x);
            (h * q, -2.0 * h * x * q * q, h * (6.0 * x * x - 2.0) * q * q * q)
        })
    }

    /// Closed-form road. `f` returns `(rho, rho', rho'')`.
    pub fn custom(
        name: impl Into<String>,
        a: f64,
        f: impl Fn(f64) -> (f64, f64, f64) + Send + Sync + 'static,
    ) -> Self {
        Geometry {
            a,
            theta0: half_angle(a),
            kind: GeometryKind::Custom,
            name: name.into(),
            curve: Curve::Closed(Arc::new(f)),
        }
    }

    /// Road sampled at strictly increasing `xs`, differentiated by local
    /// quadratics through the three nearest samples and extended linearly
    /// outside the table. When `a` is `None` it is estimated from the slope at
    /// the right end.
    pub fn from_table(xs: Vec<f64>, ys: Vec<f64>, a: Option<f64>) -> Result<Self, GeometryError> {
        if xs.len() != ys.len() {
            return Err(GeometryError::BadTable("column lengths differ".into()));
        }
        if xs.len() < 3 {
            return Err(GeometryError::BadTable("need at least 3 samples".into()));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(GeometryError::BadTable("non-finite sample".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GeometryError::BadTable("x must be strictly increasing".into()));
        }
        let table = Table { xs, ys };
        let slope = match a {
            Some(a) if !a.is_finite() => return Err(GeometryError::BadSlope(a)),
            Some(a) => a,
            None => table.eval(*table.xs.last().unwrap()).1,
        };
        Ok(Geometry {
            a: slope,
            theta0: half_angle(slope),
            kind: GeometryKind::Custom,
            name: "table".into(),
            curve: Curve::Table(table),
        })
    }

    /// Asymptotic slope `a`.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Half-angle `theta0`.
    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    /// Family.
    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    /// Label used in reports.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// `(rho, rho', rho'')` at `x`.
    #[inline]
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        match &self.curve {
            Curve::Cone(a) => {
                let s = x.abs();
                let sg = if x < 0.0 { -1.0 } else { 1.0 };
                if s >= 1.0 {
                    (a * s, a * sg, 0.0)
                } else {
                    let (p, dp, ddp) = cone_blend(s);
                    (a * p, a * dp * sg, a * ddp)
                }
            }
            Curve::Hyperbola(a) => {
                if *a == 0.0 {
                    return (0.0, 0.0, 0.0);
                }
                let sg = a.signum();
                let a2 = a * a;
                let q = 1.0 + a2 * x * x;
                let sq = q.sqrt();
                (sg * sq, sg * a2 * x / sq, sg * a2 / (q * sq))
            }
            Curve::Closed(f) => f(x),
            Curve::Table(t) => t.eval(x),
        }
    }

    /// `rho(x)`.
    pub fn rho(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    /// `rho'(x)`.
    pub fn rho_d1(&self, x: f64) -> f64 {
        self.eval(x).1
    }

    /// `rho''(x)`.
    pub fn rho_d2(&self, x: f64) -> f64 {
        self.eval(x).2
    }

    /// True when `rho(x) = rho(-x)` at 200 sample points in `[0, 1000]`.
    pub fn is_even(&self) -> bool {
        match self.curve {
            Curve::Cone(_) | Curve::Hyperbola(_) => true,
            _ => (0..200).all(|k| {
                let x = 1e-2 * 1.05f64.powi(k).min(1e5);
                let (l, r) = (self.rho(-x), self.rho(x));
                (l - r).abs() <= 1e-10 * (1.0 + l.abs())
            }),
        }
    }

    /// Metric quantities of the flattening map.
    pub fn metric(&self) -> MetricData<'_> {
        MetricData { geometry: self }
    }
}

/// Arclength weight, diffusion matrix and boundary trace of a road.
#[derive(Clone, Copy, Debug)]
pub struct MetricData<'a> {
    geometry: &'a Geometry,
}

impl MetricData<'_> {
    /// `tau = sqrt(1 + rho'^2)`.
    #[inline]
    pub fn tau(&self, x: f64) -> f64 {
        self.geometry.rho_d1(x).hypot(1.0)
    }

    /// `A(x) = [[1, -p], [-p, 1 + p^2]]` with `p = rho'(x)`.
    #[inline]
    pub fn diffusion_matrix(&self, x: f64) -> [[f64; 2]; 2] {
        let p = self.geometry.rho_d1(x);
        [[1.0, -p], [-p, 1.0 + p * p]]
    }

    /// Boundary radius `sqrt(x^2 + rho(x)^2)`.
    #[inline]
    pub fn rtilde(&self, x: f64) -> f64 {
        x.hypot(self.geometry.rho(x))
    }

    /// Polar angle of the boundary point `(x, rho(x))` (0 at the origin).
    #[inline]
    pub fn thetatilde(&self, x: f64) -> f64 {
        polar(x, self.geometry.rho(x)).map_or(0.0, |(_, t)| t)
    }
}

/// Determinant of a 2x2 matrix.
pub fn det2(m: [[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_angles() {
        assert_eq!(half_angle(0.0), FRAC_PI_2);
        assert!((half_angle(1.0) - PI / 4.0).abs() < 1e-15);
        assert!((half_angle(-1.0) - 3.0 * PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn polar_examples() {
        assert_eq!(polar(0.0, 1.0).unwrap(), (1.0, 0.0));
        let (r, t) = polar(1.0, 0.0).unwrap();
        assert_eq!((r, t), (1.0, FRAC_PI_2));
        let (r, t) = polar(1.0, 1.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15 && (t - PI / 4.0).abs() < 1e-15);
        assert_eq!(polar(0.0, -1.0).unwrap().1, PI);
        assert!(polar(0.0, 0.0).is_err());
    }

    #[test]
    fn cone_blend_matches_at_one() {
        let (p, dp, ddp) = cone_blend(1.0);
        assert!((p - 1.0).abs() < 1e-15);
        assert!((dp - 1.0).abs() < 1e-15);
        assert!(ddp.abs() < 1e-14);
        let g = Geometry::exact_cone(1.0);
        assert_eq!(g.rho(2.0), 2.0);
        assert_eq!(g.rho_d1(0.0), 0.0);
    }

    #[test]
    fn hyperbola_far_field() {
        let g = Geometry::hyperbola(1.0);
        assert_eq!(g.rho(0.0), 1.0);
        let x: f64 = 1000.0;
        let gap = 1.0 / ((1.0 + x * x).sqrt() + x);
        assert!((g.rho(x) - x - gap).abs() < 1e-12);
        assert!(Geometry::hyperbola(0.0).rho(3.0) == 0.0);
    }

    #[test]
    fn table_reproduces_quadratics() {
        let xs: Vec<f64> = (0..41).map(|k| -2.0 + 0.1 * k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x * x - x + 2.0).collect();
        let g = Geometry::from_table(xs, ys, Some(0.0)).unwrap();
        for x in [-1.93, -0.51, 0.0, 0.77, 1.99] {
            let (y, dy, ddy) = g.eval(x);
            assert!((y - (0.5 * x * x - x + 2.0)).abs() < 1e-12);
            assert!((dy - (x - 1.0)).abs() < 1e-10);
            assert!((ddy - 1.0).abs() < 1e-8);
        }
        assert!(Geometry::from_table(vec![0.0, 1.0], vec![0.0, 1.0], None).is_err());
        assert!(Geometry::from_table(vec![0.0, 1.0, 1.0], vec![0.0; 3], None).is_err());
    }

    #[test]
    fn bump_derivatives() {
        let g = Geometry::bump(1.0);
        let h = 1e-5;
        for x in [-3.0, -0.4, 0.0, 0.9, 5.0] {
            let d1 = (g.rho(x + h) - g.rho(x - h)) / (2.0 * h);
            let d2 = (g.rho_d1(x + h) - g.rho_d1(x - h)) / (2.0 * h);
            assert!((d1 - g.rho_d1(x)).abs() < 1e-8);
            assert!((d2 - g.rho_d2(x)).abs() < 1e-8);
        }
    }
}
