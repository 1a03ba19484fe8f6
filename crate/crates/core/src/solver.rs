//! Explicit finite-volume integrator on the sheared strip.
//!
//! The field `{y >= rho(x)}` is flattened by `w = y - rho(x)` onto the strip
//! `[x_min, x_max] x [0, y_max]`, where the Laplacian reads `div(A grad)`
//! with `A = [[1, -p], [-p, 1 + p^2]]`, `p = rho'(x)`. Nodes sit on the
//! vertices of a uniform grid; `v` is stored column by column,
//! `v[i * (ny + 1) + j]`, and `u` lives on the road nodes `x_i`.
//!
//! # Field stencil
//!
//! `A` splits as `e e^T + e_w e_w^T` with `e = (1, -p)`, the direction of the
//! horizontal lines `y = const`. Between columns `i` and `i + 1` the
//! derivative along `e` is approximated by two links from `(i, j)` to
//! `(i + 1, j - sk)` and `(i + 1, j - s(k + 1))` (`s = sign p`), weighted so
//! that their mean offset is exactly `-p hx`. The links reproduce `A_11` and
//! `A_12` exactly and overshoot `A_22` by at most `hy^2 / (4 hx^2)`, which the
//! vertical links subtract. Every coefficient is a nonnegative symmetric
//! conductance when `hy <= 2 hx`, so the scheme is conservative, monotone
//! and preserves constants for every road.
//!
//! # Road and exchange
//!
//! The road uses conductances `D / (tau_{i+1/2} hx)` and control lengths
//! `tau_i hx`. The exchange is one shared flux
//! `F_i = tau_i hx (nu v_{i,0} - mu u_i)` added to the road and removed from
//! the bottom field node, so mass moves between the two without loss.
//!
//! Control volumes are halved on the grid edges (bottom and top rows, and
//! the end columns under reflecting conditions); [`total_mass`] uses the same
//! weights, which makes the `f = 0` reflecting scheme conservative to
//! rounding.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::Geometry;
use crate::model::{ModelParams, Reaction};

/// Width, in cells, of the band along Dirichlet edges where a datum must vanish.
pub const SUPPORT_MARGIN_CELLS: usize = 10;

/// Lower bound used by the positivity and ordering monitors.
pub const POSITIVITY_TOL: f64 = -1e-10;

/// Errors of the solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    /// Inconsistent grid parameters.
    #[error("invalid grid: {0}")]
    Grid(String),
    /// The datum is nonzero too close to a Dirichlet edge.
    #[error("datum is nonzero at x = {x}, w = {w}, within {SUPPORT_MARGIN_CELLS} cells of a Dirichlet edge")]
    SupportMargin {
        /// Node abscissa.
        x: f64,
        /// Node height above the road.
        w: f64,
    },
    /// The datum is negative, unbounded or not finite.
    #[error("datum must be finite and nonnegative, got {value} at x = {x}")]
    BadDatum {
        /// Node abscissa.
        x: f64,
        /// Offending value.
        value: f64,
    },
    /// `dt` above the stability bound.
    #[error("dt = {dt} exceeds the stability bound {max}")]
    Cfl {
        /// Requested step.
        dt: f64,
        /// Largest admissible step.
        max: f64,
    },
    /// A non-finite value appeared.
    #[error("non-finite value after the step ending at t = {t}")]
    NonFinite {
        /// Time reached.
        t: f64,
    },
    /// Two states on different grids or roads.
    #[error("states live on different grids")]
    GridMismatch,
    /// Bad run configuration.
    #[error("invalid run configuration: {0}")]
    Config(String),
}

/// Outer boundary rule on the side columns and the top row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterBc {
    /// `u = v = 0` on the outer nodes.
    DirichletZero,
    /// Zero flux.
    Reflecting,
}

impl OuterBc {
    /// Config-file spelling.
    pub fn name(self) -> &'static str {
        match self {
            OuterBc::DirichletZero => "dirichlet_zero",
            OuterBc::Reflecting => "reflecting",
        }
    }
}

impl std::str::FromStr for OuterBc {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dirichlet_zero" => Ok(OuterBc::DirichletZero),
            "reflecting" => Ok(OuterBc::Reflecting),
            _ => Err(format!("expected dirichlet_zero or reflecting, got `{s}`")),
        }
    }
}

/// Uniform grid on `[x_min, x_max] x [0, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Left end.
    pub x_min: f64,
    /// Right end.
    pub x_max: f64,
    /// Strip height (distance above the road).
    pub y_max: f64,
    /// Step in `x`.
    pub hx: f64,
    /// Step in `w`.
    pub hy: f64,
    /// Steps between reported states.
    pub nt_report: usize,
    /// Side and top boundary rule.
    pub outer_bc: OuterBc,
}

fn divisions(len: f64, h: f64, what: &str) -> Result<usize, SolverError> {
    let n = len / h;
    let k = n.round();
    if k < 2.0 || (n - k).abs() > 1e-9 * n.max(1.0) {
        return Err(SolverError::Grid(format!(
            "{what} length {len} is not a multiple (>= 2) of its step {h}"
        )));
    }
    Ok(k as usize)
}

impl GridSpec {
    /// Checks steps, extents and the monotonicity condition `hy <= 2 hx`.
    pub fn validate(&self) -> Result<(), SolverError> {
        for (name, v) in [("hx", self.hx), ("hy", self.hy), ("y_max", self.y_max)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SolverError::Grid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_max > self.x_min) {
            return Err(SolverError::Grid("need finite x_min < x_max".into()));
        }
        if self.hy > 2.0 * self.hx {
            return Err(SolverError::Grid(format!(
                "hy = {} > 2 hx = {}: the stencil would not be monotone",
                self.hy,
                2.0 * self.hx
            )));
        }
        if self.nt_report == 0 {
            return Err(SolverError::Grid("nt_report must be >= 1".into()));
        }
        divisions(self.x_max - self.x_min, self.hx, "x")?;
        divisions(self.y_max, self.hy, "y")?;
        Ok(())
    }

    /// Number of cells in `x` (there are `nx + 1` columns).
    pub fn nx(&self) -> usize {
        ((self.x_max - self.x_min) / self.hx).round() as usize
    }

    /// Number of cells in `w` (there are `ny + 1` rows).
    pub fn ny(&self) -> usize {
        (self.y_max / self.hy).round() as usize
    }

    /// Abscissa of column `i`.
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.hx
    }

    /// Height of row `j` above the road.
    pub fn w(&self, j: usize) -> f64 {
        j as f64 * self.hy
    }

    /// Same grid with both steps halved.
    pub fn refined(&self) -> GridSpec {
        GridSpec {
            hx: 0.5 * self.hx,
            hy: 0.5 * self.hy,
            nt_report: 2 * self.nt_report,
            ..*self
        }
    }

    /// Control-length weight of column `i` (1/2 at reflecting ends).
    pub fn wx(&self, i: usize) -> f64 {
        if self.outer_bc == OuterBc::Reflecting && (i == 0 || i == self.nx()) {
            0.5
        } else {
            1.0
        }
    }

    /// Control-height weight of row `j` (1/2 on the bottom and top rows).
    pub fn wy(&self, j: usize) -> f64 {
        if j == 0 || j == self.ny() {
            0.5
        } else {
            1.0
        }
    }

    fn same_nodes(&self, o: &GridSpec) -> bool {
        self.x_min == o.x_min
            && self.x_max == o.x_max
            && self.y_max == o.y_max
            && self.hx == o.hx
            && self.hy == o.hy
            && self.outer_bc == o.outer_bc
    }
}

/// Pointwise rule in physical coordinates `(x, y)`.
pub type PointFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Initial datum, evaluated in physical coordinates.
#[derive(Clone)]
pub enum Datum {
    /// `u = v = 0`.
    Zero,
    /// Constants.
    Constant {
        /// Road value.
        u: f64,
        /// Field value.
        v: f64,
    },
    /// `u = 0`, `v = amplitude * max(0, 1 - |z - center|^2 / radius^2)`.
    Bump {
        /// Center `(x, y)`.
        center: (f64, f64),
        /// Support radius.
        radius: f64,
        /// Peak value.
        amplitude: f64,
    },
    /// Arbitrary rules; the road rule is called with `(x, rho(x))`.
    Custom {
        /// Road rule.
        road: PointFn,
        /// Field rule.
        field: PointFn,
    },
}

impl std::fmt::Debug for Datum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Datum::Zero => write!(f, "Zero"),
            Datum::Constant { u, v } => write!(f, "Constant {{ u: {u}, v: {v} }}"),
            Datum::Bump {
                center,
                radius,
                amplitude,
            } => write!(f, "Bump {{ center: {center:?}, radius: {radius}, amplitude: {amplitude} }}"),
            Datum::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl Datum {
    /// Unit paraboloid of radius 5 centered 5 above the road apex `(0, rho(0))`.
    pub fn speed_run(geometry: &Geometry) -> Datum {
        Datum::Bump {
            center: (0.0, geometry.rho(0.0) + 5.0),
            radius: 5.0,
            amplitude: 1.0,
        }
    }

    /// Center of a bump datum.
    pub fn center(&self) -> Option<(f64, f64)> {
        match self {
            Datum::Bump { center, .. } => Some(*center),
            _ => None,
        }
    }

    fn road(&self, x: f64, y: f64) -> f64 {
        match self {
            Datum::Zero | Datum::Bump { .. } => 0.0,
            Datum::Constant { u, .. } => *u,
            Datum::Custom { road, .. } => road(x, y),
        }
    }

    fn field(&self, x: f64, y: f64) -> f64 {
        match self {
            Datum::Zero => 0.0,
            Datum::Constant { v, .. } => *v,
            Datum::Bump {
                center,
                radius,
                amplitude,
            } => {
                let r2 = (x - center.0).powi(2) + (y - center.1).powi(2);
                amplitude * (1.0 - r2 / (radius * radius)).max(0.0)
            }
            Datum::Custom { field, .. } => field(x, y),
        }
    }
}

/// Road and field values at time `t` on the sheared strip.
#[derive(Debug, Clone)]
pub struct FieldState {
    /// Time.
    pub t: f64,
    /// Road values `u(x_i, rho(x_i))`.
    pub u: Vec<f64>,
    /// Field values `v(x_i, w_j + rho(x_i))` at `i * (ny + 1) + j`.
    pub v: Vec<f64>,
    /// Grid.
    pub grid: GridSpec,
    /// Road curve.
    pub geometry: Geometry,
}

impl FieldState {
    /// Wraps raw arrays, checking their lengths against the grid.
    pub fn from_parts(
        grid: GridSpec,
        geometry: Geometry,
        t: f64,
        u: Vec<f64>,
        v: Vec<f64>,
    ) -> Result<FieldState, SolverError> {
        grid.validate()?;
        let (nx, ny) = (grid.nx(), grid.ny());
        if u.len() != nx + 1 || v.len() != (nx + 1) * (ny + 1) {
            return Err(SolverError::Grid(format!(
                "expected {} road and {} field values, got {} and {}",
                nx + 1,
                (nx + 1) * (ny + 1),
                u.len(),
                v.len()
            )));
        }
        Ok(FieldState { t, u, v, grid, geometry })
    }

    /// Field value at column `i`, row `j`.
    #[inline]
    pub fn v_at(&self, i: usize, j: usize) -> f64 {
        self.v[i * (self.grid.ny() + 1) + j]
    }

    /// Column `i` of the field.
    pub fn column(&self, i: usize) -> &[f64] {
        let n = self.grid.ny() + 1;
        &self.v[i * n..(i + 1) * n]
    }

    /// `min u`, `min v`, `max v`.
    pub fn extrema(&self) -> (f64, f64, f64) {
        let min_u = self.u.iter().copied().fold(f64::INFINITY, f64::min);
        let min_v = self.v.iter().copied().fold(f64::INFINITY, f64::min);
        let max_v = self.v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min_u, min_v, max_v)
    }

    /// True when every value is finite.
    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

/// Samples `initial` on the strip nodes of `grid` for the road `geometry`.
///
/// Under Dirichlet conditions the datum must vanish on the outer
/// [`SUPPORT_MARGIN_CELLS`] columns on each side and rows at the top.
pub fn discretize(
    geometry: &Geometry,
    params: &ModelParams,
    grid: &GridSpec,
    initial: &Datum,
) -> Result<FieldState, SolverError> {
    let _ = params;
    grid.validate()?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let m = SUPPORT_MARGIN_CELLS;
    let dirichlet = grid.outer_bc == OuterBc::DirichletZero;
    if dirichlet && (nx < 2 * m + 2 || ny < m + 2) {
        return Err(SolverError::Grid(format!(
            "grid {nx}x{ny} is too small for the {m}-cell support margin"
        )));
    }
    let in_margin = |i: usize, j: Option<usize>| {
        dirichlet && (i < m || i > nx - m || j.is_some_and(|j| j > ny - m))
    };
    let mut u = Vec::with_capacity(nx + 1);
    let mut v = Vec::with_capacity((nx + 1) * (ny + 1));
    for i in 0..=nx {
        let x = grid.x(i);
        let rho = geometry.rho(x);
        let val = initial.road(x, rho);
        check_value(x, val)?;
        if val != 0.0 && in_margin(i, None) {
            return Err(SolverError::SupportMargin { x, w: 0.0 });
        }
        u.push(val);
        for j in 0..=ny {
            let w = grid.w(j);
            let val = initial.field(x, w + rho);
            check_value(x, val)?;
            if val != 0.0 && in_margin(i, Some(j)) {
                return Err(SolverError::SupportMargin { x, w });
            }
            v.push(val);
        }
    }
    Ok(FieldState {
        t: 0.0,
        u,
        v,
        grid: *grid,
        geometry: geometry.clone(),
    })
}

fn check_value(x: f64, value: f64) -> Result<(), SolverError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(SolverError::BadDatum { x, value })
    }
}

/// One directional link from column `i` to column `i + 1`.
#[derive(Debug, Clone, Copy)]
struct Link {
    /// Row offset: `(i, j)` connects to `(i + 1, j + shift)`.
    shift: isize,
    /// Conductance (includes `d`).
    g: f64,
    /// True for the horizontal link, halved on the bottom and top rows.
    flat: bool,
}

/// Precomputed coefficients of the scheme for one road, grid and parameter set.
#[derive(Clone)]
pub struct Scheme {
    grid: GridSpec,
    nx: usize,
    ny: usize,
    /// Links of each half column `i + 1/2` (at most two).
    links: Vec<[Option<Link>; 2]>,
    /// Vertical conductance of column `i`.
    vert: Vec<f64>,
    /// Road conductance of half column `i + 1/2`.
    road_cond: Vec<f64>,
    /// Road control length `tau_i hx wx_i`, also the exchange weight.
    road_len: Vec<f64>,
    /// Field control area `hx hy wx_i` (times `wy_j`).
    field_area: Vec<f64>,
    mu: f64,
    nu: f64,
    reaction: Reaction,
    fprime0: f64,
    max_rate: f64,
    formula_dt: f64,
}

impl std::fmt::Debug for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scheme")
            .field("grid", &self.grid)
            .field("max_rate", &self.max_rate)
            .finish()
    }
}

/// `Q = theta (k t)^2 + (1 - theta) ((k + 1) t)^2` and the two links for slope `p`.
fn split_links(p: f64, hx: f64, hy: f64, d: f64) -> ([Option<Link>; 2], f64) {
    let t = hy / hx;
    let big_p = p.abs();
    let s: isize = if p < 0.0 { -1 } else { 1 };
    let ratio = big_p / t;
    let k = ratio.floor();
    let theta = k + 1.0 - ratio;
    let g = d * hy / hx;
    let ki = k as isize;
    let first = (theta > 0.0).then_some(Link {
        shift: -s * ki,
        g: g * theta,
        flat: ki == 0,
    });
    let second = (theta < 1.0).then_some(Link {
        shift: -s * (ki + 1),
        g: g * (1.0 - theta),
        flat: false,
    });
    let q = theta * (k * t).powi(2) + (1.0 - theta) * ((k + 1.0) * t).powi(2);
    ([first, second], q)
}

impl Scheme {
    /// Builds the coefficients.
    pub fn new(geometry: &Geometry, params: &ModelParams, grid: &GridSpec) -> Result<Scheme, SolverError> {
        grid.validate()?;
        let (nx, ny) = (grid.nx(), grid.ny());
        let (hx, hy, d) = (grid.hx, grid.hy, params.d);
        let metric = geometry.metric();
        let mut links = Vec::with_capacity(nx);
        let mut q_half = Vec::with_capacity(nx);
        let mut road_cond = Vec::with_capacity(nx);
        for i in 0..nx {
            let xh = grid.x(i) + 0.5 * hx;
            let (l, q) = split_links(geometry.rho_d1(xh), hx, hy, d);
            links.push(l);
            q_half.push(q);
            road_cond.push(params.road_d / (metric.tau(xh) * hx));
        }
        let mut vert = Vec::with_capacity(nx + 1);
        let mut road_len = Vec::with_capacity(nx + 1);
        let mut field_area = Vec::with_capacity(nx + 1);
        let mut formula_dt = 1.0 / (params.mu + params.nu + params.fprime0);
        for i in 0..=nx {
            let x = grid.x(i);
            let p = geometry.rho_d1(x);
            let tau = metric.tau(x);
            let q = match i {
                0 => q_half[0],
                _ if i == nx => q_half[nx - 1],
                _ => 0.5 * (q_half[i - 1] + q_half[i]),
            };
            let c2 = (1.0 + p * p - q).max(0.0);
            vert.push(grid.wx(i) * d * c2 * hx / hy);
            road_len.push(tau * hx * grid.wx(i));
            field_area.push(hx * hy * grid.wx(i));
            let a = [[1.0, -p], [-p, 1.0 + p * p]];
            let field_dt = hx * hx * hy * hy / (2.0 * d * (a[0][0] * hy * hy + a[1][1] * hx * hx + a[0][1].abs() * hx * hy));
            let road_dt = tau * tau * hx * hx / (2.0 * params.road_d);
            formula_dt = formula_dt.min(field_dt).min(road_dt);
        }
        let mut s = Scheme {
            grid: *grid,
            nx,
            ny,
            links,
            vert,
            road_cond,
            road_len,
            field_area,
            mu: params.mu,
            nu: params.nu,
            reaction: params.reaction.clone(),
            fprime0: params.fprime0,
            max_rate: 0.0,
            formula_dt,
        };
        s.max_rate = s.compute_max_rate();
        Ok(s)
    }

    /// Grid of the scheme.
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Sum of the outgoing rates of node `(i, j)`, divided by its volume.
    fn field_rate(&self, i: usize, j: usize) -> f64 {
        let ny = self.ny as isize;
        let edge = j == 0 || j == self.ny;
        let mut g = 0.0;
        let mut add = |l: &Link, target: isize| {
            if (0..=ny).contains(&target) {
                g += if l.flat && edge { 0.5 * l.g } else { l.g };
            }
        };
        if i < self.nx {
            for l in self.links[i].iter().flatten() {
                add(l, j as isize + l.shift);
            }
        }
        if i > 0 {
            for l in self.links[i - 1].iter().flatten() {
                add(l, j as isize - l.shift);
            }
        }
        let nv = if j == 0 || j == self.ny { 1.0 } else { 2.0 };
        g += nv * self.vert[i];
        let area = self.field_area[i] * self.grid.wy(j);
        let mut rate = g / area;
        if j == 0 {
            rate += self.road_len[i] * self.nu / area;
        }
        rate + self.fprime0
    }

    fn road_rate(&self, i: usize) -> f64 {
        let mut g = 0.0;
        if i > 0 {
            g += self.road_cond[i - 1];
        }
        if i < self.nx {
            g += self.road_cond[i];
        }
        g / self.road_len[i] + self.mu
    }

    fn compute_max_rate(&self) -> f64 {
        let mut r: f64 = 0.0;
        for i in 0..=self.nx {
            r = r.max(self.road_rate(i));
            for j in 0..=self.ny {
                r = r.max(self.field_rate(i, j));
            }
        }
        r
    }

    /// The closed-form bound alone: the minimum over columns of
    /// `hx^2 hy^2 / (2d (A11 hy^2 + A22 hx^2 + |A12| hx hy))`,
    /// `tau^2 hx^2 / (2D)` and `1 / (mu + nu + f'(0))`.
    pub fn formula_dt(&self) -> f64 {
        self.formula_dt
    }

    /// Largest node rate (sum of outgoing conductances over volume, plus
    /// exchange and `f'(0)`).
    pub fn max_rate(&self) -> f64 {
        self.max_rate
    }

    /// Largest stable, monotone step: `min(formula, 1 / max node rate)`.
    pub fn max_dt(&self) -> f64 {
        self.formula_dt.min(1.0 / self.max_rate)
    }

    /// `safety * max_dt()`.
    pub fn cfl_dt(&self, safety: f64) -> f64 {
        assert!(safety > 0.0 && safety <= 1.0, "safety must lie in (0, 1]");
        safety * self.max_dt()
    }

    fn dirichlet(&self) -> bool {
        self.grid.outer_bc == OuterBc::DirichletZero
    }

    /// Writes the state after one Euler step of size `dt` into `next_u`,
    /// `next_v`. Returns false if a non-finite value was produced.
    fn advance(&self, u: &[f64], v: &[f64], dt: f64, next_u: &mut [f64], next_v: &mut [f64]) -> bool {
        let n = self.ny + 1;
        let nx = self.nx;
        let dir = self.dirichlet();
        let ok = next_v
            .par_chunks_mut(n)
            .enumerate()
            .map(|(i, out)| {
                if dir && (i == 0 || i == nx) {
                    out.fill(0.0);
                    return true;
                }
                self.field_column(i, u, v, dt, out)
            })
            .reduce(|| true, |a, b| a && b);
        let mut road_ok = true;
        for i in 0..=nx {
            if dir && (i == 0 || i == nx) {
                next_u[i] = 0.0;
                continue;
            }
            let mut flux = 0.0;
            if i > 0 {
                flux += self.road_cond[i - 1] * (u[i - 1] - u[i]);
            }
            if i < nx {
                flux += self.road_cond[i] * (u[i + 1] - u[i]);
            }
            let ex = self.nu * v[i * n] - self.mu * u[i];
            let val = u[i] + dt * (flux / self.road_len[i] + ex);
            road_ok &= val.is_finite();
            next_u[i] = val;
        }
        ok && road_ok
    }

    fn field_column(&self, i: usize, u: &[f64], v: &[f64], dt: f64, out: &mut [f64]) -> bool {
        let n = self.ny + 1;
        let ny = self.ny;
        let col = &v[i * n..(i + 1) * n];
        let right = (i < self.nx).then(|| (&self.links[i], &v[(i + 1) * n..(i + 2) * n]));
        let left = (i > 0).then(|| (&self.links[i - 1], &v[(i - 1) * n..i * n]));
        let gv = self.vert[i];
        let area = self.field_area[i];
        let top = if self.dirichlet() { ny } else { ny + 1 };
        let mut finite = true;
        for j in 0..n {
            if j >= top {
                out[j] = 0.0;
                continue;
            }
            let c = col[j];
            let edge = j == 0 || j == ny;
            let mut flux = 0.0;
            if let Some((ls, nb)) = right {
                for l in ls.iter().flatten() {
                    let t = j as isize + l.shift;
                    if t >= 0 && t <= ny as isize {
                        let g = if l.flat && edge { 0.5 * l.g } else { l.g };
                        flux += g * (nb[t as usize] - c);
                    }
                }
            }
            if let Some((ls, nb)) = left {
                for l in ls.iter().flatten() {
                    let t = j as isize - l.shift;
                    if t >= 0 && t <= ny as isize {
                        let g = if l.flat && edge { 0.5 * l.g } else { l.g };
                        flux += g * (nb[t as usize] - c);
                    }
                }
            }
            if j > 0 {
                flux += gv * (col[j - 1] - c);
            }
            if j < ny {
                flux += gv * (col[j + 1] - c);
            }
            let vol = if edge { 0.5 * area } else { area };
            if j == 0 {
                flux -= self.road_len[i] * (self.nu * c - self.mu * u[i]);
            }
            let val = c + dt * (flux / vol + self.reaction.eval(c));
            finite &= val.is_finite();
            out[j] = val;
        }
        finite
    }
}

/// Double-buffered integrator for one scheme.
#[derive(Debug, Clone)]
pub struct Stepper {
    scheme: Scheme,
    scratch_u: Vec<f64>,
    scratch_v: Vec<f64>,
}

impl Stepper {
    /// Builds the scheme for `state`'s grid and road.
    pub fn new(state: &FieldState, params: &ModelParams) -> Result<Stepper, SolverError> {
        let scheme = Scheme::new(&state.geometry, params, &state.grid)?;
        Ok(Stepper {
            scratch_u: vec![0.0; state.u.len()],
            scratch_v: vec![0.0; state.v.len()],
            scheme,
        })
    }

    /// The scheme.
    pub fn scheme(&self) -> &Scheme {
        &self.scheme
    }

    /// Advances `state` by `dt` in place.
    pub fn step(&mut self, state: &mut FieldState, dt: f64) -> Result<(), SolverError> {
        let max = self.scheme.max_dt();
        if !(dt > 0.0 && dt <= max * (1.0 + 1e-12)) {
            return Err(SolverError::Cfl { dt, max });
        }
        if !state.grid.same_nodes(&self.scheme.grid) {
            return Err(SolverError::GridMismatch);
        }
        let ok = self
            .scheme
            .advance(&state.u, &state.v, dt, &mut self.scratch_u, &mut self.scratch_v);
        std::mem::swap(&mut state.u, &mut self.scratch_u);
        std::mem::swap(&mut state.v, &mut self.scratch_v);
        state.t += dt;
        if ok {
            Ok(())
        } else {
            Err(SolverError::NonFinite { t: state.t })
        }
    }
}

/// One Euler step. Rebuilds the scheme; use [`Stepper`] for long runs.
pub fn step(state: &FieldState, dt: f64, params: &ModelParams) -> Result<FieldState, SolverError> {
    let mut s = Stepper::new(state, params)?;
    let mut next = state.clone();
    s.step(&mut next, dt)?;
    Ok(next)
}

/// `safety` times the stability bound for `state`'s grid and road.
pub fn cfl_dt(state: &FieldState, params: &ModelParams, safety: f64) -> Result<f64, SolverError> {
    Ok(Scheme::new(&state.geometry, params, &state.grid)?.cfl_dt(safety))
}

/// Road mass `sum u tau hx` plus field mass `sum v hx hy`, with the control
/// volume weights of the scheme, summed in a fixed order.
pub fn total_mass(state: &FieldState) -> f64 {
    let g = &state.grid;
    let metric = state.geometry.metric();
    let n = g.ny() + 1;
    let mut road = 0.0;
    let mut field = 0.0;
    for (i, &ui) in state.u.iter().enumerate() {
        let x = g.x(i);
        road += ui * metric.tau(x) * g.hx * g.wx(i);
        let mut col = 0.0;
        for (j, &vj) in state.v[i * n..(i + 1) * n].iter().enumerate() {
            col += vj * g.wy(j);
        }
        field += col * g.hx * g.hy * g.wx(i);
    }
    road + field
}

/// Evolves `lo` and `hi` with a common step and reports whether
/// `lo <= hi + 1e-10` holds componentwise after every step.
pub fn ordering_preserved(
    lo: &FieldState,
    hi: &FieldState,
    params: &ModelParams,
    n_steps: usize,
) -> Result<bool, SolverError> {
    if !lo.grid.same_nodes(&hi.grid) || lo.u.len() != hi.u.len() || lo.v.len() != hi.v.len() {
        return Err(SolverError::GridMismatch);
    }
    let mut a = lo.clone();
    let mut b = hi.clone();
    let mut sa = Stepper::new(&a, params)?;
    let mut sb = Stepper::new(&b, params)?;
    let dt = sa.scheme.cfl_dt(0.9).min(sb.scheme.cfl_dt(0.9));
    let ordered = |a: &FieldState, b: &FieldState| {
        a.u.iter().zip(&b.u).chain(a.v.iter().zip(&b.v)).all(|(x, y)| y - x >= POSITIVITY_TOL)
    };
    if !ordered(&a, &b) {
        return Ok(false);
    }
    for _ in 0..n_steps {
        sa.step(&mut a, dt)?;
        sb.step(&mut b, dt)?;
        if !ordered(&a, &b) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Everything [`run`] needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Road.
    pub geometry: Geometry,
    /// Parameters.
    pub params: ModelParams,
    /// Grid.
    pub grid: GridSpec,
    /// Initial datum.
    pub datum: Datum,
    /// Final time.
    pub t_final: f64,
    /// Fraction of the stability bound used as time step.
    pub safety: f64,
}

/// One diagnostics row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    /// Time.
    pub t: f64,
    /// [`total_mass`].
    pub mass: f64,
    /// `min u`.
    pub min_u: f64,
    /// `min v`.
    pub min_v: f64,
    /// `max v`.
    pub max_v: f64,
    /// Distance to `(nu/mu, 1)` at the probe (see [`steady_residual`]).
    pub steady_residual: f64,
}

/// Distance of the state to the constant steady state `(nu/mu, 1)`.
///
/// With a probe point `(x, y)` this is `max(|u - nu/mu|, |v - 1|)` at the
/// nearest road and field nodes; without one it is the max norm over all
/// nodes.
pub fn steady_residual(state: &FieldState, params: &ModelParams, probe: Option<(f64, f64)>) -> f64 {
    let (us, vs) = params.steady_state();
    let g = &state.grid;
    match probe {
        Some((x, y)) => {
            let i = (((x - g.x_min) / g.hx).round().max(0.0) as usize).min(g.nx());
            let w = y - state.geometry.rho(g.x(i));
            let j = ((w / g.hy).round().max(0.0) as usize).min(g.ny());
            (state.u[i] - us).abs().max((state.v_at(i, j) - vs).abs())
        }
        None => {
            let a = state.u.iter().map(|u| (u - us).abs()).fold(0.0, f64::max);
            let b = state.v.iter().map(|v| (v - vs).abs()).fold(0.0, f64::max);
            a.max(b)
        }
    }
}

/// Diagnostics row of `state` (see [`steady_residual`] for `probe`).
pub fn diagnostics(state: &FieldState, params: &ModelParams, probe: Option<(f64, f64)>) -> Diagnostics {
    let (min_u, min_v, max_v) = state.extrema();
    Diagnostics {
        t: state.t,
        mass: total_mass(state),
        min_u,
        min_v,
        max_v,
        steady_residual: steady_residual(state, params, probe),
    }
}

/// Snapshots every `nt_report` steps (and at the end) with diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Time step used.
    pub dt: f64,
    /// States, starting with the datum.
    pub snapshots: Vec<FieldState>,
    /// One row per snapshot.
    pub diagnostics: Vec<Diagnostics>,
}

/// Integrates `config` to `t_final`, calling `observe` on the datum, every
/// `nt_report` steps and on the final state. Returns the step size and the
/// number of steps.
pub fn run_with(
    config: &RunConfig,
    mut observe: impl FnMut(&FieldState),
) -> Result<(f64, usize), SolverError> {
    if !(config.t_final.is_finite() && config.t_final >= 0.0) {
        return Err(SolverError::Config(format!("t_final = {} must be >= 0", config.t_final)));
    }
    if !(config.safety > 0.0 && config.safety <= 1.0) {
        return Err(SolverError::Config(format!("safety = {} must lie in (0, 1]", config.safety)));
    }
    let mut state = discretize(&config.geometry, &config.params, &config.grid, &config.datum)?;
    let mut stepper = Stepper::new(&state, &config.params)?;
    let dt0 = stepper.scheme.cfl_dt(config.safety);
    let n_steps = (config.t_final / dt0).ceil() as usize;
    let dt = if n_steps == 0 { dt0 } else { config.t_final / n_steps as f64 };
    observe(&state);
    for k in 1..=n_steps {
        stepper.step(&mut state, dt)?;
        if k % config.grid.nt_report == 0 || k == n_steps {
            observe(&state);
        }
    }
    Ok((dt, n_steps))
}

/// Integrates `config` and keeps every reported state.
pub fn run(config: &RunConfig) -> Result<Trajectory, SolverError> {
    let probe = config.datum.center();
    let mut snapshots = Vec::new();
    let mut diags = Vec::new();
    let (dt, _) = run_with(config, |s| {
        diags.push(diagnostics(s, &config.params, probe));
        snapshots.push(s.clone());
    })?;
    Ok(Trajectory {
        dt,
        snapshots,
        diagnostics: diags,
    })
}

/// Diagnostics only, without storing snapshots.
pub fn run_diagnostics(config: &RunConfig) -> Result<Vec<Diagnostics>, SolverError> {
    let probe = config.datum.center();
    let mut diags = Vec::new();
    run_with(config, |s| diags.push(diagnostics(s, &config.params, probe)))?;
    Ok(diags)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_links_reproduce_the_tensor() {
        for p in [0.0, 0.3, -0.7, 1.0, 2.45, -3.0] {
            for (hx, hy) in [(1.0, 1.0), (0.5, 0.25), (0.5, 1.0)] {
                let (ls, q) = split_links(p, hx, hy, 1.0);
                let mut t11 = 0.0;
                let mut t12 = 0.0;
                let mut t22 = 0.0;
                for l in ls.iter().flatten() {
                    let dy = l.shift as f64 * hy;
                    let c = l.g / (hx * hy);
                    t11 += c * hx * hx;
                    t12 += c * hx * dy;
                    t22 += c * dy * dy;
                }
                assert!((t11 - 1.0).abs() < 1e-12);
                assert!((t12 + p).abs() < 1e-12, "{p}: {t12}");
                assert!((t22 - q).abs() < 1e-12);
                assert!(q - p * p >= -1e-12 && q - p * p <= 0.25 * (hy / hx).powi(2) + 1e-12);
            }
        }
    }
}
