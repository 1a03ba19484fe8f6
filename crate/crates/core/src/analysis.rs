//! Front tracking and spreading-speed estimates.
//!
//! Fronts are measured on the road variable: the position at time `t` is the
//! Euclidean norm `sqrt(x^2 + rho(x)^2)` of the outermost road point where
//! `u` reaches a threshold. Speeds are least-squares slopes of the position
//! over the late part of the run.

use rayon::prelude::*;
use thiserror::Error;

use crate::dispersion::{c_brr, c_kpp, DispersionError};
use crate::geometry::Geometry;
use crate::model::ModelParams;
use crate::solver::{discretize, Datum, FieldState, GridSpec, SolverError, Stepper, SUPPORT_MARGIN_CELLS};

/// Errors of this module.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    /// Propagated from the solver.
    #[error(transparent)]
    Solver(#[from] SolverError),
    /// Propagated from the dispersion module.
    #[error(transparent)]
    Dispersion(#[from] DispersionError),
    /// The fit window holds fewer than 10 samples.
    #[error("fit window holds {n} samples, need at least 10")]
    TooFewSamples {
        /// Samples in the window.
        n: usize,
    },
    /// Threshold outside `(0, nu/mu)`.
    #[error("threshold {0} must lie strictly between 0 and nu/mu")]
    Threshold(f64),
    /// Invalid option.
    #[error("invalid option: {0}")]
    Option(String),
}

/// Direction along the road.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// Towards `x_max`.
    Right,
    /// Towards `x_min`.
    Left,
}

impl Side {
    /// Lowercase label.
    pub fn name(self) -> &'static str {
        match self {
            Side::Right => "right",
            Side::Left => "left",
        }
    }
}

/// Outermost crossing of `level` by `values` sampled at `x(i)`, with linear
/// interpolation towards the next node outwards. `None` if no value reaches
/// the level.
fn crossing(values: impl Fn(usize) -> f64, n: usize, x: impl Fn(usize) -> f64, level: f64, side: Side) -> Option<f64> {
    match side {
        Side::Right => {
            let i = (0..n).rev().find(|&i| values(i) >= level)?;
            if i + 1 == n {
                return Some(x(i));
            }
            let (a, b) = (values(i), values(i + 1));
            Some(x(i) + (x(i + 1) - x(i)) * (a - level) / (a - b))
        }
        Side::Left => {
            let i = (0..n).find(|&i| values(i) >= level)?;
            if i == 0 {
                return Some(x(0));
            }
            let (a, b) = (values(i), values(i - 1));
            Some(x(i) - (x(i) - x(i - 1)) * (a - level) / (a - b))
        }
    }
}

/// Road front: `r~(x*)` for the outermost road point `x*` on `side` where
/// `u >= threshold`, linearly interpolated between the bracketing nodes.
/// Returns 0 when no node reaches the threshold.
///
/// # Panics
///
/// Panics unless `threshold > 0`.
pub fn front_position(state: &FieldState, threshold: f64, side: Side) -> f64 {
    assert!(threshold > 0.0, "threshold must be positive");
    let g = &state.grid;
    crossing(|i| state.u[i], state.u.len(), |i| g.x(i), threshold, side)
        .map_or(0.0, |x| state.geometry.metric().rtilde(x))
}

/// Field front at fixed distance `h` above the road: `r~` of the outermost
/// point of the row `w = h` where `v >= threshold`, or 0.
///
/// # Panics
///
/// Panics unless `threshold > 0` and `h` lies on the grid.
pub fn field_front_position(state: &FieldState, threshold: f64, side: Side, h: f64) -> f64 {
    assert!(threshold > 0.0, "threshold must be positive");
    let g = &state.grid;
    let j = (h / g.hy).round() as usize;
    assert!(j <= g.ny(), "h is above the strip");
    let n = g.nx() + 1;
    crossing(|i| state.v_at(i, j), n, |i| g.x(i), threshold, side).map_or(0.0, |x| {
        let y = state.geometry.rho(x) + g.w(j);
        x.hypot(y)
    })
}

/// Front positions sampled in time.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontSeries {
    /// Sample times, strictly increasing.
    pub times: Vec<f64>,
    /// Front positions.
    pub positions: Vec<f64>,
    /// Level used.
    pub threshold: f64,
}

impl FrontSeries {
    /// Empty series at `threshold`.
    pub fn new(threshold: f64) -> Self {
        FrontSeries {
            times: Vec::new(),
            positions: Vec::new(),
            threshold,
        }
    }

    /// Appends a sample; `t` must exceed the last time.
    pub fn push(&mut self, t: f64, position: f64) {
        assert!(self.times.last().is_none_or(|&l| t > l), "times must increase");
        self.times.push(t);
        self.positions.push(position);
    }

    /// Copy without the samples before `t_min`.
    pub fn after(&self, t_min: f64) -> FrontSeries {
        let k = self.times.partition_point(|&t| t < t_min);
        FrontSeries {
            times: self.times[k..].to_vec(),
            positions: self.positions[k..].to_vec(),
            threshold: self.threshold,
        }
    }

    /// Largest backward move of the position among samples with `t >= t_min`
    /// (0 for a nondecreasing front).
    pub fn largest_retreat(&self, t_min: f64) -> f64 {
        let s = self.after(t_min);
        s.positions.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }
}

/// Least-squares slope of position against time over the final
/// `window_fraction` of the time span, with its standard error.
pub fn fit_speed(series: &FrontSeries, window_fraction: f64) -> Result<(f64, f64), AnalysisError> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(AnalysisError::Option(format!(
            "window fraction {window_fraction} must lie in (0, 1]"
        )));
    }
    let (Some(&t0), Some(&t1)) = (series.times.first(), series.times.last()) else {
        return Err(AnalysisError::TooFewSamples { n: 0 });
    };
    let start = t1 - window_fraction * (t1 - t0);
    let k = series.times.partition_point(|&t| t < start - 1e-9 * t1.abs().max(1.0));
    let (ts, ps) = (&series.times[k..], &series.positions[k..]);
    let n = ts.len();
    if n < 10 {
        return Err(AnalysisError::TooFewSamples { n });
    }
    let nf = n as f64;
    let tm = ts.iter().sum::<f64>() / nf;
    let pm = ps.iter().sum::<f64>() / nf;
    let sxx: f64 = ts.iter().map(|t| (t - tm).powi(2)).sum();
    let sxy: f64 = ts.iter().zip(ps).map(|(t, p)| (t - tm) * (p - pm)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = ts
        .iter()
        .zip(ps)
        .map(|(t, p)| (p - pm - slope * (t - tm)).powi(2))
        .sum();
    let stderr = (ssr / (nf - 2.0) / sxx).sqrt();
    Ok((slope, stderr))
}

/// Knobs of a front-tracking run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackOptions {
    /// Road thresholds as fractions of `nu/mu`.
    pub thresholds: Vec<f64>,
    /// Time between samples.
    pub sample_every: f64,
    /// Samples before this time are ignored by the fit.
    pub t_min: f64,
    /// Fit window, as a fraction of the remaining time span.
    pub window_fraction: f64,
    /// Fraction of the stability bound used as time step.
    pub safety: f64,
    /// Height of the field tracker above the road.
    pub v_tracker_h: f64,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions {
            thresholds: vec![0.3, 0.5, 0.7],
            sample_every: 0.5,
            t_min: 20.0,
            window_fraction: 0.4,
            safety: 0.4,
            v_tracker_h: 2.0,
        }
    }
}

/// Front series of one run.
#[derive(Debug, Clone)]
pub struct FrontRun {
    /// Road.
    pub geometry: Geometry,
    /// Time step used.
    pub dt: f64,
    /// Road fronts: `(fraction of nu/mu, side, series)`.
    pub road: Vec<(f64, Side, FrontSeries)>,
    /// Field fronts at height `v_tracker_h`, level 1/2.
    pub field: Vec<(Side, FrontSeries)>,
    /// Largest `u` or `v` seen within the Dirichlet support margin of the
    /// side edges (0 if the front never got close).
    pub edge_max: f64,
    /// Smallest value of `u` and `v` over all samples.
    pub min_value: f64,
    /// Final state.
    pub last: FieldState,
}

impl FrontRun {
    /// Road series at `fraction` and `side`.
    pub fn series(&self, fraction: f64, side: Side) -> Option<&FrontSeries> {
        self.road
            .iter()
            .find(|(f, s, _)| *f == fraction && *s == side)
            .map(|(_, _, x)| x)
    }

    /// Speed fitted on the road series at `fraction`, `side`.
    pub fn fit(&self, fraction: f64, side: Side, opts: &TrackOptions) -> Result<(f64, f64), AnalysisError> {
        let s = self
            .series(fraction, side)
            .ok_or_else(|| AnalysisError::Option(format!("no series at threshold fraction {fraction}")))?;
        fit_speed(&s.after(opts.t_min), opts.window_fraction)
    }
}

/// Runs the solver from `datum` to `t_final` and records the fronts every
/// `sample_every` time units.
pub fn track_fronts(
    geometry: &Geometry,
    params: &ModelParams,
    grid: &GridSpec,
    datum: &Datum,
    t_final: f64,
    opts: &TrackOptions,
) -> Result<FrontRun, AnalysisError> {
    let (us, _) = params.steady_state();
    for &f in &opts.thresholds {
        if !(f > 0.0 && f < 1.0) {
            return Err(AnalysisError::Threshold(f * us));
        }
    }
    if !(opts.sample_every > 0.0 && t_final >= 0.0) {
        return Err(AnalysisError::Option("need sample_every > 0 and t_final >= 0".into()));
    }
    let mut state = discretize(geometry, params, grid, datum)?;
    let mut stepper = Stepper::new(&state, params)?;
    let dt_max = stepper.scheme().cfl_dt(opts.safety);
    let sub = (opts.sample_every / dt_max).ceil().max(1.0) as usize;
    let dt = opts.sample_every / sub as f64;
    let n_samples = (t_final / opts.sample_every).round() as usize;

    let mut road: Vec<(f64, Side, FrontSeries)> = Vec::new();
    for &f in &opts.thresholds {
        for side in [Side::Right, Side::Left] {
            road.push((f, side, FrontSeries::new(f * us)));
        }
    }
    let mut field: Vec<(Side, FrontSeries)> = [Side::Right, Side::Left]
        .into_iter()
        .map(|s| (s, FrontSeries::new(0.5)))
        .collect();
    let nx = grid.nx();
    let m = SUPPORT_MARGIN_CELLS;
    let mut edge_max: f64 = 0.0;
    let mut min_value = f64::INFINITY;
    let mut record = |s: &FieldState, k: usize| {
        let t = k as f64 * opts.sample_every;
        for (_, side, series) in road.iter_mut() {
            let th = series.threshold;
            series.push(t, front_position(s, th, *side));
        }
        for (side, series) in field.iter_mut() {
            series.push(t, field_front_position(s, 0.5, *side, opts.v_tracker_h));
        }
        for i in (0..m.min(nx + 1)).chain(nx.saturating_sub(m)..=nx) {
            edge_max = edge_max.max(s.u[i]);
            edge_max = s.column(i).iter().fold(edge_max, |a, &b| a.max(b));
        }
        let (a, b, _) = s.extrema();
        min_value = min_value.min(a).min(b);
    };
    record(&state, 0);
    for k in 1..=n_samples {
        for _ in 0..sub {
            stepper.step(&mut state, dt)?;
        }
        // keep sample times exact
        state.t = k as f64 * opts.sample_every;
        record(&state, k);
    }
    Ok(FrontRun {
        geometry: geometry.clone(),
        dt,
        road,
        field,
        edge_max,
        min_value,
        last: state,
    })
}

/// One line of the speed table.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedRow {
    /// Road label.
    pub geometry: String,
    /// Asymptotic slope.
    pub a: f64,
    /// Half-angle.
    pub theta0: f64,
    /// Direction.
    pub side: Side,
    /// Fitted speed.
    pub speed: f64,
    /// Its standard error.
    pub stderr: f64,
    /// `2 sqrt(d f'(0))`.
    pub c_kpp: f64,
    /// Predicted road speed.
    pub c_brr: f64,
    /// `speed / c_brr`.
    pub ratio: f64,
}

impl SpeedRow {
    /// CSV header.
    pub const HEADER: &'static str = "geometry,a,theta0,side,speed,stderr,c_kpp,c_brr,ratio";

    /// CSV record (same order as [`SpeedRow::HEADER`]).
    pub fn record(&self) -> Vec<String> {
        vec![
            self.geometry.clone(),
            self.a.to_string(),
            self.theta0.to_string(),
            self.side.name().to_string(),
            self.speed.to_string(),
            self.stderr.to_string(),
            self.c_kpp.to_string(),
            self.c_brr.to_string(),
            self.ratio.to_string(),
        ]
    }
}

/// Runs every geometry from its [`Datum::speed_run`] datum (or `datum` when
/// given), fits both sides at threshold `nu/(2 mu)` and tabulates the speeds
/// against `c_KPP` and `c_BRR`.
pub fn speed_report(
    params: &ModelParams,
    geometries: &[Geometry],
    grid: &GridSpec,
    t_final: f64,
    datum: Option<&Datum>,
    opts: &TrackOptions,
) -> Result<Vec<SpeedRow>, AnalysisError> {
    let ck = c_kpp(params);
    let cb = c_brr(params, 1e-10)?;
    let opts = TrackOptions {
        thresholds: vec![0.5],
        ..opts.clone()
    };
    let runs: Vec<Result<FrontRun, AnalysisError>> = geometries
        .par_iter()
        .map(|g| {
            let d = datum.cloned().unwrap_or_else(|| Datum::speed_run(g));
            track_fronts(g, params, grid, &d, t_final, &opts)
        })
        .collect();
    let mut rows = Vec::new();
    for run in runs {
        rows.extend(speed_rows(&run?, &opts, ck, cb)?);
    }
    Ok(rows)
}

/// Both-side rows of `run` at threshold `nu/(2 mu)`.
pub fn speed_rows(run: &FrontRun, opts: &TrackOptions, c_kpp: f64, c_brr: f64) -> Result<Vec<SpeedRow>, AnalysisError> {
    let mut rows = Vec::new();
    for side in [Side::Right, Side::Left] {
        let (speed, stderr) = run.fit(0.5, side, opts)?;
        rows.push(SpeedRow {
            geometry: run.geometry.name().to_string(),
            a: run.geometry.a(),
            theta0: run.geometry.theta0(),
            side,
            speed,
            stderr,
            c_kpp,
            c_brr,
            ratio: speed / c_brr,
        });
    }
    Ok(rows)
}
