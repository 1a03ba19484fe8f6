//! Flat `key = value` configuration files.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Every key is optional; unknown and repeated keys are errors.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::analysis::TrackOptions;
use crate::geometry::Geometry;
use crate::model::{ModelError, ModelParams, Reaction};
use crate::solver::{Datum, GridSpec, OuterBc};

/// Errors of [`parse_config`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    /// The file could not be read.
    #[error("cannot read {path}: {msg}")]
    Io {
        /// Path.
        path: String,
        /// OS message.
        msg: String,
    },
    /// A line is not `key = value`.
    #[error("line {line}: {msg}")]
    Syntax {
        /// 1-based line.
        line: usize,
        /// What went wrong.
        msg: String,
    },
    /// The key is not recognized.
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey {
        /// Key.
        key: String,
        /// 1-based line.
        line: usize,
    },
    /// The key appears twice.
    #[error("duplicate key `{key}` on lines {first} and {second}")]
    Duplicate {
        /// Key.
        key: String,
        /// First line.
        first: usize,
        /// Second line.
        second: usize,
    },
    /// The value does not parse or violates an invariant.
    #[error("invalid value for `{key}`: {msg}")]
    Invalid {
        /// Key.
        key: String,
        /// What went wrong.
        msg: String,
    },
}

/// Recognized keys with their defaults (`""` when unset by default).
pub const KEYS: &[(&str, &str)] = &[
    ("d", "1"),
    ("D", "4"),
    ("mu", "1"),
    ("nu", "1"),
    ("reaction", "logistic"),
    ("fprime0", "1"),
    ("delta", "0.05"),
    ("geometry", "exact_cone"),
    ("a", "1"),
    ("bump_h", "1"),
    ("table", ""),
    ("geometries", ""),
    ("x_min", "-300"),
    ("x_max", "300"),
    ("y_max", "60"),
    ("hx", "0.5"),
    ("hy", "0.5"),
    ("nt_report", "1000"),
    ("outer_bc", "dirichlet_zero"),
    ("t_final", "120"),
    ("safety", "0.4"),
    ("datum", "speed_run"),
    ("snapshots", "true"),
    ("thresholds", "0.3,0.5,0.7"),
    ("sample_every", "0.5"),
    ("t_min", "20"),
    ("window_fraction", "0.4"),
    ("v_tracker_h", "2"),
    ("c", ""),
    ("c_factor", ""),
    ("speeds", ""),
    ("eta", "0"),
    ("eps", "0"),
    ("strip_l", "20"),
    ("lambda_init", "1"),
    ("steps", "10000"),
    ("trials", "20"),
    ("trial_steps", "1000"),
    ("seed", "0"),
];

/// Raw assignments, keyed by name, with their line numbers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, usize)>,
}

impl RawConfig {
    /// Parses file contents.
    pub fn parse(text: &str) -> Result<RawConfig, ConfigError> {
        let mut entries: BTreeMap<String, (String, usize)> = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    msg: format!("expected `key = value`, got `{body}`"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    msg: "empty key".into(),
                });
            }
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(ConfigError::UnknownKey { key: key.into(), line });
            }
            if let Some((_, first)) = entries.get(key) {
                return Err(ConfigError::Duplicate {
                    key: key.into(),
                    first: *first,
                    second: line,
                });
            }
            entries.insert(key.into(), (value.into(), line));
        }
        Ok(RawConfig { entries })
    }

    /// Value of `key`, falling back to its default.
    pub fn get(&self, key: &str) -> &str {
        match self.entries.get(key) {
            Some((v, _)) => v,
            None => KEYS.iter().find(|(k, _)| *k == key).map_or("", |(_, d)| d),
        }
    }

    /// True when `key` was set explicitly.
    pub fn is_set(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        msg: msg.into(),
    }
}

fn real(raw: &RawConfig, key: &str) -> Result<f64, ConfigError> {
    let s = raw.get(key);
    let v: f64 = s.parse().map_err(|_| invalid(key, format!("`{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(invalid(key, "must be finite"));
    }
    Ok(v)
}

fn positive(raw: &RawConfig, key: &str) -> Result<f64, ConfigError> {
    let v = real(raw, key)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(key, format!("must be > 0, got {v}")))
    }
}

fn optional_real(raw: &RawConfig, key: &str) -> Result<Option<f64>, ConfigError> {
    if raw.get(key).is_empty() {
        Ok(None)
    } else {
        real(raw, key).map(Some)
    }
}

fn count(raw: &RawConfig, key: &str) -> Result<usize, ConfigError> {
    let s = raw.get(key);
    s.parse().map_err(|_| invalid(key, format!("`{s}` is not a nonnegative integer")))
}

fn reals(raw: &RawConfig, key: &str) -> Result<Vec<f64>, ConfigError> {
    let s = raw.get(key);
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| invalid(key, format!("`{t}` is not a finite number")))
        })
        .collect()
}

fn boolean(raw: &RawConfig, key: &str) -> Result<bool, ConfigError> {
    match raw.get(key) {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        s => Err(invalid(key, format!("`{s}` is not a boolean"))),
    }
}

/// Road selected by `spec` (`kind` or `kind:a`), with `a` and `bump_h` as
/// defaults for the parameter.
fn geometry_from(spec: &str, raw: &RawConfig, key: &str) -> Result<Geometry, ConfigError> {
    let (kind, param) = match spec.split_once(':') {
        Some((k, p)) => {
            let v: f64 = p
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| invalid(key, format!("bad parameter in `{spec}`")))?;
            (k.trim(), Some(v))
        }
        None => (spec.trim(), None),
    };
    match kind {
        "exact_cone" => Ok(Geometry::exact_cone(param.map_or_else(|| real(raw, "a"), Ok)?)),
        "hyperbola" => Ok(Geometry::hyperbola(param.map_or_else(|| real(raw, "a"), Ok)?)),
        "flat" => Ok(Geometry::flat()),
        "bump" => Ok(Geometry::bump(param.map_or_else(|| real(raw, "bump_h"), Ok)?)),
        "table" => {
            let path = raw.get("table");
            if path.is_empty() {
                return Err(invalid("table", "geometry = table needs a `table` path"));
            }
            read_table(path, raw.is_set("a").then(|| real(raw, "a")).transpose()?)
        }
        _ => Err(invalid(
            key,
            format!("`{kind}` is not one of exact_cone, hyperbola, flat, bump, table"),
        )),
    }
}

/// Reads a two-column CSV road table with header `x,rho`.
fn read_table(path: &str, a: Option<f64>) -> Result<Geometry, ConfigError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| invalid("table", e.to_string()))?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| invalid("table", e.to_string()))?;
        let get = |k: usize| -> Result<f64, ConfigError> {
            rec.get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| invalid("table", format!("bad row {:?}", rec)))
        };
        xs.push(get(0)?);
        ys.push(get(1)?);
    }
    Geometry::from_table(xs, ys, a).map_err(|e| invalid("table", e.to_string()))
}

/// Everything the subcommands need, validated.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Parameters.
    pub params: ModelParams,
    /// Main road.
    pub geometry: Geometry,
    /// Roads of the `speed` subcommand (defaults to `[geometry]`).
    pub geometries: Vec<Geometry>,
    /// Grid.
    pub grid: GridSpec,
    /// Final time.
    pub t_final: f64,
    /// Fraction of the stability bound.
    pub safety: f64,
    /// Initial datum.
    pub datum: Datum,
    /// Write field snapshots in `simulate`.
    pub snapshots: bool,
    /// Front tracking options.
    pub track: TrackOptions,
    /// Absolute certificate speed.
    pub c: Option<f64>,
    /// Certificate speed as a multiple of the reference speed.
    pub c_factor: Option<f64>,
    /// Extra speeds for the `dispersion` table.
    pub speeds: Vec<f64>,
    /// Perturbation `eta` of the `dispersion` table.
    pub eta: f64,
    /// Perturbation `eps` of the `dispersion` table.
    pub eps: f64,
    /// Strip height for `c_L` and subsolutions.
    pub strip_l: f64,
    /// Initial `Lambda` of the subsolution verifier.
    pub lambda_init: f64,
    /// Steps of `mass-check`.
    pub steps: usize,
    /// Trials of `properties`.
    pub trials: usize,
    /// Steps per trial of `properties`.
    pub trial_steps: usize,
    /// Random seed.
    pub seed: u64,
    /// Effective `key = value` pairs in key order, for output headers.
    pub entries: Vec<(String, String)>,
}

/// Reads and validates `path`.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    RunConfig::from_raw(&RawConfig::parse(&text)?)
}

fn model_error(e: ModelError) -> ConfigError {
    match e {
        ModelError::InvalidParam { name, value, reason } => invalid(name, format!("{value} {reason}")),
        ModelError::NotKpp(v) => invalid("reaction", v.to_string()),
        ModelError::SlopeMismatch { .. } => invalid("fprime0", e.to_string()),
    }
}

impl RunConfig {
    /// Validates raw assignments.
    pub fn from_raw(raw: &RawConfig) -> Result<RunConfig, ConfigError> {
        let d = positive(raw, "d")?;
        let big_d = positive(raw, "D")?;
        let mu = positive(raw, "mu")?;
        let nu = positive(raw, "nu")?;
        let params = match raw.get("reaction") {
            "logistic" => {
                let fp = positive(raw, "fprime0")?;
                if fp != 1.0 {
                    return Err(invalid("fprime0", "the logistic reaction has f'(0) = 1"));
                }
                let delta = real(raw, "delta")?;
                ModelParams::new(d, big_d, mu, nu, Reaction::Logistic, 1.0)
                    .and_then(|p| p.with_delta(delta))
                    .map_err(model_error)?
            }
            "zero" => ModelParams::conservative(d, big_d, mu, nu).map_err(model_error)?,
            s => return Err(invalid("reaction", format!("`{s}` is not one of logistic, zero"))),
        };
        let geometry = geometry_from(raw.get("geometry"), raw, "geometry")?;
        let geometries = if raw.get("geometries").is_empty() {
            vec![geometry.clone()]
        } else {
            raw.get("geometries")
                .split(',')
                .map(|s| geometry_from(s, raw, "geometries"))
                .collect::<Result<_, _>>()?
        };
        let outer_bc: OuterBc = raw.get("outer_bc").parse().map_err(|e: String| invalid("outer_bc", e))?;
        let grid = GridSpec {
            x_min: real(raw, "x_min")?,
            x_max: real(raw, "x_max")?,
            y_max: positive(raw, "y_max")?,
            hx: positive(raw, "hx")?,
            hy: positive(raw, "hy")?,
            nt_report: count(raw, "nt_report")?,
            outer_bc,
        };
        if let Err(e) = grid.validate() {
            let key = match &e {
                crate::solver::SolverError::Grid(m) if m.contains("nt_report") => "nt_report",
                crate::solver::SolverError::Grid(m) if m.contains("hy") => "hy",
                crate::solver::SolverError::Grid(m) if m.starts_with("y ") => "y_max",
                _ => "x_max",
            };
            return Err(invalid(key, e.to_string()));
        }
        let t_final = real(raw, "t_final")?;
        if t_final < 0.0 {
            return Err(invalid("t_final", "must be >= 0"));
        }
        let safety = positive(raw, "safety")?;
        if safety > 1.0 {
            return Err(invalid("safety", "must lie in (0, 1]"));
        }
        let datum = match raw.get("datum") {
            "speed_run" => Datum::speed_run(&geometry),
            "zero" => Datum::Zero,
            "steady" => {
                let (u, v) = params.steady_state();
                Datum::Constant { u, v }
            }
            s => return Err(invalid("datum", format!("`{s}` is not one of speed_run, zero, steady"))),
        };
        let thresholds = reals(raw, "thresholds")?;
        if thresholds.is_empty() || thresholds.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return Err(invalid("thresholds", "need fractions of nu/mu in (0, 1)"));
        }
        let window_fraction = positive(raw, "window_fraction")?;
        if window_fraction > 1.0 {
            return Err(invalid("window_fraction", "must lie in (0, 1]"));
        }
        let v_tracker_h = real(raw, "v_tracker_h")?;
        if !(v_tracker_h >= 0.0 && v_tracker_h <= grid.y_max) {
            return Err(invalid("v_tracker_h", "must lie in [0, y_max]"));
        }
        let track = TrackOptions {
            thresholds,
            sample_every: positive(raw, "sample_every")?,
            t_min: real(raw, "t_min")?,
            window_fraction,
            safety,
            v_tracker_h,
        };
        let c = optional_real(raw, "c")?;
        let c_factor = optional_real(raw, "c_factor")?;
        if c.is_some() && c_factor.is_some() {
            return Err(invalid("c_factor", "set either `c` or `c_factor`, not both"));
        }
        if c.is_some_and(|c| c <= 0.0) {
            return Err(invalid("c", "must be > 0"));
        }
        if c_factor.is_some_and(|c| c <= 0.0) {
            return Err(invalid("c_factor", "must be > 0"));
        }
        let eta = real(raw, "eta")?;
        if eta < 0.0 {
            return Err(invalid("eta", "must be >= 0"));
        }
        let eps = real(raw, "eps")?;
        if !(0.0..1.0).contains(&eps) {
            return Err(invalid("eps", "must lie in [0, 1)"));
        }
        let seed_s = raw.get("seed");
        let seed = seed_s
            .parse()
            .map_err(|_| invalid("seed", format!("`{seed_s}` is not a nonnegative integer")))?;
        let entries = KEYS.iter().map(|(k, _)| (k.to_string(), raw.get(k).to_string())).collect();
        Ok(RunConfig {
            params,
            geometry,
            geometries,
            grid,
            t_final,
            safety,
            datum,
            snapshots: boolean(raw, "snapshots")?,
            track,
            c,
            c_factor,
            speeds: reals(raw, "speeds")?,
            eta,
            eps,
            strip_l: positive(raw, "strip_l")?,
            lambda_init: positive(raw, "lambda_init")?,
            steps: count(raw, "steps")?,
            trials: count(raw, "trials")?,
            trial_steps: count(raw, "trial_steps")?,
            seed,
            entries,
        })
    }

    /// Defaults for every key.
    pub fn defaults() -> RunConfig {
        RunConfig::from_raw(&RawConfig::default()).expect("defaults are valid")
    }

    /// Replaces the seed (and its header entry).
    pub fn with_seed(mut self, seed: u64) -> RunConfig {
        self.seed = seed;
        if let Some(e) = self.entries.iter_mut().find(|(k, _)| k == "seed") {
            e.1 = seed.to_string();
        }
        self
    }
}
