//! Solver property suites behind the `properties` subcommand.
//!
//! They run on small fixed grids with the configured parameters:
//! equilibrium of `(nu/mu, 1)`, mass conservation with `f = 0`, ordering of
//! random smooth pairs, and positivity from a compact datum.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::RunConfig;
use crate::geometry::Geometry;
use crate::model::ModelParams;
use crate::solver::{
    discretize, ordering_preserved, total_mass, Datum, GridSpec, OuterBc, PointFn, SolverError, Stepper,
    POSITIVITY_TOL,
};

/// Pass count of one suite.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    /// Suite name.
    pub name: &'static str,
    /// Passing cases.
    pub passed: usize,
    /// Cases run.
    pub total: usize,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
}

fn small_grid(half: f64, bc: OuterBc) -> GridSpec {
    GridSpec {
        x_min: -half,
        x_max: half,
        y_max: half,
        hx: 0.5,
        hy: 0.5,
        nt_report: 100,
        outer_bc: bc,
    }
}

fn roads() -> [Geometry; 3] {
    [Geometry::exact_cone(0.0), Geometry::exact_cone(1.0), Geometry::hyperbola(1.0)]
}

/// Sum of four Gaussian bumps with random centers, widths and heights in
/// `[0, scale]`.
fn random_smooth(rng: &mut ChaCha8Rng, scale: f64) -> PointFn {
    let bumps: Vec<[f64; 4]> = (0..4)
        .map(|_| {
            [
                rng.gen_range(-8.0..8.0),
                rng.gen_range(-2.0..10.0),
                rng.gen_range(1.0..4.0),
                scale * rng.gen_range(0.0..1.0),
            ]
        })
        .collect();
    Arc::new(move |x, y| {
        bumps
            .iter()
            .map(|&[cx, cy, r, a]| a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (r * r)).exp())
            .sum()
    })
}

/// Runs the four suites.
pub fn run_properties(cfg: &RunConfig) -> Result<Vec<PropertyResult>, SolverError> {
    let p = &cfg.params;
    let mut out = Vec::new();

    // equilibrium
    let (us, vs) = p.steady_state();
    let mut worst: f64 = 0.0;
    let mut passed = 0;
    for g in roads() {
        let grid = small_grid(10.0, OuterBc::Reflecting);
        let mut s = discretize(&g, p, &grid, &Datum::Constant { u: us, v: vs })?;
        let mut st = Stepper::new(&s, p)?;
        st.step(&mut s, st.scheme().cfl_dt(cfg.safety))?;
        let r = s
            .u
            .iter()
            .map(|u| (u - us).abs())
            .chain(s.v.iter().map(|v| (v - vs).abs()))
            .fold(0.0, f64::max);
        worst = worst.max(r);
        passed += usize::from(r <= 1e-13);
    }
    out.push(PropertyResult {
        name: "steady_state",
        passed,
        total: 3,
        worst,
    });

    // conservation
    let cons = ModelParams::conservative(p.d, p.road_d, p.mu, p.nu).expect("validated parameters");
    let mut worst: f64 = 0.0;
    let mut passed = 0;
    for g in roads() {
        let grid = small_grid(20.0, OuterBc::Reflecting);
        let mut s = discretize(&g, &cons, &grid, &Datum::speed_run(&g))?;
        let mut st = Stepper::new(&s, &cons)?;
        let dt = st.scheme().cfl_dt(cfg.safety);
        let m0 = total_mass(&s);
        for _ in 0..cfg.steps {
            st.step(&mut s, dt)?;
        }
        let drift = (total_mass(&s) - m0).abs() / m0;
        worst = worst.max(drift);
        passed += usize::from(drift <= 1e-6);
    }
    out.push(PropertyResult {
        name: "mass_conservation",
        passed,
        total: 3,
        worst,
    });

    // ordering
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut passed = 0;
    let grid = small_grid(10.0, OuterBc::Reflecting);
    let all = roads();
    for trial in 0..cfg.trials {
        let g = &all[trial % all.len()];
        let (lu, lv) = (random_smooth(&mut rng, 0.6), random_smooth(&mut rng, 0.6));
        let (du, dv) = (random_smooth(&mut rng, 0.4), random_smooth(&mut rng, 0.4));
        let lo = Datum::Custom {
            road: lu.clone(),
            field: lv.clone(),
        };
        let hi = Datum::Custom {
            road: Arc::new(move |x, y| lu(x, y) + du(x, y)),
            field: Arc::new(move |x, y| lv(x, y) + dv(x, y)),
        };
        let a = discretize(g, p, &grid, &lo)?;
        let b = discretize(g, p, &grid, &hi)?;
        passed += usize::from(ordering_preserved(&a, &b, p, cfg.trial_steps)?);
    }
    out.push(PropertyResult {
        name: "ordering",
        passed,
        total: cfg.trials,
        worst: 0.0,
    });

    // positivity
    let mut worst = f64::INFINITY;
    let mut passed = 0;
    for g in roads() {
        let grid = small_grid(20.0, OuterBc::DirichletZero);
        let mut s = discretize(&g, p, &grid, &Datum::speed_run(&g))?;
        let mut st = Stepper::new(&s, p)?;
        let dt = st.scheme().cfl_dt(cfg.safety);
        let mut low = f64::INFINITY;
        for _ in 0..cfg.trial_steps {
            st.step(&mut s, dt)?;
            let (a, b, _) = s.extrema();
            low = low.min(a).min(b);
        }
        worst = worst.min(low);
        passed += usize::from(low >= POSITIVITY_TOL);
    }
    out.push(PropertyResult {
        name: "positivity",
        passed,
        total: 3,
        worst,
    });
    Ok(out)
}
