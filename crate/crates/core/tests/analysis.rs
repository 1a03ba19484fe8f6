use fieldroad::analysis::*;
use fieldroad::solver::*;
use fieldroad::{Geometry, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params() -> ModelParams {
    ModelParams::logistic(1.0, 5.0, 1.0, 1.0).unwrap()
}

fn small_grid() -> GridSpec {
    GridSpec {
        x_min: -60.0,
        x_max: 60.0,
        y_max: 30.0,
        hx: 1.0,
        hy: 1.0,
        nt_report: 100,
        outer_bc: OuterBc::DirichletZero,
    }
}

fn state_with_road(g: &Geometry, u: impl Fn(f64) -> f64) -> FieldState {
    let p = params();
    let grid = GridSpec {
        outer_bc: OuterBc::Reflecting,
        hx: 0.5,
        hy: 0.5,
        ..small_grid()
    };
    let mut s = discretize(g, &p, &grid, &Datum::Zero).unwrap();
    for (i, v) in s.u.iter_mut().enumerate() {
        *v = u(grid.x(i));
    }
    s
}

#[test]
fn saturated_road_reaches_the_grid_end() {
    let g = Geometry::hyperbola(1.0);
    let s = state_with_road(&g, |_| 1.0);
    let r = front_position(&s, 0.5, Side::Right);
    assert_eq!(r, 60.0f64.hypot(g.rho(60.0)));
    let l = front_position(&s, 0.5, Side::Left);
    assert_eq!(l, 60.0f64.hypot(g.rho(-60.0)));
}

#[test]
fn empty_road_has_no_front() {
    let s = state_with_road(&Geometry::flat(), |_| 0.0);
    assert_eq!(front_position(&s, 0.5, Side::Right), 0.0);
    assert_eq!(front_position(&s, 0.5, Side::Left), 0.0);
}

#[test]
fn step_profile_front() {
    // last node at level 1 is x = 10, the next one is at 0: the level 1/2
    // crossing of the piecewise linear interpolant sits half a cell further
    let g = Geometry::hyperbola(1.0);
    let s = state_with_road(&g, |x| if x <= 10.0 { 1.0 } else { 0.0 });
    let x = 10.25;
    let expected = (x * x + g.rho(x).powi(2)).sqrt();
    assert!((front_position(&s, 0.5, Side::Right) - expected).abs() < 1e-12);
    // at a level just below 1 the crossing is at the node itself
    let near = front_position(&s, 1.0, Side::Right);
    assert!((near - (100.0 + g.rho(10.0).powi(2)).sqrt()).abs() < 1e-12);
}

fn series(f: impl Fn(f64) -> f64, n: usize, span: f64) -> FrontSeries {
    let mut s = FrontSeries::new(0.5);
    for k in 0..n {
        let t = span * k as f64 / (n - 1) as f64;
        s.push(t, f(t));
    }
    s
}

#[test]
fn fit_exact_line() {
    let (c, e) = fit_speed(&series(|t| 3.0 * t, 50, 100.0), 1.0).unwrap();
    assert!((c - 3.0).abs() < 1e-12);
    assert!(e < 1e-12);
}

#[test]
fn fit_constant() {
    let (c, e) = fit_speed(&series(|_| 7.0, 50, 100.0), 0.4).unwrap();
    assert_eq!((c, e), (0.0, 0.0));
}

#[test]
fn fit_noisy_line() {
    // regression oracle: closed-form least squares on the same noisy samples
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise: Vec<f64> = (0..50).map(|_| rng.gen_range(-0.1..0.1)).collect();
    let mut s = FrontSeries::new(0.5);
    for (k, e) in noise.iter().enumerate() {
        let t = 100.0 * k as f64 / 49.0;
        s.push(t, 3.0 * t + e);
    }
    let (c, se) = fit_speed(&s, 1.0).unwrap();
    assert!((c - 3.0).abs() < 0.05);
    let n = 50.0;
    let (st, sp) = (s.times.iter().sum::<f64>(), s.positions.iter().sum::<f64>());
    let stt: f64 = s.times.iter().map(|t| t * t).sum();
    let stp: f64 = s.times.iter().zip(&s.positions).map(|(t, p)| t * p).sum();
    let oracle = (n * stp - st * sp) / (n * stt - st * st);
    assert!((c - oracle).abs() < 1e-12);
    assert!(se > 0.0 && se < 0.01);
}

#[test]
fn fit_needs_ten_samples() {
    let s = series(|t| t, 20, 10.0);
    assert!(matches!(
        fit_speed(&s, 0.3),
        Err(AnalysisError::TooFewSamples { n: 6 })
    ));
    assert!(fit_speed(&s, 0.5).is_ok());
}

#[test]
fn zero_datum_has_speed_zero() {
    let g = Geometry::exact_cone(1.0);
    let opts = TrackOptions {
        t_min: 5.0,
        ..TrackOptions::default()
    };
    let rows = speed_report(&params(), &[g], &small_grid(), 30.0, Some(&Datum::Zero), &opts).unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert_eq!((r.speed, r.stderr), (0.0, 0.0));
    }
}

#[test]
fn small_run_front_is_monotone_and_symmetric() {
    let g = Geometry::hyperbola(1.0);
    let opts = TrackOptions {
        t_min: 5.0,
        window_fraction: 0.5,
        ..TrackOptions::default()
    };
    let run = track_fronts(&g, &params(), &small_grid(), &Datum::speed_run(&g), 15.0, &opts).unwrap();
    for (_, _, s) in &run.road {
        assert_eq!(s.times.len(), 31);
        assert_eq!(s.largest_retreat(5.0), 0.0, "{:?}", s.positions);
    }
    let (r, _) = run.fit(0.5, Side::Right, &opts).unwrap();
    let (l, _) = run.fit(0.5, Side::Left, &opts).unwrap();
    assert!(r > 1.0);
    assert!((r - l).abs() <= 0.01 * r);
    assert!(run.min_value >= POSITIVITY_TOL);
}

#[test]
fn bad_threshold_is_rejected() {
    let g = Geometry::flat();
    let opts = TrackOptions {
        thresholds: vec![1.2],
        ..TrackOptions::default()
    };
    assert!(matches!(
        track_fronts(&g, &params(), &small_grid(), &Datum::Zero, 1.0, &opts),
        Err(AnalysisError::Threshold(_))
    ));
}

#[test]
fn report_rows_carry_reference_speeds() {
    let g = Geometry::exact_cone(0.0);
    let opts = TrackOptions {
        t_min: 5.0,
        window_fraction: 0.5,
        ..TrackOptions::default()
    };
    let rows = speed_report(&params(), &[g], &small_grid(), 15.0, None, &opts).unwrap();
    for r in &rows {
        assert_eq!(r.c_kpp, 2.0);
        assert!(r.c_brr > 2.0);
        assert!((r.ratio - r.speed / r.c_brr).abs() < 1e-15);
        assert_eq!(r.record().len(), SpeedRow::HEADER.split(',').count());
    }
}
