use std::f64::consts::PI;

use fieldroad::geometry::{det2, half_angle, polar};
use fieldroad::model::{kpp_check, logistic_reaction, KppFailure, Reaction};
use fieldroad::{Geometry, ModelParams};
use proptest::prelude::*;

#[test]
fn sine_reaction_passes_the_ratio_test() {
    // independent scan of sin(pi v)/v on the same grid
    let n = 1000;
    let step = 1.0 / (n - 1) as f64;
    let ratios: Vec<f64> = (1..n).map(|k| (PI * k as f64 * step).sin() / (k as f64 * step)).collect();
    assert!(ratios.windows(2).all(|w| w[1] < w[0]));
    assert!((PI).sin().abs() < 1e-12);
    assert_eq!(kpp_check(|v| (PI * v).sin(), n), Ok(()));
}

#[test]
fn ratio_increase_is_located() {
    // v(1-v)(1+4v) has f/v = (1-v)(1+4v), increasing until v = 3/8
    let err = kpp_check(|v| v * (1.0 - v) * (1.0 + 4.0 * v), 11).unwrap_err();
    assert_eq!(err.kind, KppFailure::RatioIncreasing);
    assert!((err.v - 0.2).abs() < 1e-15);
    let err = kpp_check(|v| v * (1.0 - v) - 0.01, 11).unwrap_err();
    assert_eq!(err.kind, KppFailure::NonzeroAtZero);
}

#[test]
fn custom_reaction_params() {
    let f = Reaction::custom("sine", |v| (PI * v).sin() / PI);
    let p = ModelParams::new(1.0, 3.0, 1.0, 2.0, f, 1.0).unwrap();
    assert_eq!(p.steady_state(), (2.0, 1.0));
    assert!(p.is_kpp());
    assert!((p.penalized_growth() - 0.95).abs() < 1e-15);
    let q = p.penalized();
    assert!((q.fprime0 - 0.95).abs() < 1e-15 && q.delta == 0.0);
    assert!(!ModelParams::conservative(1.0, 3.0, 1.0, 2.0).unwrap().is_kpp());
}

#[test]
fn cone_is_c2_at_the_junction() {
    for a in [-1.0, 0.5, 2.0] {
        let g = Geometry::exact_cone(a);
        for x in [1.0, -1.0] {
            let (l, r) = (g.eval(x - 1e-9), g.eval(x + 1e-9));
            assert!((l.0 - r.0).abs() < 1e-8);
            assert!((l.1 - r.1).abs() < 1e-8);
            assert!((l.2 - r.2).abs() < 1e-6);
        }
    }
}

#[test]
fn metric_examples() {
    let g = Geometry::exact_cone(1.0);
    let m = g.metric();
    assert!((m.tau(5.0) - 2f64.sqrt()).abs() < 1e-15);
    assert!((m.rtilde(3.0) - 3.0 * 2f64.sqrt()).abs() < 1e-12);
    assert!((m.thetatilde(3.0) - PI / 4.0).abs() < 1e-15);
    assert!((m.thetatilde(-3.0) + PI / 4.0).abs() < 1e-15);
    assert_eq!(m.diffusion_matrix(2.0), [[1.0, -1.0], [-1.0, 2.0]]);
}

fn any_geometry() -> impl Strategy<Value = Geometry> {
    prop_oneof![
        (-3.0f64..3.0).prop_map(Geometry::exact_cone),
        (-3.0f64..3.0).prop_map(Geometry::hyperbola),
        (0.0f64..3.0).prop_map(Geometry::bump),
    ]
}

proptest! {
    #[test]
    fn diffusion_matrix_has_unit_determinant(g in any_geometry(), x in -50.0f64..50.0) {
        let m = g.metric().diffusion_matrix(x);
        prop_assert!((det2(m) - 1.0).abs() <= 1e-12 * (1.0 + m[1][1]));
        prop_assert!(m[0][0] > 0.0 && m[1][1] >= 1.0);
        prop_assert!(g.metric().tau(x) >= 1.0);
    }

    #[test]
    fn built_in_roads_are_even(g in any_geometry(), x in 0.0f64..100.0) {
        prop_assert!(g.is_even());
        prop_assert!((g.rho(x) - g.rho(-x)).abs() <= 1e-12 * (1.0 + g.rho(x).abs()));
        prop_assert!((g.rho_d1(x) + g.rho_d1(-x)).abs() <= 1e-12 * (1.0 + g.rho_d1(x).abs()));
    }

    #[test]
    fn half_angle_is_symmetric(a in -100.0f64..100.0) {
        let s = half_angle(a) + half_angle(-a);
        prop_assert!((s - PI).abs() < 1e-14);
        prop_assert!(half_angle(a) > 0.0 && half_angle(a) < PI);
    }

    #[test]
    fn polar_round_trip(x in -100.0f64..100.0, y in -100.0f64..100.0) {
        prop_assume!(x != 0.0 || y != 0.0);
        let (r, t) = polar(x, y).unwrap();
        prop_assert!(t > -PI && t <= PI);
        prop_assert!((r * t.sin() - x).abs() < 1e-12 * (1.0 + r));
        prop_assert!((r * t.cos() - y).abs() < 1e-12 * (1.0 + r));
    }

    #[test]
    fn far_field_follows_the_cone(a in -3.0f64..3.0, x in 1e3f64..1e5) {
        let g = Geometry::hyperbola(a);
        prop_assert!((g.rho(x) - a * x).abs() <= 1.0 + 1e-9);
        prop_assert!((g.metric().thetatilde(x) - half_angle(a)).abs() < 2e-3);
    }

    #[test]
    fn logistic_stays_kpp(n in 2usize..3000) {
        let f = logistic_reaction();
        prop_assert!(kpp_check(|v| f.eval(v), n).is_ok());
    }

    #[test]
    fn kpp_reactions_sit_below_their_slope(k in 0.1f64..3.0, n in 2usize..500) {
        // k v (1 - v) has f'(0) = k
        let f = Reaction::custom("scaled", move |v| k * v * (1.0 - v));
        let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, f, k).unwrap();
        for i in 1..=n {
            let v = i as f64 / n as f64;
            prop_assert!(p.reaction.eval(v) <= p.fprime0 * v + 1e-12);
        }
    }
}
