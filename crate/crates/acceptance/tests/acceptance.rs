//! Acceptance criteria 1 to 8. Prints one PASS/FAIL line per criterion and
//! exits with status 1 if any fails.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use fieldroad::analysis::{track_fronts, FrontRun, Side, TrackOptions};
use fieldroad::certificates::{
    asymptotic_supersolution, build_subsolution, conical_supersolution, perturbation_bounds, verify_subsolution,
};
use fieldroad::dispersion::{c_brr, c_kpp, c_l, critical_pair, default_seeds, intersection_witness, solve_complex};
use fieldroad::solver::{
    discretize, ordering_preserved, total_mass, Datum, GridSpec, OuterBc, PointFn, Stepper,
};
use fieldroad::{Geometry, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn params(road_d: f64) -> ModelParams {
    ModelParams::logistic(1.0, road_d, 1.0, 1.0).unwrap()
}

fn report(n: usize, title: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let out = f();
    let el = t.elapsed();
    let in_time = el <= limit;
    let pass = out.pass && in_time;
    println!(
        "criterion {n} ({title}): {} [{:.1} s of {} s] {}{}",
        if pass { "PASS" } else { "FAIL" },
        el.as_secs_f64(),
        limit.as_secs(),
        out.detail,
        if in_time { "" } else { "; over the time limit" }
    );
    pass
}

fn criterion_1() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    let ck = c_kpp(&params(2.0));
    ok &= ck == 2.0;
    let c2 = c_brr(&params(2.0), 1e-10).unwrap();
    ok &= (c2 - 2.0).abs() <= 1e-6;
    notes.push(format!("c_kpp = {ck}, c_brr(2) = {c2:.9}"));
    let mut prev = 2.0;
    let mut worst: f64 = 0.0;
    for road_d in [2.5, 3.0, 4.0, 6.0] {
        let p = params(road_d);
        let c = c_brr(&p, 1e-10).unwrap();
        ok &= c > prev;
        prev = c;
        match intersection_witness(c, 0.0, 0.0, &p).unwrap() {
            Some(w) => worst = worst.max(w.max_residual(&p)),
            None => ok = false,
        }
        notes.push(format!("c_brr({road_d}) = {c:.8}"));
    }
    ok &= worst <= 1e-10;
    notes.push(format!("worst witness residual {worst:.1e}"));
    Outcome {
        pass: ok,
        detail: notes.join(", "),
    }
}

fn criterion_2() -> Outcome {
    let p = params(4.0).with_delta(0.0).unwrap();
    let ck = c_kpp(&p);
    let cb = c_brr(&p, 1e-12).unwrap();
    let (a, b) = critical_pair(&p).unwrap();
    let seeds = default_seeds(a, b);
    let mut ok = true;
    let mut prev_gap = f64::INFINITY;
    let mut notes = Vec::new();
    let mut worst: f64 = 0.0;
    for l in [10.0, 20.0, 40.0] {
        let Ok(cl) = c_l(l, &p, 1e-10) else {
            return Outcome {
                pass: false,
                detail: format!("no c_L at L = {l}"),
            };
        };
        let gap = cb - cl;
        ok &= ck < cl && cl < cb && gap < prev_gap;
        prev_gap = gap;
        let roots = solve_complex(cl - 1e-6, l, &p, &seeds).unwrap();
        ok &= !roots.is_empty();
        for r in &roots {
            worst = worst.max(r.max_residual(&p));
            ok &= r.beta.re > 0.0;
        }
        notes.push(format!("c_L({l}) = {cl:.8} (gap {gap:.2e}, {} roots)", roots.len()));
    }
    ok &= worst <= 1e-10;
    notes.push(format!("worst root residual {worst:.1e}"));
    Outcome {
        pass: ok,
        detail: notes.join(", "),
    }
}

fn criterion_3() -> Outcome {
    let p = params(4.0);
    let cb = c_brr(&p, 1e-12).unwrap();
    let mut ok = true;
    let mut notes = Vec::new();
    for (label, theta0) in [("pi/4", FRAC_PI_4), ("pi/2", FRAC_PI_2), ("3pi/4", 3.0 * PI / 4.0)] {
        match conical_supersolution(1.05 * cb, theta0, &p) {
            Ok(cert) => {
                let min = cert.residuals.iter().map(|m| m.value).fold(f64::INFINITY, f64::min);
                let loss = cert.refinement_loss(&p).unwrap_or(f64::INFINITY);
                ok &= cert.valid && min >= 0.0 && loss <= 0.5;
                notes.push(format!("cone {label}: R = {}, min margin {min:.2e}, loss {loss:.3}", cert.r0));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("cone {label}: {e}"));
            }
        }
    }
    match asymptotic_supersolution(1.1 * cb, &Geometry::hyperbola(1.0), &p) {
        Ok(cert) => {
            ok &= cert.valid;
            notes.push(format!("hyperbola a = 1: valid = {}, R = {}", cert.valid, cert.r0));
        }
        Err(e) => {
            ok = false;
            notes.push(format!("hyperbola a = 1: {e}"));
        }
    }
    Outcome {
        pass: ok,
        detail: notes.join(", "),
    }
}

fn criterion_4() -> Outcome {
    let p = params(4.0);
    let cl = c_l(20.0, &p, 1e-10).unwrap();
    let mut notes = vec![format!("c = 0.95 c_L = {:.6}", 0.95 * cl)];
    let bump = Geometry::bump(1.0);
    let cert = match build_subsolution(0.95 * cl, 20.0, &p, &bump) {
        Ok(c) => c,
        Err(e) => {
            return Outcome {
                pass: false,
                detail: format!("build failed: {e}"),
            }
        }
    };
    let bump_ok = match verify_subsolution(&cert, &p, &bump, 1.0) {
        Ok(v) => {
            let failing: Vec<String> = v
                .residuals
                .iter()
                .filter(|m| m.value < 0.0)
                .map(|m| format!("{} = {:.2e}", m.name, m.value))
                .collect();
            notes.push(format!(
                "bump road: valid = {}, Lambda = {:?}{}",
                v.valid,
                v.big_lambda,
                if failing.is_empty() {
                    String::new()
                } else {
                    format!(", negative: {}", failing.join(", "))
                }
            ));
            v.valid && v.big_lambda.is_some_and(f64::is_finite)
        }
        Err(e) => {
            notes.push(format!("bump road: {e}"));
            false
        }
    };
    let flat = Geometry::flat();
    let b = perturbation_bounds(&cert, &p, &flat, 1.0).unwrap();
    let flat_sup = b.eps1.max(b.eps2).max(b.eps3);
    let flat_valid = verify_subsolution(&cert, &p, &flat, 1.0).is_ok_and(|v| v.valid);
    notes.push(format!("flat road: sup eps = {flat_sup:.1e}, valid = {flat_valid}"));
    Outcome {
        pass: bump_ok && flat_sup <= 1e-12,
        detail: notes.join(", "),
    }
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

fn criterion_5() -> Outcome {
    let p = params(4.0);
    let roads = [Geometry::exact_cone(1.0), Geometry::hyperbola(1.0), Geometry::bump(1.0)];
    let mut ok = true;

    let (us, vs) = p.steady_state();
    let mut steady: f64 = 0.0;
    for g in &roads {
        let mut s = discretize(g, &p, &small_grid(10.0, OuterBc::Reflecting), &Datum::Constant { u: us, v: vs }).unwrap();
        let mut st = Stepper::new(&s, &p).unwrap();
        let dt = st.scheme().cfl_dt(1.0);
        for _ in 0..10 {
            let before = (s.u.clone(), s.v.clone());
            st.step(&mut s, dt).unwrap();
            let r = s
                .u
                .iter()
                .zip(&before.0)
                .chain(s.v.iter().zip(&before.1))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            steady = steady.max(r);
        }
    }
    ok &= steady <= 1e-13;

    let cons = ModelParams::conservative(1.0, 4.0, 1.0, 1.0).unwrap();
    let mut drift: f64 = 0.0;
    for g in &roads {
        let mut s = discretize(g, &cons, &small_grid(20.0, OuterBc::Reflecting), &Datum::speed_run(g)).unwrap();
        let mut st = Stepper::new(&s, &cons).unwrap();
        let dt = st.scheme().cfl_dt(0.9);
        let m0 = total_mass(&s);
        for _ in 0..10_000 {
            st.step(&mut s, dt).unwrap();
        }
        drift = drift.max((total_mass(&s) - m0).abs() / m0);
    }
    ok &= drift <= 1e-6;

    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let grid = small_grid(10.0, OuterBc::Reflecting);
    let mut held = 0;
    for trial in 0..20 {
        let g = &roads[trial % roads.len()];
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
        let a = discretize(g, &p, &grid, &lo).unwrap();
        let b = discretize(g, &p, &grid, &hi).unwrap();
        held += usize::from(ordering_preserved(&a, &b, &p, 1000).unwrap());
    }
    ok &= held == 20;
    Outcome {
        pass: ok,
        detail: format!("steady residual {steady:.1e}, mass drift {drift:.1e}, ordering {held}/20"),
    }
}

fn desk_grid(h: f64) -> GridSpec {
    GridSpec {
        x_min: -300.0,
        x_max: 300.0,
        y_max: 60.0,
        hx: h,
        hy: h,
        nt_report: 1000,
        outer_bc: OuterBc::DirichletZero,
    }
}

fn desk_run(road_d: f64, a: f64, h: f64) -> FrontRun {
    let g = Geometry::exact_cone(a);
    track_fronts(&g, &params(road_d), &desk_grid(h), &Datum::speed_run(&g), 120.0, &TrackOptions::default()).unwrap()
}

/// Fitted speeds at level `nu/(2 mu)`: `[right, left]`.
fn speeds(run: &FrontRun) -> [f64; 2] {
    let o = TrackOptions::default();
    [Side::Right, Side::Left].map(|s| run.fit(0.5, s, &o).unwrap().0)
}

fn criterion_6(runs: &[FrontRun; 2]) -> Outcome {
    let cb = c_brr(&params(5.0), 1e-12).unwrap();
    let o = TrackOptions::default();
    let [s0, s1] = [speeds(&runs[0]), speeds(&runs[1])];
    let all: Vec<f64> = s0.iter().chain(&s1).copied().collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(0.0, f64::max);
    let spread = (hi - lo) / hi;
    let worst_bias = all.iter().map(|s| (s - cb) / cb).fold(0.0, |m: f64, b| if b.abs() > m.abs() { b } else { m });
    let mut thr_spread: f64 = 0.0;
    for run in runs {
        for side in [Side::Right, Side::Left] {
            let v: Vec<f64> = o.thresholds.iter().map(|&f| run.fit(f, side, &o).unwrap().0).collect();
            let (a, b) = v.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
            thr_spread = thr_spread.max((b - a) / b);
        }
    }
    let edge = runs.iter().map(|r| r.edge_max).fold(0.0, f64::max);
    Outcome {
        pass: spread <= 0.05 && worst_bias.abs() <= 0.15,
        detail: format!(
            "c_brr = {cb:.5}, a = 0: {:.4}/{:.4}, a = 1: {:.4}/{:.4} (right/left), spread {:.2}%, signed bias {:+.2}%, threshold spread {:.2}%, edge max {edge:.1e}",
            s0[0],
            s0[1],
            s1[0],
            s1[1],
            100.0 * spread,
            100.0 * worst_bias,
            100.0 * thr_spread
        ),
    }
}

fn criterion_7() -> Outcome {
    let ck = c_kpp(&params(1.5));
    let mut ok = true;
    let mut notes = vec![format!("c_kpp = {ck}")];
    for a in [0.0, 1.0] {
        let s = speeds(&desk_run(1.5, a, 0.5));
        for v in s {
            ok &= ((v - ck) / ck).abs() <= 0.10;
        }
        notes.push(format!(
            "a = {a}: {:.4}/{:.4} (bias {:+.2}%)",
            s[0],
            s[1],
            100.0 * ((s[0] - ck) / ck)
        ));
    }
    Outcome {
        pass: ok,
        detail: notes.join(", "),
    }
}

fn criterion_8(coarse: &[FrontRun; 2]) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (k, a) in [0.0, 1.0].into_iter().enumerate() {
        let fine = speeds(&desk_run(5.0, a, 0.25));
        let base = speeds(&coarse[k]);
        for i in 0..2 {
            let change = (fine[i] - base[i]) / base[i];
            ok &= change.abs() <= 0.02;
            notes.push(format!(
                "a = {a} {}: {:.4} -> {:.4} ({:+.2}%)",
                ["right", "left"][i],
                base[i],
                fine[i],
                100.0 * change
            ));
        }
    }
    Outcome {
        pass: ok,
        detail: notes.join(", "),
    }
}

fn main() -> ExitCode {
    let s = Duration::from_secs;
    let mut results = vec![
        report(1, "dispersion regression", s(5), criterion_1),
        report(2, "complex dispersion", s(30), criterion_2),
        report(3, "supersolution certificates", s(60), criterion_3),
        report(4, "subsolution certificate", s(60), criterion_4),
        report(5, "solver structure", s(300), criterion_5),
    ];
    let mut desk: Option<[FrontRun; 2]> = None;
    results.push(report(6, "road-enhanced speed at desk scale", s(900), || {
        let runs = [desk_run(5.0, 0.0, 0.5), desk_run(5.0, 1.0, 0.5)];
        let out = criterion_6(&runs);
        desk = Some(runs);
        out
    }));
    results.push(report(7, "KPP regime", s(900), criterion_7));
    let desk = desk.expect("criterion 6 ran");
    results.push(report(8, "grid convergence", s(1800), || criterion_8(&desk)));
    let failed = results.iter().filter(|&&p| !p).count();
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
