use std::fs;
use std::path::PathBuf;
use std::process::Command;

use fieldroad::cli::{self, ConfigError, RawConfig, RunConfig};

fn scratch(name: &str) -> PathBuf {
    let p = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&p);
    fs::create_dir_all(&p).unwrap();
    p
}

fn write_config(dir: &PathBuf, text: &str) -> PathBuf {
    let p = dir.join("run.cfg");
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> i32 {
    let mut v = vec!["fieldroad".to_string()];
    v.extend(args.iter().map(|s| s.to_string()));
    cli::main(v)
}

const SMALL: &str = "\
d = 1
D = 4
mu = 1
nu = 1
reaction = logistic
geometry = hyperbola
a = 1
x_min = -30
x_max = 30
y_max = 20
hx = 1
hy = 1
nt_report = 50
t_final = 4
snapshots = true
";

#[test]
fn minimal_config_gets_defaults() {
    let raw = RawConfig::parse("d = 1\nD = 4\nmu = 1\nnu = 1\nreaction = logistic\ngeometry = hyperbola\na = 1\n").unwrap();
    let cfg = RunConfig::from_raw(&raw).unwrap();
    assert_eq!(cfg.params.road_d, 4.0);
    assert_eq!(cfg.geometry.name(), "hyperbola:1");
    assert_eq!(cfg.grid.hx, 0.5);
    assert_eq!(cfg.t_final, 120.0);
    assert_eq!(cfg.track.thresholds, vec![0.3, 0.5, 0.7]);
    assert_eq!(cfg.seed, 0);
}

#[test]
fn negative_road_diffusivity_names_the_key() {
    let raw = RawConfig::parse("D = -1\n").unwrap();
    let err = RunConfig::from_raw(&raw).unwrap_err();
    match &err {
        ConfigError::Invalid { key, .. } => assert_eq!(key, "D"),
        e => panic!("unexpected {e:?}"),
    }
    assert!(err.to_string().contains("`D`"));
}

#[test]
fn duplicate_key_cites_both_lines() {
    let err = RawConfig::parse("d = 1\n# comment\nmu = 2\nd = 3\n").unwrap_err();
    assert_eq!(
        err,
        ConfigError::Duplicate {
            key: "d".into(),
            first: 1,
            second: 4
        }
    );
    assert!(err.to_string().contains("lines 1 and 4"));
}

#[test]
fn unknown_key_and_syntax_errors() {
    assert!(matches!(
        RawConfig::parse("colour = red\n"),
        Err(ConfigError::UnknownKey { line: 1, .. })
    ));
    assert!(matches!(
        RawConfig::parse("\n\nd 1\n"),
        Err(ConfigError::Syntax { line: 3, .. })
    ));
    let raw = RawConfig::parse("hx = abc\n").unwrap();
    assert!(matches!(RunConfig::from_raw(&raw), Err(ConfigError::Invalid { key, .. }) if key == "hx"));
    let raw = RawConfig::parse("geometry = spiral\n").unwrap();
    assert!(matches!(RunConfig::from_raw(&raw), Err(ConfigError::Invalid { key, .. }) if key == "geometry"));
}

#[test]
fn geometry_lists_and_tables() {
    let dir = scratch("table");
    let table = dir.join("road.csv");
    fs::write(&table, "x,rho\n-2,2\n-1,1\n0,0.5\n1,1\n2,2\n").unwrap();
    let text = format!(
        "geometry = table\ntable = {}\ngeometries = exact_cone:0, exact_cone:1, bump:2\n",
        table.display()
    );
    let cfg = RunConfig::from_raw(&RawConfig::parse(&text).unwrap()).unwrap();
    assert_eq!(cfg.geometry.name(), "table");
    assert!((cfg.geometry.rho(0.0) - 0.5).abs() < 1e-12);
    let names: Vec<_> = cfg.geometries.iter().map(|g| g.name().to_string()).collect();
    assert_eq!(names, ["exact_cone:0", "exact_cone:1", "bump:2"]);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&[]), 2);
    assert_eq!(run(&["frobnicate"]), 2);
    let dir = scratch("usage");
    let cfg = write_config(&dir, "D = -1\n");
    assert_eq!(run(&["dispersion", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]), 2);
    assert_eq!(run(&["dispersion", "--config", "/nonexistent/x.cfg"]), 2);
}

fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn dispersion_writes_reference_speeds() {
    let dir = scratch("dispersion");
    let cfg = write_config(&dir, "d = 1\nD = 4\nmu = 1\nnu = 1\nspeeds = 2.3, 1.5\n");
    let code = run(&[
        "dispersion",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert_eq!(code, 0);
    let summary = fs::read_to_string(dir.join("dispersion_summary.csv")).unwrap();
    assert!(summary.starts_with(&format!("# fieldroad {}\n", fieldroad::VERSION)));
    assert!(summary.contains("# seed = 7\n"));
    assert!(summary.contains("# D = 4\n"));
    let rows = data_rows(&summary);
    assert_eq!(rows[0], ["quantity", "value"]);
    let get = |k: &str| rows.iter().find(|r| r[0] == k).map(|r| r[1].clone()).unwrap();
    assert_eq!(get("c_kpp"), "2");
    assert!((get("c_brr").parse::<f64>().unwrap() - 2.26928922).abs() < 1e-6);
    assert_eq!(get("regime"), "road");
    let table = data_rows(&fs::read_to_string(dir.join("dispersion.csv")).unwrap());
    assert_eq!(table[0].join(","), "c,alpha,beta,gamma,eta,eps,residual");
    assert_eq!(table.len(), 3);
    for r in &table[1..] {
        assert!(r[6].parse::<f64>().unwrap() <= 1e-10);
    }
}

#[test]
fn certify_super_below_c_brr_fails() {
    let dir = scratch("super_low");
    let cfg = write_config(&dir, "D = 4\ngeometry = exact_cone\na = 1\nc_factor = 0.9\n");
    let code = run(&["certify-super", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(code, 1);
}

#[test]
fn certify_super_cone_succeeds() {
    let dir = scratch("super_ok");
    let cfg = write_config(&dir, "D = 4\ngeometry = exact_cone\na = 1\n");
    let code = run(&["certify-super", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(code, 0);
    let report = fs::read_to_string(dir.join("certificate.txt")).unwrap();
    assert!(report.contains("kind: conical\nvalid: true\n"));
    assert!(report.contains("refinement_loss: "));
    let margins = data_rows(&fs::read_to_string(dir.join("margins.csv")).unwrap());
    assert_eq!(margins[0].join(","), "name,value,kind");
}

#[test]
fn simulate_is_deterministic() {
    let a = scratch("sim_a");
    let b = scratch("sim_b");
    let cfg = write_config(&a, SMALL);
    for d in [&a, &b] {
        let code = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap(), "--seed", "3"]);
        assert_eq!(code, 0);
    }
    for f in ["road.csv", "field.csv", "diagnostics.csv"] {
        let x = fs::read(a.join(f)).unwrap();
        let y = fs::read(b.join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
    let diag = data_rows(&fs::read_to_string(a.join("diagnostics.csv")).unwrap());
    assert_eq!(diag[0].join(","), "t,mass,min_u,min_v,max_v,steady_residual");
    let field = data_rows(&fs::read_to_string(a.join("field.csv")).unwrap());
    assert_eq!(field[0].join(","), "t,x,w,v");
    let road = data_rows(&fs::read_to_string(a.join("road.csv")).unwrap());
    assert_eq!(road[0].join(","), "t,x,u");
}

#[test]
fn speed_mass_and_properties_subcommands() {
    let dir = scratch("speed");
    let text = format!("{SMALL}t_final = 30\nt_min = 5\n").replace("t_final = 4\n", "");
    let cfg = write_config(&dir, &text);
    let c = cfg.to_str().unwrap();
    let o = dir.to_str().unwrap();
    assert_eq!(run(&["speed", "--config", c, "--out", o]), 0);
    let rows = data_rows(&fs::read_to_string(dir.join("speeds.csv")).unwrap());
    assert_eq!(rows[0].join(","), "geometry,a,theta0,side,speed,stderr,c_kpp,c_brr,ratio");
    assert_eq!(rows.len(), 3);

    let mc = write_config(&dir, &format!("{SMALL}steps = 2000\n"));
    assert_eq!(run(&["mass-check", "--config", mc.to_str().unwrap(), "--out", o]), 0);

    let pc = write_config(&dir, "trials = 4\ntrial_steps = 200\nsteps = 500\n");
    assert_eq!(run(&["properties", "--config", pc.to_str().unwrap(), "--out", o, "--seed", "11"]), 0);
    let props = data_rows(&fs::read_to_string(dir.join("properties.csv")).unwrap());
    let ordering = props.iter().find(|r| r[0] == "ordering").unwrap();
    assert_eq!((ordering[1].as_str(), ordering[2].as_str()), ("4", "4"));
}

#[test]
fn binary_reports_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_fieldroad");
    let dir = scratch("binary");
    let ok = Command::new(exe)
        .args(["dispersion", "--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("c_kpp = 2"));
    let bad = Command::new(exe).args(["dispersion", "--bogus"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let cfg = write_config(&dir, "D = 4\ngeometry = exact_cone\na = 1\nc_factor = 0.9\n");
    let low = Command::new(exe)
        .args(["certify-super", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(low.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&low.stderr).contains("no perturbed witness"));
}
