//! The `fieldroad` command-line tool.
//!
//! Every subcommand reads an optional flat config file (`--config`), writes
//! CSV files into `--out` and prints a short summary. Each output file starts
//! with `#` comment lines recording the tool version, the command, the seed
//! and every effective config value, so that identical inputs give
//! byte-identical files.
//!
//! Exit codes: 0 on success, 1 when a certificate is invalid or a property
//! fails, 2 on usage or configuration errors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

mod config;
mod properties;

pub use config::{parse_config, ConfigError, RawConfig, RunConfig, KEYS};
pub use properties::{run_properties, PropertyResult};

use crate::analysis::{speed_rows, track_fronts, AnalysisError, FrontRun, SpeedRow};
use crate::certificates::{
    asymptotic_supersolution, build_subsolution, conical_supersolution, radial_supersolution, verify_subsolution,
    CertificateError,
};
use crate::dispersion::{self, c_brr, c_kpp, c_l, intersection_witness, DispersionError, Regime};
use crate::geometry::GeometryKind;
use crate::model::ModelParams;
use crate::solver::{self, total_mass, Datum, FieldState, OuterBc, Stepper};

#[derive(Debug, Parser)]
#[command(name = "fieldroad", version, about = "Field-road spreading: speeds, certificates and simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Random seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Speeds c_KPP, c_BRR, c_L and witnesses of the algebraic systems.
    Dispersion(Common),
    /// Integrate the system and write snapshots and diagnostics.
    Simulate(Common),
    /// Fit front speeds for one or more roads.
    Speed(Common),
    /// Build and verify a supersolution certificate.
    CertifySuper(Common),
    /// Build and verify a subsolution certificate.
    CertifySub(Common),
    /// Check mass conservation with f = 0 and reflecting boundaries.
    MassCheck(Common),
    /// Run the solver property suites.
    Properties(Common),
}

/// How a subcommand ended.
#[derive(Debug)]
enum Outcome {
    Success,
    Failed(String),
    Usage(String),
}

impl From<std::io::Error> for Outcome {
    fn from(e: std::io::Error) -> Self {
        Outcome::Usage(format!("output error: {e}"))
    }
}

impl From<csv::Error> for Outcome {
    fn from(e: csv::Error) -> Self {
        Outcome::Usage(format!("output error: {e}"))
    }
}

/// Entry point: `args` includes the program name. Returns the exit code.
pub fn main(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (name, common) = match &cli.command {
        Command::Dispersion(c) => ("dispersion", c),
        Command::Simulate(c) => ("simulate", c),
        Command::Speed(c) => ("speed", c),
        Command::CertifySuper(c) => ("certify-super", c),
        Command::CertifySub(c) => ("certify-sub", c),
        Command::MassCheck(c) => ("mass-check", c),
        Command::Properties(c) => ("properties", c),
    };
    let outcome = load(common).and_then(|cfg| {
        std::fs::create_dir_all(&common.out)?;
        let ctx = Context {
            name,
            out: &common.out,
            cfg: &cfg,
        };
        match &cli.command {
            Command::Dispersion(_) => cmd_dispersion(&ctx),
            Command::Simulate(_) => cmd_simulate(&ctx),
            Command::Speed(_) => cmd_speed(&ctx),
            Command::CertifySuper(_) => cmd_certify_super(&ctx),
            Command::CertifySub(_) => cmd_certify_sub(&ctx),
            Command::MassCheck(_) => cmd_mass_check(&ctx),
            Command::Properties(_) => cmd_properties(&ctx),
        }
    });
    match outcome.unwrap_or_else(|o| o) {
        Outcome::Success => 0,
        Outcome::Failed(msg) => {
            eprintln!("{name}: {msg}");
            1
        }
        Outcome::Usage(msg) => {
            eprintln!("{name}: {msg}");
            2
        }
    }
}

fn load(common: &Common) -> Result<RunConfig, Outcome> {
    let cfg = match &common.config {
        Some(p) => parse_config(p).map_err(|e| Outcome::Usage(e.to_string()))?,
        None => RunConfig::defaults(),
    };
    Ok(match common.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

struct Context<'a> {
    name: &'static str,
    out: &'a Path,
    cfg: &'a RunConfig,
}

impl Context<'_> {
    fn header(&self) -> String {
        let mut s = format!("# fieldroad {}\n# command = {}\n# seed = {}\n", crate::VERSION, self.name, self.cfg.seed);
        for (k, v) in &self.cfg.entries {
            if k != "seed" {
                s.push_str(&format!("# {k} = {v}\n"));
            }
        }
        s
    }

    /// CSV writer for `file` with the comment header already written.
    fn csv(&self, file: &str, columns: &[&str]) -> Result<csv::Writer<BufWriter<File>>, Outcome> {
        let mut f = BufWriter::new(File::create(self.out.join(file))?);
        f.write_all(self.header().as_bytes())?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(columns)?;
        Ok(w)
    }

    fn text(&self, file: &str, body: &str) -> Result<(), Outcome> {
        let mut f = BufWriter::new(File::create(self.out.join(file))?);
        f.write_all(self.header().as_bytes())?;
        f.write_all(body.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    /// Margins CSV below the header.
    fn margins(&self, file: &str, csv_body: &str) -> Result<(), Outcome> {
        self.text(file, csv_body)
    }
}

fn num(x: f64) -> String {
    x.to_string()
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Kpp => "kpp",
        Regime::Boundary => "boundary",
        Regime::Road => "road",
    }
}

fn dispersion_failure(e: DispersionError) -> Outcome {
    Outcome::Failed(e.to_string())
}

fn cmd_dispersion(ctx: &Context) -> Result<Outcome, Outcome> {
    let p = &ctx.cfg.params;
    if !p.is_kpp() {
        return Err(Outcome::Usage("dispersion needs a KPP reaction (reaction = logistic)".into()));
    }
    let ck = c_kpp(p);
    let reg = dispersion::regime(p);
    let cb = c_brr(p, 1e-10).map_err(dispersion_failure)?;
    let mut w = ctx.csv("dispersion.csv", &["c", "alpha", "beta", "gamma", "eta", "eps", "residual"])?;
    let mut push = |c: f64, eta: f64, eps: f64| -> Result<bool, Outcome> {
        match intersection_witness(c, eta, eps, p).map_err(dispersion_failure)? {
            Some(s) => {
                let r = s.max_residual(p);
                w.write_record([c, s.alpha, s.beta, s.gamma, eta, eps, r].map(num))?;
                Ok(true)
            }
            None => Ok(false),
        }
    };
    if reg == Regime::Road {
        push(cb, 0.0, 0.0)?;
    }
    for &c in &ctx.cfg.speeds {
        if c < ck {
            println!("c = {c}: below c_KPP, skipped");
        } else if !push(c, ctx.cfg.eta, ctx.cfg.eps)? {
            println!("c = {c}: no witness at eta = {}, eps = {}", ctx.cfg.eta, ctx.cfg.eps);
        }
    }
    w.flush()?;
    let mut s = ctx.csv("dispersion_summary.csv", &["quantity", "value"])?;
    s.write_record(["c_kpp".to_string(), num(ck)])?;
    s.write_record(["c_brr".to_string(), num(cb)])?;
    s.write_record(["regime".to_string(), regime_name(reg).to_string()])?;
    println!("c_kpp = {ck}");
    println!("c_brr = {cb}");
    println!("regime = {}", regime_name(reg));
    if reg == Regime::Road {
        match c_l(ctx.cfg.strip_l, p, 1e-10) {
            Ok(cl) => {
                s.write_record(["c_l".to_string(), num(cl)])?;
                s.write_record(["strip_l".to_string(), num(ctx.cfg.strip_l)])?;
                println!("c_L(L = {}) = {cl}", ctx.cfg.strip_l);
            }
            Err(e) => println!("c_L(L = {}): {e}", ctx.cfg.strip_l),
        }
    }
    s.flush()?;
    Ok(Outcome::Success)
}

fn solver_run_config(cfg: &RunConfig) -> solver::RunConfig {
    solver::RunConfig {
        geometry: cfg.geometry.clone(),
        params: cfg.params.clone(),
        grid: cfg.grid,
        datum: cfg.datum.clone(),
        t_final: cfg.t_final,
        safety: cfg.safety,
    }
}

fn cmd_simulate(ctx: &Context) -> Result<Outcome, Outcome> {
    let cfg = ctx.cfg;
    let rc = solver_run_config(cfg);
    let mut road = ctx.csv("road.csv", &["t", "x", "u"])?;
    let mut field = if cfg.snapshots {
        Some(ctx.csv("field.csv", &["t", "x", "w", "v"])?)
    } else {
        None
    };
    let mut diag = ctx.csv("diagnostics.csv", &["t", "mass", "min_u", "min_v", "max_v", "steady_residual"])?;
    let probe = cfg.datum.center();
    let mut io_err: Option<csv::Error> = None;
    let mut last = None;
    let mut write = |s: &FieldState| -> Result<(), csv::Error> {
        let g = &s.grid;
        for (i, u) in s.u.iter().enumerate() {
            road.write_record([s.t, g.x(i), *u].map(num))?;
        }
        if let Some(f) = field.as_mut() {
            for i in 0..=g.nx() {
                for (j, v) in s.column(i).iter().enumerate() {
                    f.write_record([s.t, g.x(i), g.w(j), *v].map(num))?;
                }
            }
        }
        let d = solver::diagnostics(s, &cfg.params, probe);
        diag.write_record([d.t, d.mass, d.min_u, d.min_v, d.max_v, d.steady_residual].map(num))?;
        Ok(())
    };
    let (dt, steps) = solver::run_with(&rc, |s| {
        if io_err.is_none() {
            if let Err(e) = write(s) {
                io_err = Some(e);
            }
        }
        last = Some(solver::diagnostics(s, &cfg.params, probe));
    })
    .map_err(|e| Outcome::Failed(e.to_string()))?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    road.flush()?;
    diag.flush()?;
    if let Some(f) = field.as_mut() {
        f.flush()?;
    }
    let d = last.expect("run_with reports the datum");
    println!("dt = {dt}, steps = {steps}");
    println!(
        "t = {}: mass = {}, min u = {}, min v = {}, max v = {}, steady residual = {}",
        d.t, d.mass, d.min_u, d.min_v, d.max_v, d.steady_residual
    );
    if d.min_u < solver::POSITIVITY_TOL || d.min_v < solver::POSITIVITY_TOL {
        return Ok(Outcome::Failed("positivity violated".into()));
    }
    Ok(Outcome::Success)
}

fn analysis_failure(e: AnalysisError) -> Outcome {
    match e {
        AnalysisError::Solver(solver::SolverError::SupportMargin { .. }) | AnalysisError::Option(_) => {
            Outcome::Usage(e.to_string())
        }
        _ => Outcome::Failed(e.to_string()),
    }
}

fn cmd_speed(ctx: &Context) -> Result<Outcome, Outcome> {
    let cfg = ctx.cfg;
    let p = &cfg.params;
    if !p.is_kpp() {
        return Err(Outcome::Usage("speed needs a KPP reaction (reaction = logistic)".into()));
    }
    let ck = c_kpp(p);
    let cb = c_brr(p, 1e-10).map_err(dispersion_failure)?;
    let runs: Vec<Result<FrontRun, AnalysisError>> = cfg
        .geometries
        .par_iter()
        .map(|g| {
            let datum = match cfg.datum {
                Datum::Bump { .. } => Datum::speed_run(g),
                ref d => d.clone(),
            };
            track_fronts(g, p, &cfg.grid, &datum, cfg.t_final, &cfg.track)
        })
        .collect();
    let mut rows: Vec<SpeedRow> = Vec::new();
    let mut fronts = ctx.csv("fronts.csv", &["geometry", "side", "threshold", "t", "position"])?;
    for run in runs {
        let run = run.map_err(analysis_failure)?;
        for (_, side, s) in &run.road {
            for (t, x) in s.times.iter().zip(&s.positions) {
                fronts.write_record([
                    run.geometry.name().to_string(),
                    side.name().to_string(),
                    num(s.threshold),
                    num(*t),
                    num(*x),
                ])?;
            }
        }
        if run.edge_max > 1e-6 {
            println!(
                "warning: {} reached {:.3e} within the boundary margin",
                run.geometry.name(),
                run.edge_max
            );
        }
        rows.extend(speed_rows(&run, &cfg.track, ck, cb).map_err(analysis_failure)?);
    }
    fronts.flush()?;
    let mut w = ctx.csv("speeds.csv", &SpeedRow::HEADER.split(',').collect::<Vec<_>>())?;
    for r in &rows {
        w.write_record(r.record())?;
        println!(
            "{:<16} {:<5} speed = {:.5} +- {:.1e}  c_kpp = {:.5}  c_brr = {:.5}  ratio = {:.4}",
            r.geometry,
            r.side.name(),
            r.speed,
            r.stderr,
            r.c_kpp,
            r.c_brr,
            r.ratio
        );
    }
    w.flush()?;
    Ok(Outcome::Success)
}

fn certificate_failure(e: CertificateError) -> Outcome {
    Outcome::Failed(e.to_string())
}

fn cmd_certify_super(ctx: &Context) -> Result<Outcome, Outcome> {
    let cfg = ctx.cfg;
    let p = &cfg.params;
    if !p.is_kpp() {
        return Err(Outcome::Usage("certify-super needs a KPP reaction".into()));
    }
    let g = &cfg.geometry;
    let road = dispersion::regime(p) == Regime::Road;
    let reference = c_brr(p, 1e-12).map_err(dispersion_failure)?;
    let default_factor = if road && g.kind() != GeometryKind::ExactCone { 1.1 } else { 1.05 };
    let c = cfg.c.unwrap_or(cfg.c_factor.unwrap_or(default_factor) * reference);
    let cert = if !road {
        radial_supersolution(c, p)
    } else if g.kind() == GeometryKind::ExactCone {
        conical_supersolution(c, g.theta0(), p)
    } else {
        asymptotic_supersolution(c, g, p)
    }
    .map_err(certificate_failure)?;
    let mut report = cert.report();
    if cert.kind != crate::certificates::SuperKind::Radial {
        let loss = cert.refinement_loss(p).map_err(certificate_failure)?;
        report.push_str(&format!("refinement_loss: {loss}\n"));
    }
    ctx.text("certificate.txt", &report)?;
    ctx.margins("margins.csv", &cert.margins_csv())?;
    print!("{report}");
    if cert.valid {
        Ok(Outcome::Success)
    } else {
        Ok(Outcome::Failed(format!("{} certificate is invalid at c = {c}", cert.kind.name())))
    }
}

fn cmd_certify_sub(ctx: &Context) -> Result<Outcome, Outcome> {
    let cfg = ctx.cfg;
    let p = &cfg.params;
    if !p.is_kpp() {
        return Err(Outcome::Usage("certify-sub needs a KPP reaction".into()));
    }
    let cl = c_l(cfg.strip_l, p, 1e-10).map_err(dispersion_failure)?;
    let c = cfg.c.unwrap_or(cfg.c_factor.unwrap_or(0.95) * cl);
    let built = build_subsolution(c, cfg.strip_l, p, &cfg.geometry).map_err(certificate_failure)?;
    let cert = verify_subsolution(&built, p, &cfg.geometry, cfg.lambda_init).map_err(certificate_failure)?;
    let mut report = format!("c_l: {cl}\n");
    report.push_str(&cert.report());
    ctx.text("certificate.txt", &report)?;
    ctx.margins("margins.csv", &cert.margins_csv())?;
    print!("{report}");
    if cert.valid {
        Ok(Outcome::Success)
    } else {
        Ok(Outcome::Failed(format!("subsolution certificate is invalid at c = {c}")))
    }
}

/// Relative drift allowed by `mass-check`.
pub const MASS_TOL: f64 = 1e-6;

fn cmd_mass_check(ctx: &Context) -> Result<Outcome, Outcome> {
    let cfg = ctx.cfg;
    let p = &cfg.params;
    let params =
        ModelParams::conservative(p.d, p.road_d, p.mu, p.nu).map_err(|e| Outcome::Usage(e.to_string()))?;
    let grid = solver::GridSpec {
        outer_bc: OuterBc::Reflecting,
        ..cfg.grid
    };
    let mut state = solver::discretize(&cfg.geometry, &params, &grid, &cfg.datum)
        .map_err(|e| Outcome::Usage(e.to_string()))?;
    let mut stepper = Stepper::new(&state, &params).map_err(|e| Outcome::Usage(e.to_string()))?;
    let dt = stepper.scheme().cfl_dt(cfg.safety);
    let m0 = total_mass(&state);
    let mut w = ctx.csv("mass.csv", &["step", "t", "mass", "relative_drift"])?;
    let rel = |m: f64| if m0 == 0.0 { (m - m0).abs() } else { (m - m0).abs() / m0 };
    w.write_record([0.to_string(), num(0.0), num(m0), num(0.0)])?;
    let mut worst: f64 = 0.0;
    for k in 1..=cfg.steps {
        stepper.step(&mut state, dt).map_err(|e| Outcome::Failed(e.to_string()))?;
        if k % grid.nt_report == 0 || k == cfg.steps {
            let m = total_mass(&state);
            worst = worst.max(rel(m));
            w.write_record([k.to_string(), num(state.t), num(m), num(rel(m))])?;
        }
    }
    w.flush()?;
    println!("steps = {}, dt = {dt}, initial mass = {m0}, worst relative drift = {worst:e}", cfg.steps);
    if worst <= MASS_TOL {
        Ok(Outcome::Success)
    } else {
        Ok(Outcome::Failed(format!("relative mass drift {worst:e} exceeds {MASS_TOL:e}")))
    }
}

fn cmd_properties(ctx: &Context) -> Result<Outcome, Outcome> {
    let results = run_properties(ctx.cfg).map_err(|e| Outcome::Failed(e.to_string()))?;
    let mut w = ctx.csv("properties.csv", &["property", "passed", "total", "worst"])?;
    let mut all = true;
    for r in &results {
        w.write_record([r.name.to_string(), r.passed.to_string(), r.total.to_string(), num(r.worst)])?;
        println!("{}: {}/{} passed (worst {:e})", r.name, r.passed, r.total, r.worst);
        all &= r.passed == r.total;
    }
    w.flush()?;
    if all {
        Ok(Outcome::Success)
    } else {
        Ok(Outcome::Failed("some properties failed".into()))
    }
}
