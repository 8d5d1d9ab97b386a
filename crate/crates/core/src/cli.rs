//! Command-line front end: `run`, `verify`, `scatter` and `sweep`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::config::{RawConfig, RawValue, SimConfig};
use crate::error::{Error, Result};
use crate::integrator::Simulation;
use crate::output::{
    build_manifest, load_run, output_root, write_atomic, write_run, RunManifest, WallClock,
    OUT_ENV, RATES, SCATTERING,
};
use crate::scattering::{analyze, scattering_csv, FitOutcome, ScatterParams, ScatterReport, DEFAULT_T_MIN};
use crate::verify::{run_suite, Fault, Level};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ABORT: i32 = 3;
pub const EXIT_UNCERTIFIED: i32 = 4;

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_COLUMNS: [&str; 8] = [
    "eps", "d_plus", "d_minus", "t_plus", "decay_exp", "residual_exp", "g_rate", "status",
];

#[derive(Debug, Parser)]
#[command(name = "dmnls", version, about = "Averaged dispersion-managed NLS simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one configuration and write a run directory.
    Run { config: PathBuf },
    /// Run the identity and convergence checks.
    Verify {
        #[arg(long, value_enum, default_value_t = LevelArg::Fast)]
        level: LevelArg,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
    /// Extract scattering data and fit rates from a certified run directory.
    Scatter {
        run_dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_T_MIN)]
        t_min: f64,
    },
    /// Run the Cartesian product of every list-valued key.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LevelArg {
    Fast,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    ForwardSign,
}

fn setup_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::Io { .. }
            | Error::Parse { .. }
            | Error::InvalidGrid(_)
            | Error::InvalidProfile(_)
    )
}

/// Outcome of one simulation written to disk.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if !self.manifest.status.is_completed() {
            EXIT_ABORT
        } else if !self.manifest.certification.certified() {
            EXIT_UNCERTIFIED
        } else {
            EXIT_OK
        }
    }
}

/// Integrates `cfg`, certifies the trajectory and writes it into `dir`.
pub fn execute_run(cfg: &SimConfig, dir: &Path) -> Result<RunOutcome> {
    let clock = WallClock::start();
    let sim = Simulation::new(cfg.clone())?;
    let traj = sim.run()?;
    let self_test = if cfg.self_test && traj.status.is_completed() {
        sim.self_test()?
    } else {
        None
    };
    let cert = sim.certify(&traj, self_test);
    let manifest = build_manifest(cfg, &traj, cert, clock);
    write_run(dir, &traj, &manifest)?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        manifest,
    })
}

pub fn run_dir_for(cfg: &SimConfig) -> PathBuf {
    output_root(cfg).join(&cfg.name)
}

fn cmd_run(path: &Path) -> i32 {
    let cfg = match SimConfig::from_file(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let dir = run_dir_for(&cfg);
    match execute_run(&cfg, &dir) {
        Ok(out) => {
            let m = &out.manifest;
            let c = &m.certification;
            println!("run directory: {}", dir.display());
            println!("status: {}", m.status.describe());
            println!(
                "steps {}  wall {:.1} s  mass drift {:.2e}  energy drift {:.2e}  boundary {:.2e}",
                m.steps, m.wall_seconds, c.mass_drift, c.energy_drift, c.boundary_max
            );
            if let Some(st) = c.self_test {
                match st.order {
                    Some(p) => println!("self-convergence order {p:.3} at h = {}", st.h),
                    None => println!("self-convergence differences at roundoff"),
                }
            }
            for w in &m.warnings {
                println!("warning: {w}");
            }
            let code = out.exit_code();
            if code == EXIT_UNCERTIFIED {
                eprintln!(
                    "error: run not certified (mass {}, energy {}, boundary {}, dt-order {})",
                    c.mass, c.energy, c.boundary, c.dt_order
                );
            } else if code == EXIT_ABORT {
                eprintln!("error: numerical abort: {}", m.status.describe());
            }
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            if setup_error(&e) {
                EXIT_CONFIG
            } else {
                EXIT_ABORT
            }
        }
    }
}

fn cmd_verify(level: LevelArg, fault: Option<FaultArg>) -> i32 {
    let level = match level {
        LevelArg::Fast => Level::Fast,
        LevelArg::Full => Level::Full,
    };
    let fault = fault.map(|f| match f {
        FaultArg::ForwardSign => Fault::ForwardSign,
    });
    let results = run_suite(level, fault);
    for r in &results {
        println!(
            "{} {:<26} {} ({:.2} s)",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail,
            r.seconds
        );
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        println!("all {} checks passed", results.len());
        EXIT_OK
    } else {
        eprintln!("failing invariants: {}", failed.join(", "));
        EXIT_VERIFY_FAILED
    }
}

/// Why `scatter` stopped.
#[derive(Debug)]
pub enum ScatterFailure {
    Uncertified(String),
    Input(Error),
}

impl ScatterFailure {
    pub fn exit_code(&self) -> i32 {
        match self {
            ScatterFailure::Uncertified(_) => EXIT_UNCERTIFIED,
            ScatterFailure::Input(_) => EXIT_CONFIG,
        }
    }
}

impl std::fmt::Display for ScatterFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScatterFailure::Uncertified(m) => write!(f, "run not certified: {m}"),
            ScatterFailure::Input(e) => write!(f, "{e}"),
        }
    }
}

/// Analyzes a run directory and writes `scattering.csv` and `rates.json` into it.
pub fn execute_scatter(dir: &Path, t_min: f64) -> std::result::Result<ScatterReport, ScatterFailure> {
    let run = load_run(dir).map_err(ScatterFailure::Input)?;
    let m = &run.manifest;
    if !m.status.is_completed() {
        return Err(ScatterFailure::Uncertified(m.status.describe()));
    }
    let c = &m.certification;
    if !c.certified() {
        return Err(ScatterFailure::Uncertified(format!(
            "mass {}, energy {}, boundary {}, dt-order {}",
            c.mass, c.energy, c.boundary, c.dt_order
        )));
    }
    let quad = run.config.quadrature().map_err(ScatterFailure::Input)?;
    let params = ScatterParams {
        c: run.config.profile.c(),
        d_av: run.config.profile.d_av(),
    };
    let report = analyze(&run.snapshots, &run.records, &quad, params, t_min)
        .map_err(ScatterFailure::Input)?;
    let io = |r: Result<()>| r.map_err(ScatterFailure::Input);
    io(write_atomic(&dir.join(SCATTERING), scattering_csv(&report.data).as_bytes()))?;
    let json = serde_json::to_string_pretty(&report.rates).expect("rates serialize");
    io(write_atomic(&dir.join(RATES), json.as_bytes()))?;
    Ok(report)
}

fn describe_fit(f: &FitOutcome) -> String {
    match f {
        FitOutcome::Fitted(p) => format!(
            "{:+.4}  (r2 {:.4}, {} points on [{:.4}, {:.4}])",
            p.exponent, p.r2, p.points, p.t_min, p.t_max
        ),
        FitOutcome::Refused { error } => format!("refused: {error}"),
    }
}

pub fn headline(report: &ScatterReport) -> String {
    let r = &report.rates;
    let p = r.predicted;
    let mut out = String::new();
    let rows = [
        ("decay exponent", &r.decay_exponent, p.decay_exponent),
        ("residual exponent", &r.residual_exponent, p.residual_exponent),
        ("g convergence rate", &r.g_convergence_rate, p.g_convergence_rate),
    ];
    for (name, fit, pred) in rows {
        let _ = writeln!(out, "{name:<20} predicted {pred:+.4}  measured {}", describe_fit(fit));
    }
    let _ = writeln!(out, "{:<20} {}", "dtg exponent", describe_fit(&r.dtg_exponent));
    if let Some(s) = r.stability {
        let _ = writeln!(
            out,
            "W stability: |W(T) - W(T/2)| = {:.3e}, envelope {:.3e} ({})",
            s.w_change,
            s.envelope,
            if s.stable { "stable" } else { "unstable" }
        );
    }
    out
}

fn cmd_scatter(dir: &Path, t_min: f64) -> i32 {
    match execute_scatter(dir, t_min) {
        Ok(report) => {
            print!("{}", headline(&report));
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// One line of `sweep.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eps: String,
    pub d_plus: String,
    pub d_minus: String,
    pub t_plus: String,
    pub decay_exp: Option<f64>,
    pub residual_exp: Option<f64>,
    pub g_rate: Option<f64>,
    pub status: String,
}

fn raw_scalar(raw: &RawConfig, key: &str, default: f64) -> String {
    match raw.get(key) {
        Some(RawValue::Scalar(s)) => s.clone(),
        _ => default.to_string(),
    }
}

fn sweep_cell(raw: &RawConfig, config_path: &Path, dir: &Path) -> SweepRow {
    let base = SimConfig::default();
    let mut row = SweepRow {
        eps: raw_scalar(raw, "initial.epsilon", base.epsilon),
        d_plus: raw_scalar(raw, "dispersion.d_plus", base.profile.d_plus()),
        d_minus: raw_scalar(raw, "dispersion.d_minus", base.profile.d_minus()),
        t_plus: raw_scalar(raw, "dispersion.t_plus", base.profile.t_plus()),
        decay_exp: None,
        residual_exp: None,
        g_rate: None,
        status: String::new(),
    };
    let cfg = match SimConfig::from_raw(raw) {
        Ok(mut c) => {
            c.resolve_initial_file(config_path);
            c
        }
        Err(_) => {
            row.status = "config_error".into();
            return row;
        }
    };
    row.status = match execute_run(&cfg, dir) {
        Err(e) if setup_error(&e) => "config_error".into(),
        Err(_) => "aborted".into(),
        Ok(out) => match out.exit_code() {
            EXIT_ABORT => "aborted".into(),
            EXIT_UNCERTIFIED => "uncertified".into(),
            _ => match execute_scatter(dir, DEFAULT_T_MIN) {
                Ok(rep) => {
                    row.decay_exp = rep.rates.decay_exponent.exponent();
                    row.residual_exp = rep.rates.residual_exponent.exponent();
                    row.g_rate = rep.rates.g_convergence_rate.exponent();
                    "ok".into()
                }
                Err(_) => "analysis_error".into(),
            },
        },
    };
    row
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
    let mut out = SWEEP_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.eps,
            r.d_plus,
            r.d_minus,
            r.t_plus,
            opt(r.decay_exp),
            opt(r.residual_exp),
            opt(r.g_rate),
            r.status
        );
    }
    out
}

/// Runs every cell of the sweep in a pool of `jobs` workers; cell `k` writes to
/// `<root>/<name>/cell_kkk` and the aggregate goes to `<root>/<name>/sweep.csv`.
pub fn execute_sweep(config_path: &Path, jobs: Option<usize>) -> Result<(PathBuf, Vec<SweepRow>)> {
    let text = std::fs::read_to_string(config_path).map_err(|e| Error::io(config_path, e))?;
    let raw = RawConfig::parse(&text)?;
    let root = match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => match raw.get("output.dir") {
            Some(RawValue::Scalar(s)) => PathBuf::from(s),
            Some(RawValue::List(_)) => return Err(Error::Config("output.dir cannot be swept".into())),
            None => SimConfig::default().out_dir,
        },
    };
    let name = match raw.get("output.name") {
        Some(RawValue::Scalar(s)) if !s.contains(['/', '\\']) && s != ".." => s.clone(),
        None => SimConfig::default().name,
        _ => return Err(Error::Config("output.name must be a single plain directory name".into())),
    };
    let base = root.join(name);
    let cells = raw.sweep_cells()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(k, (_, cell))| sweep_cell(cell, config_path, &base.join(format!("cell_{k:03}"))))
            .collect()
    });
    std::fs::create_dir_all(&base).map_err(|e| Error::io(&base, e))?;
    write_atomic(&base.join(SWEEP_CSV), sweep_csv(&rows).as_bytes())?;
    Ok((base, rows))
}

fn cmd_sweep(path: &Path, jobs: Option<usize>) -> i32 {
    if jobs == Some(0) {
        eprintln!("error: --jobs must be at least 1");
        return EXIT_CONFIG;
    }
    match execute_sweep(path, jobs) {
        Ok((dir, rows)) => {
            print!("{}", sweep_csv(&rows));
            println!("aggregate: {}", dir.join(SWEEP_CSV).display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

pub fn dispatch(cli: Cli) -> i32 {
    match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::Verify { level, inject_fault } => cmd_verify(level, inject_fault),
        Command::Scatter { run_dir, t_min } => cmd_scatter(&run_dir, t_min),
        Command::Sweep { config, jobs } => cmd_sweep(&config, jobs),
    }
}
