//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//!
//! Runs the reference configuration (tent profile 3, 1, 1/2; epsilon 0.1; dt 0.05;
//! t_end 200; quadrature order 16) plus a copy at epsilon 0.2, on the default grid.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use dmnls::cli::{execute_run, execute_scatter};
use dmnls::config::{Scheme, SimConfig};
use dmnls::dispersion::DispersionProfile;
use dmnls::integrator::{ENERGY_DRIFT_TOL, MASS_DRIFT_TOL, RK4_MIN_ORDER, STRANG_MIN_ORDER};
use dmnls::output::RunManifest;
use dmnls::scattering::{fit::window, fit_power_law, FitOutcome, ScatterReport, DEFAULT_T_MIN};
use dmnls::verify::{observed_order, oracle_gap, run_suite, Level};

const ORACLE_TOL: f64 = 1e-6;
const DECAY_RANGE: (f64, f64) = (-0.55, -0.45);
const DECAY_R2: f64 = 0.99;
const LEVEL_RATIO: (f64, f64) = (6.0, 10.0);
const RESIDUAL_BETA: f64 = 0.52;
const DTG_MAX: f64 = -1.0;
const FAST_SUITE_SECONDS: f64 = 60.0;

struct Line {
    id: &'static str,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn reference(eps: f64, name: &str, root: &Path) -> SimConfig {
    SimConfig {
        epsilon: eps,
        profile: DispersionProfile::new(3.0, 1.0, 0.5, 1.0).unwrap(),
        dt: 0.05,
        t_end: 200.0,
        quad_order: 16,
        out_dir: root.to_path_buf(),
        name: name.into(),
        ..SimConfig::default()
    }
}

fn run_and_scatter(cfg: &SimConfig) -> Result<(RunManifest, ScatterReport), String> {
    let dir = cfg.out_dir.join(&cfg.name);
    let t0 = Instant::now();
    let out = execute_run(cfg, &dir).map_err(|e| e.to_string())?;
    eprintln!(
        "  run {} (n = {}, L = {}): {} steps, {:.0} s, {}",
        cfg.name,
        cfg.n,
        cfg.length,
        out.manifest.steps,
        t0.elapsed().as_secs_f64(),
        out.manifest.status.describe()
    );
    let report = execute_scatter(&dir, DEFAULT_T_MIN).map_err(|e| e.to_string())?;
    Ok((out.manifest, report))
}

fn fit_text(f: &FitOutcome) -> String {
    match f {
        FitOutcome::Fitted(p) => format!("{:+.4} (r2 {:.4}, {} pts)", p.exponent, p.r2, p.points),
        FitOutcome::Refused { error } => format!("refused: {error}"),
    }
}

fn conservation(m: &RunManifest) -> Line {
    let c = &m.certification;
    Line {
        id: "1",
        name: "conservation",
        passed: m.status.is_completed() && c.mass_drift < MASS_DRIFT_TOL && c.energy_drift < ENERGY_DRIFT_TOL,
        detail: format!(
            "mass drift {:.2e} (< {MASS_DRIFT_TOL:.0e}), energy drift {:.2e} (< {ENERGY_DRIFT_TOL:.0e}), {:.0} s",
            c.mass_drift, c.energy_drift, m.wall_seconds
        ),
    }
}

fn oracle() -> Line {
    match oracle_gap(0.1, 10.0, 0.01) {
        Ok(gap) => Line {
            id: "2",
            name: "oracle_equivalence",
            passed: gap < ORACLE_TOL,
            detail: format!("sup |u - u_oracle| at t = 10: {gap:.3e} (< {ORACLE_TOL:.0e})"),
        },
        Err(e) => Line {
            id: "2",
            name: "oracle_equivalence",
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn decay(r: &ScatterReport) -> Line {
    let f = &r.rates.decay_exponent;
    let passed = f
        .fitted()
        .is_some_and(|p| (DECAY_RANGE.0..=DECAY_RANGE.1).contains(&p.exponent) && p.r2 > DECAY_R2);
    Line {
        id: "3",
        name: "decay_rate",
        passed,
        detail: format!(
            "||u||_inf exponent {} in [{}, {}], r2 > {DECAY_R2}",
            fit_text(f),
            DECAY_RANGE.0,
            DECAY_RANGE.1
        ),
    }
}

/// Geometric mean of `b / a` over the dyadic times both series share.
fn level_ratio(a: &[(f64, f64)], b: &[(f64, f64)], lo: f64, hi: f64) -> Option<f64> {
    let logs: Vec<f64> = a
        .iter()
        .filter(|(t, _)| (lo..=hi).contains(t))
        .filter_map(|(t, ya)| {
            b.iter()
                .find(|(s, _)| s == t)
                .map(|(_, yb)| (yb / ya).ln())
        })
        .collect();
    (!logs.is_empty()).then(|| (logs.iter().sum::<f64>() / logs.len() as f64).exp())
}

fn profile_convergence(r1: &ScatterReport, r2: &ScatterReport) -> Line {
    let t_final = r1.rates.t_final;
    let f = &r1.rates.g_convergence_rate;
    let trend = f.exponent().is_some_and(|p| p <= 0.0);
    let ratio = level_ratio(&r1.dyadic, &r2.dyadic, DEFAULT_T_MIN, 0.5 * t_final);
    let in_band = ratio.is_some_and(|q| (LEVEL_RATIO.0..=LEVEL_RATIO.1).contains(&q));
    Line {
        id: "4",
        name: "profile_convergence",
        passed: trend && in_band,
        detail: format!(
            "||g(2t) - g(t)|| rate {} (predicted -0.05, must be <= 0); eps 0.2 / 0.1 level ratio {} in [{}, {}]",
            fit_text(f),
            ratio.map_or("n/a".into(), |q| format!("{q:.3}")),
            LEVEL_RATIO.0,
            LEVEL_RATIO.1
        ),
    }
}

fn residual(r: &ScatterReport) -> Line {
    let t_final = r.rates.t_final;
    let scaled: Vec<(f64, f64)> = r.residual.iter().map(|&(t, y)| (t, y * t.sqrt())).collect();
    let trend = fit_power_law(&window(&scaled, DEFAULT_T_MIN, t_final)).ok();
    let decreasing = trend.as_ref().is_some_and(|p| p.exponent < 0.0);
    let f = &r.rates.residual_exponent;
    let beta_ok = f.exponent().is_some_and(|p| -p >= RESIDUAL_BETA);
    Line {
        id: "5",
        name: "scattering_residual",
        passed: decreasing && beta_ok,
        detail: format!(
            "residual exponent {} (beta >= {RESIDUAL_BETA}); t^(1/2) residual slope {}",
            fit_text(f),
            trend.map_or("n/a".into(), |p| format!("{:+.4}", p.exponent))
        ),
    }
}

fn dtg(r: &ScatterReport) -> Line {
    let f = &r.rates.dtg_exponent;
    Line {
        id: "6",
        name: "dtg_diagnostic",
        passed: f.exponent().is_some_and(|p| p <= DTG_MAX),
        detail: format!("||dg/dt|| exponent {} (<= {DTG_MAX})", fit_text(f)),
    }
}

fn identities() -> Line {
    let t0 = Instant::now();
    let results = run_suite(Level::Fast, None);
    let secs = t0.elapsed().as_secs_f64();
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    Line {
        id: "7",
        name: "identity_suite",
        passed: failed.is_empty() && secs < FAST_SUITE_SECONDS,
        detail: if failed.is_empty() {
            format!("{} checks in {secs:.2} s (< {FAST_SUITE_SECONDS} s)", results.len())
        } else {
            format!("failing: {}", failed.join(", "))
        },
    }
}

fn self_convergence(m: &RunManifest) -> Line {
    let rk4 = m.certification.self_test.and_then(|s| s.order);
    let strang_cfg = SimConfig {
        n: 1024,
        length: 320.0,
        epsilon: 0.2,
        t_end: 10.0,
        snapshots: Some(vec![10.0]),
        profile: DispersionProfile::unmanaged(1.0, 1.0).unwrap(),
        quad_order: 1,
        scheme: Scheme::Strang,
        ..SimConfig::default()
    };
    let strang = observed_order(&strang_cfg, 10.0, 0.1).ok().map(|(p, _, _)| p);
    Line {
        id: "8",
        name: "self_convergence",
        passed: rk4.is_some_and(|p| p >= RK4_MIN_ORDER) && strang.is_some_and(|p| p >= STRANG_MIN_ORDER),
        detail: format!(
            "RK4 order {} on the reference grid (>= {RK4_MIN_ORDER}); split-step oracle order {} (>= {STRANG_MIN_ORDER})",
            rk4.map_or("n/a".into(), |p| format!("{p:.3}")),
            strang.map_or("n/a".into(), |p| format!("{p:.3}"))
        ),
    }
}

fn failed(id: &'static str, name: &'static str, why: &str) -> Line {
    Line {
        id,
        name,
        passed: false,
        detail: why.to_string(),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let root = tempfile::TempDir::new().expect("temporary directory");
    let mut lines = vec![identities(), oracle()];

    eprintln!("acceptance: reference runs (this takes several minutes)");
    let base = run_and_scatter(&reference(0.1, "eps_0.1", root.path()));
    let doubled = run_and_scatter(&reference(0.2, "eps_0.2", root.path()));
    match &base {
        Ok((m, r)) => {
            lines.push(conservation(m));
            lines.push(decay(r));
            match &doubled {
                Ok((_, r2)) => lines.push(profile_convergence(r, r2)),
                Err(e) => lines.push(failed("4", "profile_convergence", &format!("eps 0.2 run: {e}"))),
            }
            lines.push(residual(r));
            lines.push(dtg(r));
            lines.push(self_convergence(m));
        }
        Err(e) => {
            for (id, name) in [
                ("1", "conservation"),
                ("3", "decay_rate"),
                ("4", "profile_convergence"),
                ("5", "scattering_residual"),
                ("6", "dtg_diagnostic"),
                ("8", "self_convergence"),
            ] {
                lines.push(failed(id, name, &format!("reference run: {e}")));
            }
        }
    }
    lines.sort_by_key(|l| l.id);

    println!();
    for l in &lines {
        println!(
            "{} {} {:<20} {}",
            if l.passed { "PASS" } else { "FAIL" },
            l.id,
            l.name,
            l.detail
        );
    }
    let n_failed = lines.iter().filter(|l| !l.passed).count();
    println!(
        "acceptance: {} of {} criteria passed in {:.0} s",
        lines.len() - n_failed,
        lines.len(),
        start.elapsed().as_secs_f64()
    );
    if n_failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
