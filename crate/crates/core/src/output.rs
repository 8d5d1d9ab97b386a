//! Run directories: `manifest.json`, `observables.csv`, and per-snapshot
//! `snapshot_NNNN.csv` (profile spectrum) and `theta_NNNN.csv` files. Every file is
//! written to a temporary name and renamed into place.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::{RawConfig, SimConfig};
use crate::error::{Error, Result};
use crate::grid::{parse_f64, parse_header_fields, FieldCsv, Grid, Space};
use crate::integrator::{Certification, RunStatus, Snapshot, StepDiagnostic, Trajectory};
use crate::observables::{observables_to_csv, parse_observables_csv, ObservablesRecord};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.json";
pub const OBSERVABLES: &str = "observables.csv";
pub const SCATTERING: &str = "scattering.csv";
pub const RATES: &str = "rates.json";

/// Environment variable that overrides `output.dir`.
pub const OUT_ENV: &str = "DMNLS_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub index: usize,
    pub t: f64,
    pub field: String,
    pub theta: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub scheme: String,
    pub config: BTreeMap<String, String>,
    pub start_unix: f64,
    pub end_unix: f64,
    pub wall_seconds: f64,
    pub status: RunStatus,
    pub certification: Certification,
    pub steps: u64,
    pub snapshots: Vec<SnapshotEntry>,
    pub warnings: Vec<String>,
    pub diagnostics: Vec<StepDiagnostic>,
}

impl RunManifest {
    pub fn parse(text: &str) -> Result<RunManifest> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let mut text = String::new();
        for (k, v) in &self.config {
            let _ = writeln!(text, "{k} = {v}");
        }
        SimConfig::from_raw(&RawConfig::parse(&text)?)
    }
}

/// Echo of a config as `key -> value` strings.
pub fn config_echo(cfg: &SimConfig) -> BTreeMap<String, String> {
    cfg.to_config_text()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// `DMNLS_OUT` if set, else the configured directory.
pub fn output_root(cfg: &SimConfig) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.out_dir.clone(),
    }
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn is_run_file(name: &str) -> bool {
    let numbered = |prefix: &str| {
        name.strip_prefix(prefix)
            .and_then(|r| r.strip_suffix(".csv"))
            .is_some_and(|d| !d.is_empty() && d.chars().all(|c| c.is_ascii_digit()))
    };
    numbered("snapshot_")
        || numbered("theta_")
        || [MANIFEST, OBSERVABLES, SCATTERING, RATES].contains(&name)
}

/// Removes files a previous run left in `dir`; nothing else is touched.
fn clear_run_files(dir: &Path) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.file_name().to_str().is_some_and(is_run_file) {
            fs::remove_file(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
        }
    }
    Ok(())
}

pub fn theta_to_csv(grid: &Grid, t: f64, theta: &[f64]) -> String {
    let mut out = format!("# t={t:e} n={} L={:e}\nxi,theta\n", grid.n(), grid.length());
    for (xi, th) in grid.xi().iter().zip(theta) {
        let _ = writeln!(out, "{xi:e},{th:e}");
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaCsv {
    pub t: f64,
    pub n: usize,
    pub length: f64,
    pub xi: Vec<f64>,
    pub theta: Vec<f64>,
}

impl ThetaCsv {
    pub fn parse(text: &str) -> Result<ThetaCsv> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (lineno, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty input".into(),
        })?;
        let (mut t, mut n, mut length) = (None, None, None);
        for (k, v) in parse_header_fields(header, lineno)? {
            match k {
                "t" => t = Some(parse_f64(v, lineno)?),
                "n" => {
                    n = Some(v.parse::<usize>().map_err(|_| Error::Parse {
                        line: lineno,
                        msg: format!("bad n `{v}`"),
                    })?)
                }
                "L" => length = Some(parse_f64(v, lineno)?),
                _ => {}
            }
        }
        let missing = |what: &str| Error::Parse {
            line: lineno,
            msg: format!("header lacks `{what}`"),
        };
        let t = t.ok_or_else(|| missing("t"))?;
        let n = n.ok_or_else(|| missing("n"))?;
        let length = length.ok_or_else(|| missing("L"))?;
        let mut xi = Vec::with_capacity(n.min(1 << 16));
        let mut theta = Vec::with_capacity(n.min(1 << 16));
        for (lineno, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("xi") {
                continue;
            }
            let (a, b) = line.split_once(',').ok_or(Error::Parse {
                line: lineno,
                msg: "expected two columns".into(),
            })?;
            xi.push(parse_f64(a, lineno)?);
            theta.push(parse_f64(b, lineno)?);
        }
        if theta.len() != n {
            return Err(Error::Parse {
                line: 0,
                msg: format!("header says n = {n} but {} rows follow", theta.len()),
            });
        }
        Ok(ThetaCsv {
            t,
            n,
            length,
            xi,
            theta,
        })
    }
}

fn unix_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Wall-clock bracket of a run.
#[derive(Debug, Clone, Copy)]
pub struct WallClock {
    pub start_unix: f64,
    start: std::time::Instant,
}

impl WallClock {
    pub fn start() -> Self {
        WallClock {
            start_unix: unix_now(),
            start: std::time::Instant::now(),
        }
    }

    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

pub fn build_manifest(
    cfg: &SimConfig,
    traj: &Trajectory,
    cert: Certification,
    clock: WallClock,
) -> RunManifest {
    RunManifest {
        code_version: CODE_VERSION.into(),
        scheme: cfg.scheme.as_str().into(),
        config: config_echo(cfg),
        start_unix: clock.start_unix,
        end_unix: unix_now(),
        wall_seconds: clock.elapsed(),
        status: traj.status,
        certification: cert,
        steps: traj.steps,
        snapshots: traj
            .snapshots
            .iter()
            .enumerate()
            .map(|(i, s)| SnapshotEntry {
                index: i,
                t: s.t,
                field: format!("snapshot_{i:04}.csv"),
                theta: format!("theta_{i:04}.csv"),
            })
            .collect(),
        warnings: traj.warnings.clone(),
        diagnostics: traj.diagnostics.clone(),
    }
}

/// Writes the trajectory into `dir`; the manifest goes last.
pub fn write_run(dir: &Path, traj: &Trajectory, manifest: &RunManifest) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    clear_run_files(dir)?;
    for (entry, snap) in manifest.snapshots.iter().zip(&traj.snapshots) {
        write_atomic(
            &dir.join(&entry.field),
            snap.f_hat.to_csv_string(snap.t).as_bytes(),
        )?;
        write_atomic(
            &dir.join(&entry.theta),
            theta_to_csv(snap.f_hat.grid(), snap.t, &snap.theta).as_bytes(),
        )?;
    }
    write_atomic(
        &dir.join(OBSERVABLES),
        observables_to_csv(&traj.records).as_bytes(),
    )?;
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write_atomic(&dir.join(MANIFEST), json.as_bytes())
}

/// A run directory read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub config: SimConfig,
    pub grid: Arc<Grid>,
    pub snapshots: Vec<Snapshot>,
    pub records: Vec<ObservablesRecord>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn in_file(path: &Path, e: Error) -> Error {
    Error::Config(format!("{}: {e}", path.display()))
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let manifest_path = dir.join(MANIFEST);
    let manifest = RunManifest::parse(&read(&manifest_path)?).map_err(|e| in_file(&manifest_path, e))?;
    let config = manifest.sim_config().map_err(|e| in_file(&manifest_path, e))?;
    let grid = Grid::new(config.n, config.length)?;
    let mut snapshots = Vec::with_capacity(manifest.snapshots.len());
    for entry in &manifest.snapshots {
        let fpath = dir.join(&entry.field);
        let field = FieldCsv::parse(&read(&fpath)?).map_err(|e| in_file(&fpath, e))?;
        if field.space != Space::Frequency || field.t != entry.t {
            return Err(in_file(&fpath, Error::Config("space or time disagrees with manifest".into())));
        }
        let f_hat = field.into_field(&grid).map_err(|e| in_file(&fpath, e))?;
        let tpath = dir.join(&entry.theta);
        let theta = ThetaCsv::parse(&read(&tpath)?).map_err(|e| in_file(&tpath, e))?;
        if !grid.same_lattice(theta.n, theta.length) || theta.t != entry.t {
            return Err(in_file(&tpath, Error::Config("lattice or time disagrees with manifest".into())));
        }
        snapshots.push(Snapshot {
            t: entry.t,
            f_hat,
            theta: theta.theta,
        });
    }
    let opath = dir.join(OBSERVABLES);
    let records = parse_observables_csv(&read(&opath)?).map_err(|e| in_file(&opath, e))?;
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        manifest,
        config,
        grid,
        snapshots,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::Simulation;

    #[test]
    fn theta_round_trip() {
        let g = Grid::new(16, 10.0).unwrap();
        let th: Vec<f64> = (0..16).map(|k| 0.1 * k as f64 + 1e-17).collect();
        let parsed = ThetaCsv::parse(&theta_to_csv(&g, 3.5, &th)).unwrap();
        assert_eq!(parsed.theta, th);
        assert_eq!(parsed.t, 3.5);
        assert!(ThetaCsv::parse("# t=1 n=2 L=1\nxi,theta\n0,1\n").is_err());
        assert!(ThetaCsv::parse("").is_err());
    }

    #[test]
    fn run_files_only() {
        assert!(is_run_file("snapshot_0003.csv"));
        assert!(is_run_file("manifest.json"));
        assert!(!is_run_file("snapshot_x.csv"));
        assert!(!is_run_file("notes.txt"));
    }

    #[test]
    fn write_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SimConfig {
            n: 256,
            length: 60.0,
            t_end: 2.0,
            quad_order: 4,
            ..SimConfig::default()
        };
        let sim = Simulation::new(cfg.clone()).unwrap();
        let clock = WallClock::start();
        let traj = sim.run().unwrap();
        let cert = sim.certify(&traj, None);
        let manifest = build_manifest(&cfg, &traj, cert, clock);
        fs::write(dir.path().join("keep.txt"), "x").unwrap();
        fs::write(dir.path().join("snapshot_9999.csv"), "stale").unwrap();
        write_run(dir.path(), &traj, &manifest).unwrap();
        assert!(dir.path().join("keep.txt").exists());
        assert!(!dir.path().join("snapshot_9999.csv").exists());
        let back = load_run(dir.path()).unwrap();
        assert_eq!(back.config, cfg);
        assert_eq!(back.snapshots, traj.snapshots);
        assert_eq!(back.records, traj.records);
        assert_eq!(back.manifest, manifest);
    }
}
