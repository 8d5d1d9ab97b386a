//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! grid.n = 4096
//! [dispersion]
//! d_plus = 3
//! initial.epsilon = [0.05, 0.1, 0.2]   # lists are expanded by `sweep`
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dispersion::{DispersionProfile, TauQuadrature};
use crate::error::{Error, Result};

pub const KNOWN_KEYS: [&str; 21] = [
    "grid.n",
    "grid.length",
    "grid.dealias",
    "dispersion.d_plus",
    "dispersion.d_minus",
    "dispersion.t_plus",
    "dispersion.d_av",
    "dispersion.c",
    "dispersion.quad_order",
    "initial.epsilon",
    "initial.shape",
    "initial.file",
    "initial.phase",
    "time.dt",
    "time.t_end",
    "time.snapshots",
    "time.snapshots_per_octave",
    "time.self_test",
    "time.scheme",
    "output.dir",
    "output.name",
];

/// Largest Cartesian product `sweep_cells` expands.
pub const MAX_SWEEP_CELLS: usize = 4096;

/// Keys that hold a list in a single run and are never swept.
const LIST_KEYS: [&str; 1] = ["time.snapshots"];

#[derive(Debug, Clone, PartialEq)]
pub enum RawValue {
    Scalar(String),
    List(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: RawValue,
    line: usize,
}

/// Parsed but untyped configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn valid_ident(s: &str) -> bool {
    !s.is_empty()
        && s.split('.')
            .all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'))
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig> {
        let mut section: Option<String> = None;
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| parse_err(line, "unterminated section header"))?
                    .trim();
                if !valid_ident(name) || name.contains('.') {
                    return Err(parse_err(line, format!("bad section name '{name}'")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| parse_err(line, "expected 'key = value'"))?;
            let key = key.trim();
            if !valid_ident(key) {
                return Err(parse_err(line, format!("bad key '{key}'")));
            }
            let key = match &section {
                Some(s) if !key.contains('.') => format!("{s}.{key}"),
                Some(s) if key.starts_with(&format!("{s}.")) => key.to_string(),
                Some(s) => {
                    return Err(parse_err(
                        line,
                        format!("key '{key}' does not belong to section [{s}]"),
                    ))
                }
                None if key.contains('.') => key.to_string(),
                None => return Err(parse_err(line, format!("key '{key}' needs a section"))),
            };
            let value = parse_value(value.trim(), line)?;
            if entries.insert(key.clone(), Entry { value, line }).is_some() {
                return Err(parse_err(line, format!("duplicate key '{key}'")));
            }
        }
        let cfg = RawConfig { entries };
        for (k, e) in &cfg.entries {
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(parse_err(e.line, format!("unknown key '{k}'")));
            }
        }
        Ok(cfg)
    }

    pub fn get(&self, key: &str) -> Option<&RawValue> {
        self.entries.get(key).map(|e| &e.value)
    }

    pub fn set(&mut self, key: &str, value: RawValue) {
        let line = self.entries.get(key).map_or(0, |e| e.line);
        self.entries.insert(key.to_string(), Entry { value, line });
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn scalar(&self, key: &str) -> Result<Option<(&str, usize)>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(Entry {
                value: RawValue::Scalar(s),
                line,
            }) => Ok(Some((s.as_str(), *line))),
            Some(Entry { line, .. }) => Err(Error::Config(format!(
                "line {line}: '{key}' takes a single value (lists are only expanded by sweep)"
            ))),
        }
    }

    fn typed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.scalar(key)? {
            None => Ok(None),
            Some((s, line)) => s.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!("line {line}: '{key}' = '{s}' is not {what}"))
            }),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        let v: Option<f64> = self.typed(key, "a number")?;
        match v {
            Some(x) if !x.is_finite() => Err(Error::Config(format!("'{key}' must be finite"))),
            v => Ok(v),
        }
    }

    /// Cartesian product over every list-valued key except those that are lists by
    /// nature. Each cell pairs the swept `(key, value)` choices with a scalar config.
    pub fn sweep_cells(&self) -> Result<Vec<(Vec<(String, String)>, RawConfig)>> {
        let axes: Vec<(&String, &Vec<String>)> = self
            .entries
            .iter()
            .filter(|(k, _)| !LIST_KEYS.contains(&k.as_str()))
            .filter_map(|(k, e)| match &e.value {
                RawValue::List(v) => Some((k, v)),
                RawValue::Scalar(_) => None,
            })
            .collect();
        let total = axes
            .iter()
            .try_fold(1usize, |acc, (_, v)| acc.checked_mul(v.len()))
            .filter(|&n| n <= MAX_SWEEP_CELLS);
        if total.is_none() {
            return Err(Error::Config(format!(
                "sweep expands to more than {MAX_SWEEP_CELLS} cells"
            )));
        }
        let mut cells = vec![(Vec::new(), self.clone())];
        for (key, values) in axes {
            let mut next = Vec::with_capacity(cells.len() * values.len());
            for (choices, cfg) in &cells {
                for v in values {
                    let mut choices: Vec<(String, String)> = choices.clone();
                    choices.push((key.clone(), v.clone()));
                    let mut cfg = cfg.clone();
                    cfg.set(key, RawValue::Scalar(v.clone()));
                    next.push((choices, cfg));
                }
            }
            cells = next;
        }
        Ok(cells)
    }
}

fn parse_value(v: &str, line: usize) -> Result<RawValue> {
    if v.is_empty() {
        return Err(parse_err(line, "missing value"));
    }
    let inner = match v.strip_prefix('[') {
        Some(rest) => Some(
            rest.strip_suffix(']')
                .ok_or_else(|| parse_err(line, "unterminated list"))?,
        ),
        None if v.contains(',') => Some(v),
        None => None,
    };
    match inner {
        None => Ok(RawValue::Scalar(unquote(v).to_string())),
        Some(inner) => {
            let items: Vec<String> = inner
                .split(',')
                .map(|s| unquote(s.trim()).to_string())
                .collect();
            if items.iter().any(String::is_empty) {
                return Err(parse_err(line, "empty list element"));
            }
            Ok(RawValue::List(items))
        }
    }
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .unwrap_or(s)
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialShape {
    Gaussian,
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Rk4,
    Strang,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Rk4 => "rk4",
            Scheme::Strang => "strang",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub length: f64,
    pub dealias: bool,
    pub profile: DispersionProfile,
    pub quad_order: usize,
    pub epsilon: f64,
    pub shape: InitialShape,
    pub phase: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Explicit snapshot times; otherwise `snapshots_per_octave` log-spaced times from 1.
    pub snapshots: Option<Vec<f64>>,
    pub snapshots_per_octave: usize,
    pub self_test: bool,
    pub scheme: Scheme,
    pub out_dir: PathBuf,
    pub name: String,
}

/// Default domain length. Frequency `xi` travels to `x = -2 d_av xi t`, so with
/// `L = 40 d_av t_end` only `|xi| > 10` can wrap around the domain by `t_end`; a
/// unit Gaussian's spectrum is below `1e-10` of its peak there.
pub fn default_length(d_av: f64, t_end: f64) -> f64 {
    (40.0 * d_av.abs() * t_end).max(40.0)
}

/// Default point count: the smallest power of two with `xi_max = pi n / L >= 10`,
/// so the spectrum is negligible at the lattice edge as well.
pub fn default_n(length: f64) -> usize {
    ((10.0 * length / std::f64::consts::PI).ceil() as usize)
        .next_power_of_two()
        .max(256)
}

impl Default for SimConfig {
    fn default() -> Self {
        let t_end = 200.0;
        let length = default_length(1.0, t_end);
        SimConfig {
            n: default_n(length),
            length,
            dealias: true,
            profile: DispersionProfile::default(),
            quad_order: 16,
            epsilon: 0.1,
            shape: InitialShape::Gaussian,
            phase: 0.0,
            dt: 0.05,
            t_end,
            snapshots: None,
            snapshots_per_octave: 4,
            self_test: true,
            scheme: Scheme::Rk4,
            out_dir: PathBuf::from("runs"),
            name: "run".into(),
        }
    }
}

impl SimConfig {
    pub fn from_file(path: &Path) -> Result<SimConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = SimConfig::from_raw(&RawConfig::parse(&text)?)?;
        cfg.resolve_initial_file(path);
        Ok(cfg)
    }

    /// Makes a relative `initial.file` relative to the config file's directory.
    pub fn resolve_initial_file(&mut self, config_path: &Path) {
        if let InitialShape::File(p) = &self.shape {
            if p.is_relative() {
                if let Some(dir) = config_path.parent() {
                    self.shape = InitialShape::File(dir.join(p));
                }
            }
        }
    }

    pub fn from_raw(raw: &RawConfig) -> Result<SimConfig> {
        let base = SimConfig::default();
        let d_plus = raw.f64("dispersion.d_plus")?.unwrap_or(3.0);
        let d_minus = raw.f64("dispersion.d_minus")?.unwrap_or(1.0);
        let t_plus = raw.f64("dispersion.t_plus")?.unwrap_or(0.5);
        let c = raw.f64("dispersion.c")?.unwrap_or(1.0);
        let profile = DispersionProfile::new(d_plus, d_minus, t_plus, c)
            .map_err(|e| Error::Config(e.to_string()))?;
        if let Some(d_av) = raw.f64("dispersion.d_av")? {
            if (d_av - profile.d_av()).abs() > 1e-12 * d_av.abs().max(1.0) {
                return Err(Error::Config(format!(
                    "dispersion.d_av = {d_av} but d_plus t_plus - d_minus (1 - t_plus) = {}",
                    profile.d_av()
                )));
            }
        }
        let t_end = raw.f64("time.t_end")?.unwrap_or(base.t_end);
        let length = match raw.f64("grid.length")? {
            Some(l) => l,
            None => default_length(profile.d_av(), t_end),
        };
        let n = match raw.typed::<usize>("grid.n", "a positive integer")? {
            Some(n) => n,
            None => default_n(length),
        };
        let file = raw.scalar("initial.file")?.map(|(s, _)| PathBuf::from(s));
        let shape = match (raw.scalar("initial.shape")?.map(|(s, _)| s), file) {
            (None | Some("gaussian"), None) => InitialShape::Gaussian,
            (Some("gaussian"), Some(_)) => {
                return Err(Error::Config(
                    "initial.file given but initial.shape = gaussian".into(),
                ))
            }
            (None | Some("file"), Some(p)) => InitialShape::File(p),
            (Some("file"), None) => {
                return Err(Error::Config("initial.shape = file needs initial.file".into()))
            }
            (Some(other), _) => {
                return Err(Error::Config(format!("unknown initial.shape '{other}'")))
            }
        };
        let scheme = match raw.scalar("time.scheme")?.map(|(s, _)| s) {
            None | Some("rk4") => Scheme::Rk4,
            Some("strang") => Scheme::Strang,
            Some(other) => return Err(Error::Config(format!("unknown time.scheme '{other}'"))),
        };
        let snapshots = match raw.get("time.snapshots") {
            None => None,
            Some(RawValue::Scalar(s)) => Some(vec![parse_time(s)?]),
            Some(RawValue::List(v)) => Some(v.iter().map(|s| parse_time(s)).collect::<Result<_>>()?),
        };
        let cfg = SimConfig {
            n,
            length,
            dealias: raw.typed("grid.dealias", "true or false")?.unwrap_or(true),
            profile,
            quad_order: raw
                .typed("dispersion.quad_order", "a positive integer")?
                .unwrap_or(base.quad_order),
            epsilon: raw.f64("initial.epsilon")?.unwrap_or(base.epsilon),
            shape,
            phase: raw.f64("initial.phase")?.unwrap_or(0.0),
            dt: raw.f64("time.dt")?.unwrap_or(base.dt),
            t_end,
            snapshots,
            snapshots_per_octave: raw
                .typed("time.snapshots_per_octave", "a positive integer")?
                .unwrap_or(base.snapshots_per_octave),
            self_test: raw.typed("time.self_test", "true or false")?.unwrap_or(true),
            scheme,
            out_dir: raw
                .scalar("output.dir")?
                .map_or(base.out_dir, |(s, _)| PathBuf::from(s)),
            name: raw
                .scalar("output.name")?
                .map_or(base.name, |(s, _)| s.to_string()),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.n >= 8 && self.n.is_power_of_two()) {
            return fail(format!("grid.n = {} must be a power of two >= 8", self.n));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return fail(format!("grid.length = {} must be positive", self.length));
        }
        if !(self.epsilon >= 0.0) {
            return fail(format!("initial.epsilon = {} must be >= 0", self.epsilon));
        }
        if !(self.dt > 0.0) {
            return fail(format!("time.dt = {} must be positive", self.dt));
        }
        if !(self.t_end >= 0.0) {
            return fail(format!("time.t_end = {} must be >= 0", self.t_end));
        }
        if self.quad_order == 0 {
            return fail("dispersion.quad_order must be >= 1".into());
        }
        if self.snapshots_per_octave == 0 {
            return fail("time.snapshots_per_octave must be >= 1".into());
        }
        if !(self.profile.d_av() > 0.0) {
            return fail(format!(
                "d_av = {} must be positive (the phase kernel 1/(2(d_av t + D)) needs it)",
                self.profile.d_av()
            ));
        }
        if let Some(s) = &self.snapshots {
            if s.windows(2).any(|w| !(w[0] < w[1])) {
                return fail("time.snapshots must be strictly increasing".into());
            }
            if s.iter().any(|&t| !(0.0..=self.t_end).contains(&t)) {
                return fail("time.snapshots must lie in [0, t_end]".into());
            }
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name == ".." {
            return fail(format!("output.name '{}' is not a plain directory name", self.name));
        }
        let q = self.quadrature()?;
        if self.t_end > 1.0 && !(self.profile.d_av() + q.min_shift() > 0.0) {
            return fail(format!(
                "d_av + min D = {} must be positive for the phase kernel on [1, t_end]",
                self.profile.d_av() + q.min_shift()
            ));
        }
        if self.scheme == Scheme::Strang && !self.profile.is_unmanaged() {
            return fail("time.scheme = strang solves the unmanaged equation only; set d_minus = -d_plus".into());
        }
        Ok(())
    }

    pub fn quadrature(&self) -> Result<TauQuadrature> {
        TauQuadrature::build(&self.profile, self.quad_order)
    }

    /// `0`, the requested times and `t_end`, sorted and deduplicated.
    pub fn snapshot_schedule(&self) -> Vec<f64> {
        let mut ts = vec![0.0];
        match &self.snapshots {
            Some(s) => ts.extend(s.iter().copied()),
            None => {
                let p = self.snapshots_per_octave as f64;
                let mut k = 0;
                loop {
                    let t = 2f64.powf(k as f64 / p);
                    if t > self.t_end * (1.0 + 1e-12) {
                        break;
                    }
                    ts.push(t);
                    k += 1;
                }
            }
        }
        ts.push(self.t_end);
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
        ts
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let p = &self.profile;
        let _ = writeln!(s, "grid.n = {}", self.n);
        let _ = writeln!(s, "grid.length = {:?}", self.length);
        let _ = writeln!(s, "grid.dealias = {}", self.dealias);
        let _ = writeln!(s, "dispersion.d_plus = {:?}", p.d_plus());
        let _ = writeln!(s, "dispersion.d_minus = {:?}", p.d_minus());
        let _ = writeln!(s, "dispersion.t_plus = {:?}", p.t_plus());
        let _ = writeln!(s, "dispersion.d_av = {:?}", p.d_av());
        let _ = writeln!(s, "dispersion.c = {:?}", p.c());
        let _ = writeln!(s, "dispersion.quad_order = {}", self.quad_order);
        let _ = writeln!(s, "initial.epsilon = {:?}", self.epsilon);
        match &self.shape {
            InitialShape::Gaussian => {
                let _ = writeln!(s, "initial.shape = gaussian");
            }
            InitialShape::File(f) => {
                let _ = writeln!(s, "initial.shape = file");
                let _ = writeln!(s, "initial.file = \"{}\"", f.display());
            }
        }
        let _ = writeln!(s, "initial.phase = {:?}", self.phase);
        let _ = writeln!(s, "time.dt = {:?}", self.dt);
        let _ = writeln!(s, "time.t_end = {:?}", self.t_end);
        if let Some(ts) = &self.snapshots {
            let list: Vec<String> = ts.iter().map(|t| format!("{t:?}")).collect();
            let _ = writeln!(s, "time.snapshots = [{}]", list.join(", "));
        }
        let _ = writeln!(s, "time.snapshots_per_octave = {}", self.snapshots_per_octave);
        let _ = writeln!(s, "time.self_test = {}", self.self_test);
        let _ = writeln!(s, "time.scheme = {}", self.scheme.as_str());
        let _ = writeln!(s, "output.dir = \"{}\"", self.out_dir.display());
        let _ = writeln!(s, "output.name = \"{}\"", self.name);
        s
    }
}

fn parse_time(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|t| t.is_finite())
        .ok_or_else(|| Error::Config(format!("time.snapshots entry '{s}' is not a number")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_dotted_keys() {
        let raw = RawConfig::parse(
            "# reference\n[grid]\nn = 1024\nlength = 80 # inline\n[time]\ntime.dt = 0.1\n\ninitial.epsilon = 0.2\n",
        );
        // a dotted key from another section inside [time] is rejected
        assert!(raw.is_err());
        let raw = RawConfig::parse("[grid]\nn = 1024\nlength = 80\n[time]\ndt = 0.1\n").unwrap();
        let cfg = SimConfig::from_raw(&raw).unwrap();
        assert_eq!((cfg.n, cfg.length, cfg.dt), (1024, 80.0, 0.1));
    }

    #[test]
    fn defaults() {
        let cfg = SimConfig::from_raw(&RawConfig::default()).unwrap();
        assert_eq!(cfg, SimConfig::default());
        assert_eq!(cfg.length, 8000.0);
        assert_eq!(cfg.n, 32768);
        let s = cfg.snapshot_schedule();
        assert_eq!(s[0], 0.0);
        assert_eq!(s[1], 1.0);
        assert_eq!(*s.last().unwrap(), 200.0);
        assert!(s.contains(&128.0));
    }

    #[test]
    fn rejections() {
        for text in [
            "grid.n = 1000",
            "grid.n = x",
            "nokey = 3",
            "grid.bogus = 1",
            "time.dt = -1",
            "time.dt = 0.1\ntime.dt = 0.2",
            "[grid\nn = 8",
            "grid.n",
            "dispersion.d_plus = 1\ndispersion.d_minus = 1",
            "dispersion.d_av = 2",
            "initial.shape = file",
            "time.scheme = strang",
            "initial.epsilon = [0.1, 0.2]",
            "time.snapshots = [3, 2]",
            "output.name = a/b",
        ] {
            let res = RawConfig::parse(text).and_then(|r| SimConfig::from_raw(&r));
            assert!(res.is_err(), "accepted: {text}");
        }
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = SimConfig::default();
        cfg.snapshots = Some(vec![0.5, 1.0, 3.0]);
        cfg.t_end = 3.0;
        cfg.shape = InitialShape::File(PathBuf::from("data/u0.csv"));
        cfg.profile = DispersionProfile::new(2.5, 0.75, 0.4, 0.5).unwrap();
        let back = SimConfig::from_raw(&RawConfig::parse(&cfg.to_config_text()).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn sweep_product() {
        let raw = RawConfig::parse(
            "initial.epsilon = [0.05, 0.1, 0.2]\ndispersion.d_plus = 3, 1\ntime.snapshots = [1, 2]\ntime.t_end = 2",
        )
        .unwrap();
        let cells = raw.sweep_cells().unwrap();
        assert_eq!(cells.len(), 6);
        let bad = cells
            .iter()
            .filter(|(_, c)| SimConfig::from_raw(c).is_err())
            .count();
        // d_plus = 1 with the default d_minus = 1, t_plus = 1/2 has d_av = 0
        assert_eq!(bad, 3);
        assert!(cells.iter().all(|(ch, _)| ch.len() == 2));
    }
}
