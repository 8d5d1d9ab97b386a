//! Uniform periodic lattice and the Fourier convention used everywhere else.
//!
//! The forward transform is
//!
//! ```text
//! F[f](xi) = (2 pi)^(-1/2) * integral exp(+i x xi) f(x) dx
//! ```
//!
//! so that `d/dx` is the multiplier `-i xi` and the free group `exp(i t Laplacian)`
//! is the multiplier `exp(-i t xi^2)`. Spectra are stored in natural order,
//! `xi_k = 2 pi (k - n/2) / L` for `k = 0..n`. Nothing outside this module needs to
//! know how the underlying FFT orders or signs its output.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Space {
    Position,
    Frequency,
}

impl Space {
    pub fn as_str(self) -> &'static str {
        match self {
            Space::Position => "position",
            Space::Frequency => "frequency",
        }
    }

    pub fn parse(s: &str) -> Option<Space> {
        match s {
            "position" => Some(Space::Position),
            "frequency" => Some(Space::Frequency),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L2,
    Linf,
    /// `|| <d/dx> f ||_2`
    H1,
    /// `H1 + || x f ||_2`
    H11,
    /// `|| x f ||_2`
    WeightedL2,
}

struct Plan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Plan {
    fn new(planner: &mut FftPlanner<f64>, m: usize) -> Self {
        Plan {
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
        }
    }
}

fn run_fft(fft: &Arc<dyn Fft<f64>>, buf: &mut [C64]) {
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(buf, &mut scratch);
}

#[inline]
fn alternate(buf: &mut [C64], scale: f64) {
    for (j, v) in buf.iter_mut().enumerate() {
        *v *= if j & 1 == 0 { scale } else { -scale };
    }
}

/// Periodic grid on `[-L/2, L/2)` with `n` points and its paired frequency lattice.
pub struct Grid {
    n: usize,
    length: f64,
    dx: f64,
    x: Vec<f64>,
    xi: Vec<f64>,
    plan: Plan,
    padded: Plan,
    // +1 for the production convention; -1 only through `with_broken_forward_sign`.
    forward_sign: i8,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Arc<Grid>> {
        Self::build(n, length, 1)
    }

    /// Grid whose forward kernel carries `exp(-i x xi)` while the inverse keeps the
    /// production sign. Exists so the verification suite can show which checks
    /// notice a sign slip.
    #[doc(hidden)]
    pub fn with_broken_forward_sign(n: usize, length: f64) -> Result<Arc<Grid>> {
        Self::build(n, length, -1)
    }

    fn build(n: usize, length: f64, forward_sign: i8) -> Result<Arc<Grid>> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n = {n} must be a power of two and at least 8"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("length {length} must be positive")));
        }
        let dx = length / n as f64;
        let dxi = 2.0 * PI / length;
        let half = (n / 2) as f64;
        let x = (0..n).map(|j| -0.5 * length + j as f64 * dx).collect();
        let xi = (0..n).map(|k| (k as f64 - half) * dxi).collect();
        let mut planner = FftPlanner::new();
        let plan = Plan::new(&mut planner, n);
        let padded = Plan::new(&mut planner, 2 * n);
        Ok(Arc::new(Grid {
            n,
            length,
            dx,
            x,
            xi,
            plan,
            padded,
            forward_sign,
        }))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.length
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn xi_min(&self) -> f64 {
        self.xi[0]
    }

    pub fn xi_max(&self) -> f64 {
        self.xi[self.n - 1]
    }

    pub fn same_lattice(&self, n: usize, length: f64) -> bool {
        self.n == n && (self.length - length).abs() <= 1e-12 * self.length
    }

    fn to_spectrum_with(&self, plan: &Plan, buf: &mut [C64]) {
        let m = buf.len();
        let dx = self.length / m as f64;
        alternate(buf, 1.0);
        if self.forward_sign > 0 {
            run_fft(&plan.inverse, buf);
        } else {
            run_fft(&plan.forward, buf);
        }
        alternate(buf, dx / (2.0 * PI).sqrt());
    }

    fn to_samples_with(&self, plan: &Plan, buf: &mut [C64]) {
        alternate(buf, 1.0);
        run_fft(&plan.forward, buf);
        alternate(buf, (2.0 * PI).sqrt() / self.length);
    }

    /// Position samples to natural-order spectrum, in place.
    pub fn forward_in_place(&self, buf: &mut [C64]) {
        debug_assert_eq!(buf.len(), self.n);
        self.to_spectrum_with(&self.plan, buf);
    }

    /// Natural-order spectrum to position samples, in place.
    pub fn inverse_in_place(&self, buf: &mut [C64]) {
        debug_assert_eq!(buf.len(), self.n);
        self.to_samples_with(&self.plan, buf);
    }

    pub fn padded_len(&self) -> usize {
        2 * self.n
    }

    /// Samples on the twice-refined grid of the band-limited function with the
    /// given spectrum (zero-padded in frequency).
    pub fn padded_samples(&self, spectrum: &[C64]) -> Vec<C64> {
        debug_assert_eq!(spectrum.len(), self.n);
        let offset = self.n / 2;
        let mut buf = vec![C64::new(0.0, 0.0); 2 * self.n];
        buf[offset..offset + self.n].copy_from_slice(spectrum);
        self.to_samples_with(&self.padded, &mut buf);
        buf
    }

    /// Spectrum of refined-grid samples, truncated back to the `n` stored modes.
    pub fn spectrum_from_padded(&self, mut samples: Vec<C64>) -> Vec<C64> {
        debug_assert_eq!(samples.len(), 2 * self.n);
        self.to_spectrum_with(&self.padded, &mut samples);
        let offset = self.n / 2;
        samples.drain(..offset);
        samples.truncate(self.n);
        samples
    }
}

/// Complex samples on a [`Grid`], tagged by the space they live in.
#[derive(Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<C64>,
    space: Space,
}

/// Equal when on the same lattice, in the same space, with identical samples.
impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.space == other.space
            && self.grid.same_lattice(other.grid.n(), other.grid.length())
            && self.values == other.values
    }
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("grid", &self.grid)
            .field("space", &self.space)
            .finish_non_exhaustive()
    }
}

pub(crate) fn all_finite(values: &[C64]) -> bool {
    values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<C64>, space: Space) -> Result<Field> {
        if values.len() != grid.n() {
            return Err(Error::LengthMismatch {
                expected: grid.n(),
                found: values.len(),
            });
        }
        if !all_finite(&values) {
            return Err(Error::NonFinite("field samples"));
        }
        Ok(Field {
            grid,
            values,
            space,
        })
    }

    pub(crate) fn from_raw(grid: Arc<Grid>, values: Vec<C64>, space: Space) -> Field {
        debug_assert_eq!(values.len(), grid.n());
        Field {
            grid,
            values,
            space,
        }
    }

    pub fn zeros(grid: Arc<Grid>, space: Space) -> Field {
        let values = vec![C64::new(0.0, 0.0); grid.n()];
        Field::from_raw(grid, values, space)
    }

    pub fn from_position_fn(grid: Arc<Grid>, f: impl Fn(f64) -> C64) -> Result<Field> {
        let values = grid.x().iter().map(|&x| f(x)).collect();
        Field::new(grid, values, Space::Position)
    }

    pub fn from_frequency_fn(grid: Arc<Grid>, f: impl Fn(f64) -> C64) -> Result<Field> {
        let values = grid.xi().iter().map(|&xi| f(xi)).collect();
        Field::new(grid, values, Space::Frequency)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn space(&self) -> Space {
        self.space
    }

    /// Lattice coordinates matching the tag: `x` for position, `xi` for frequency.
    pub fn coords(&self) -> &[f64] {
        match self.space {
            Space::Position => self.grid.x(),
            Space::Frequency => self.grid.xi(),
        }
    }

    pub fn ensure_space(&self, expected: Space) -> Result<()> {
        if self.space == expected {
            Ok(())
        } else {
            Err(Error::WrongSpace {
                expected,
                found: self.space,
            })
        }
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if all_finite(&self.values) {
            Ok(())
        } else {
            Err(Error::NonFinite("field samples"))
        }
    }

    pub fn forward_transform(&self) -> Result<Field> {
        self.ensure_space(Space::Position)?;
        self.ensure_finite()?;
        let mut buf = self.values.clone();
        self.grid.forward_in_place(&mut buf);
        Ok(Field::from_raw(self.grid.clone(), buf, Space::Frequency))
    }

    pub fn inverse_transform(&self) -> Result<Field> {
        self.ensure_space(Space::Frequency)?;
        self.ensure_finite()?;
        let mut buf = self.values.clone();
        self.grid.inverse_in_place(&mut buf);
        Ok(Field::from_raw(self.grid.clone(), buf, Space::Position))
    }

    /// `d/dx` through the multiplier `-i xi`. The unpaired Nyquist mode is dropped so
    /// real input stays real.
    pub fn spectral_derivative(&self) -> Result<Field> {
        let mut spec = self.forward_transform()?.values;
        spec[0] = C64::new(0.0, 0.0);
        for (v, &xi) in spec.iter_mut().zip(self.grid.xi()).skip(1) {
            *v *= C64::new(0.0, -xi);
        }
        self.grid.inverse_in_place(&mut spec);
        Ok(Field::from_raw(self.grid.clone(), spec, Space::Position))
    }

    pub fn norm(&self, kind: NormKind) -> Result<f64> {
        let value = match kind {
            NormKind::Linf => self.values.iter().map(|v| v.norm()).fold(0.0, f64::max),
            NormKind::L2 => {
                let w = match self.space {
                    Space::Position => self.grid.dx(),
                    Space::Frequency => self.grid.dxi(),
                };
                (w * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
            }
            NormKind::H1 => {
                let spec = self.forward_transform()?;
                sobolev_h1_of_spectrum(&self.grid, spec.values())
            }
            NormKind::WeightedL2 => {
                self.ensure_space(Space::Position)?;
                weighted_l2(&self.grid, &self.values)
            }
            NormKind::H11 => self.norm(NormKind::H1)? + self.norm(NormKind::WeightedL2)?,
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFinite("norm"))
        }
    }

    pub fn scaled(&self, factor: C64) -> Field {
        let values = self.values.iter().map(|v| v * factor).collect();
        Field::from_raw(self.grid.clone(), values, self.space)
    }

    /// `max_j |self_j - other_j|`.
    pub fn sup_distance(&self, other: &Field) -> f64 {
        sup_distance(&self.values, &other.values)
    }

    pub fn l2_distance(&self, other: &Field) -> f64 {
        let w = match self.space {
            Space::Position => self.grid.dx(),
            Space::Frequency => self.grid.dxi(),
        };
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        (w * s).sqrt()
    }

    /// CSV snapshot: a `# space=.. t=.. n=.. L=..` header, a column line and one
    /// `coord,re,im` row per node.
    pub fn write_csv<W: Write>(&self, t: f64, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "# space={} t={:e} n={} L={:e}",
            self.space.as_str(),
            t,
            self.grid.n(),
            self.grid.length()
        )?;
        writeln!(w, "coord,re,im")?;
        for (c, v) in self.coords().iter().zip(&self.values) {
            writeln!(w, "{:e},{:e},{:e}", c, v.re, v.im)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self, t: f64) -> String {
        let mut out = Vec::new();
        self.write_csv(t, &mut out).expect("writing to a Vec cannot fail");
        String::from_utf8(out).expect("csv output is ascii")
    }
}

pub(crate) fn sup_distance(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub(crate) fn sup_norm(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub(crate) fn sobolev_h1_of_spectrum(grid: &Grid, spec: &[C64]) -> f64 {
    let s: f64 = spec
        .iter()
        .zip(grid.xi())
        .map(|(v, xi)| (1.0 + xi * xi) * v.norm_sqr())
        .sum();
    (grid.dxi() * s).sqrt()
}

pub(crate) fn weighted_l2(grid: &Grid, samples: &[C64]) -> f64 {
    let s: f64 = samples
        .iter()
        .zip(grid.x())
        .map(|(v, x)| x * x * v.norm_sqr())
        .sum();
    (grid.dx() * s).sqrt()
}

/// A parsed field snapshot, not yet bound to a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldCsv {
    pub space: Space,
    pub t: f64,
    pub n: usize,
    pub length: f64,
    pub coords: Vec<f64>,
    pub values: Vec<C64>,
}

pub(crate) fn parse_header_fields(line: &str, lineno: usize) -> Result<Vec<(&str, &str)>> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse {
            line: lineno,
            msg: "expected a '#' header line".into(),
        })?
        .trim();
    body.split_whitespace()
        .map(|kv| {
            kv.split_once('=').ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("header entry `{kv}` is not key=value"),
            })
        })
        .collect()
}

pub(crate) fn parse_f64(s: &str, lineno: usize) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
        line: lineno,
        msg: format!("`{}` is not a number", s.trim()),
    })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Parse {
            line: lineno,
            msg: "non-finite number".into(),
        })
    }
}

impl FieldCsv {
    pub fn parse(text: &str) -> Result<FieldCsv> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (lineno, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty input".into(),
        })?;
        let mut space = None;
        let mut t = None;
        let mut n = None;
        let mut length = None;
        for (k, v) in parse_header_fields(header, lineno)? {
            match k {
                "space" => {
                    space = Some(Space::parse(v).ok_or_else(|| Error::Parse {
                        line: lineno,
                        msg: format!("unknown space `{v}`"),
                    })?)
                }
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
        let space = space.ok_or_else(|| missing("space"))?;
        let t = t.ok_or_else(|| missing("t"))?;
        let n = n.ok_or_else(|| missing("n"))?;
        let length = length.ok_or_else(|| missing("L"))?;

        let mut coords = Vec::with_capacity(n.min(1 << 16));
        let mut values = Vec::with_capacity(n.min(1 << 16));
        for (lineno, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("coord") {
                continue;
            }
            let mut cols = line.split(',');
            let (Some(c), Some(re), Some(im), None) =
                (cols.next(), cols.next(), cols.next(), cols.next())
            else {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "expected three columns".into(),
                });
            };
            coords.push(parse_f64(c, lineno)?);
            values.push(C64::new(parse_f64(re, lineno)?, parse_f64(im, lineno)?));
        }
        if values.len() != n {
            return Err(Error::Parse {
                line: 0,
                msg: format!("header says n = {n} but {} rows follow", values.len()),
            });
        }
        Ok(FieldCsv {
            space,
            t,
            n,
            length,
            coords,
            values,
        })
    }

    /// Binds the samples to `grid`, rejecting any lattice mismatch.
    pub fn into_field(self, grid: &Arc<Grid>) -> Result<Field> {
        if !grid.same_lattice(self.n, self.length) {
            return Err(Error::Config(format!(
                "snapshot lattice (n = {}, L = {}) differs from grid (n = {}, L = {})",
                self.n,
                self.length,
                grid.n(),
                grid.length()
            )));
        }
        let expected = match self.space {
            Space::Position => grid.x(),
            Space::Frequency => grid.xi(),
        };
        let tol = 1e-9 * grid.length().max(1.0);
        if expected
            .iter()
            .zip(&self.coords)
            .any(|(a, b)| (a - b).abs() > tol)
        {
            return Err(Error::Config("snapshot coordinates do not match the grid".into()));
        }
        Field::new(grid.clone(), self.values, self.space)
    }
}
