//! Diagnostic norms recorded along a trajectory: conserved quantities, the
//! dispersive and energy norms of the bootstrap window `t >= 1`, and the
//! pointwise-decay ratio.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{sobolev_h1_of_spectrum, sup_norm, weighted_l2, Field, Grid, NormKind, Space};
use crate::nonlinearity::AveragedNonlinearity;
use crate::propagator::{apply_free_multiplier, galilean_j};

/// The extra decay `1/20` beyond `t^(-1/2)`, shared by the energy-norm weight and the
/// profile-convergence rate.
pub const GAIN_EXPONENT: f64 = 1.0 / 20.0;

/// Relative tolerance of the `|| J u || = || x f ||` cross-check.
pub const J_CROSS_CHECK_TOL: f64 = 1e-6;

/// Fraction of the domain length, on each side, counted as boundary band.
pub const BOUNDARY_BAND: f64 = 0.1;

pub const CSV_COLUMNS: [&str; 12] = [
    "t",
    "mass",
    "energy",
    "linf_u",
    "h1_u",
    "h11_u",
    "x_d",
    "x_e",
    "j_norm",
    "xf_norm",
    "boundary_mass_fraction",
    "lemma_ratio",
];

/// Bootstrap-window norms; only defined for `t >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowNorms {
    pub x_d: f64,
    pub x_e: f64,
    pub j_norm: f64,
    pub xf_norm: f64,
    pub lemma_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservablesRecord {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub linf_u: f64,
    pub h1_u: f64,
    pub h11_u: f64,
    pub boundary_mass_fraction: f64,
    pub window: Option<WindowNorms>,
}

/// `u(t) = exp(i s Laplacian) f` rebuilt from the stored profile spectrum, `s = d_av t`.
pub fn position_from_profile(f_hat: &Field, s: f64) -> Result<Field> {
    f_hat.ensure_space(Space::Frequency)?;
    let mut buf = f_hat.values().to_vec();
    apply_free_multiplier(f_hat.grid(), &mut buf, s);
    f_hat.grid().inverse_in_place(&mut buf);
    Ok(Field::from_raw(f_hat.grid().clone(), buf, Space::Position))
}

/// Share of `||u||_2^2` carried by the outer band of the domain.
pub fn boundary_mass_fraction(u: &Field) -> f64 {
    let grid = u.grid();
    let cut = (0.5 - BOUNDARY_BAND) * grid.length();
    let (mut outer, mut total) = (0.0, 0.0);
    for (v, &x) in u.values().iter().zip(grid.x()) {
        let m = v.norm_sqr();
        total += m;
        if x.abs() >= cut {
            outer += m;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outer / total
    }
}

/// `||f_hat||_inf`.
pub fn x_d_norm(f_hat: &Field, t: f64) -> Result<f64> {
    window_guard(t)?;
    Ok(sup_norm(f_hat.values()))
}

/// `t^(-1/20) (||<d_x> u||_2 + ||J u||_2)`, with `||J u||` taken as `||x f||`; the
/// direct `J(t) u` is cross-checked against it.
pub fn x_e_norm(f_hat: &Field, t: f64, d_av: f64) -> Result<(f64, f64, f64)> {
    window_guard(t)?;
    let h1 = sobolev_h1_of_spectrum(f_hat.grid(), f_hat.values());
    let f = f_hat.inverse_transform()?;
    let xf = weighted_l2(f.grid(), f.values());
    let u = position_from_profile(f_hat, d_av * t)?;
    let j = galilean_j(&u, d_av * t)?.norm(NormKind::L2)?;
    let scale = xf.max(j);
    if scale > 0.0 && (xf - j).abs() > J_CROSS_CHECK_TOL * scale {
        return Err(Error::CrossCheck(format!(
            "||J u|| = {j:e} but ||x f|| = {xf:e} at t = {t}"
        )));
    }
    Ok((t.powf(-GAIN_EXPONENT) * (h1 + xf), j, xf))
}

/// `(||u||_inf, t^(-1/2) (x_d + x_e))`.
pub fn pointwise_decay_bound(f_hat: &Field, t: f64, d_av: f64) -> Result<(f64, f64)> {
    let x_d = x_d_norm(f_hat, t)?;
    let (x_e, _, _) = x_e_norm(f_hat, t, d_av)?;
    let u = position_from_profile(f_hat, d_av * t)?;
    Ok((sup_norm(u.values()), (x_d + x_e) / t.sqrt()))
}

fn window_guard(t: f64) -> Result<()> {
    if t < 1.0 {
        return Err(Error::TimeTooSmall {
            what: "bootstrap-window norm",
            t,
            min: 1.0,
        });
    }
    Ok(())
}

/// Evaluates records for one equation; holds the nonlinearity for the energy.
pub struct Observer {
    nl: Arc<AveragedNonlinearity>,
    d_av: f64,
}

impl Observer {
    pub fn new(nl: Arc<AveragedNonlinearity>, d_av: f64) -> Self {
        Observer { nl, d_av }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.nl.grid()
    }

    /// `d_av ||u_x||^2 + (c/2) integral_0^1 ||exp(i D Laplacian) u||_4^4 dtau`.
    pub fn energy(&self, f_hat: &Field, t: f64) -> f64 {
        let grid = f_hat.grid();
        let kinetic: f64 = f_hat
            .values()
            .iter()
            .zip(grid.xi())
            .map(|(v, xi)| xi * xi * v.norm_sqr())
            .sum::<f64>()
            * grid.dxi();
        let quartic = if self.nl.c() == 0.0 {
            0.0
        } else {
            self.nl.quartic_average(f_hat.values(), self.d_av * t)
        };
        self.d_av * kinetic + 0.5 * self.nl.c() * quartic
    }

    pub fn record(&self, f_hat: &Field, t: f64) -> Result<ObservablesRecord> {
        f_hat.ensure_space(Space::Frequency)?;
        f_hat.ensure_finite()?;
        let u = position_from_profile(f_hat, self.d_av * t)?;
        let mass = f_hat.norm(NormKind::L2)?.powi(2);
        let h1_u = sobolev_h1_of_spectrum(f_hat.grid(), f_hat.values());
        let h11_u = h1_u + u.norm(NormKind::WeightedL2)?;
        let linf_u = sup_norm(u.values());
        let window = if t >= 1.0 {
            let x_d = x_d_norm(f_hat, t)?;
            let (x_e, j_norm, xf_norm) = x_e_norm(f_hat, t, self.d_av)?;
            let rhs = (x_d + x_e) / t.sqrt();
            Some(WindowNorms {
                x_d,
                x_e,
                j_norm,
                xf_norm,
                lemma_ratio: if rhs > 0.0 { linf_u / rhs } else { 0.0 },
            })
        } else {
            None
        };
        let rec = ObservablesRecord {
            t,
            mass,
            energy: self.energy(f_hat, t),
            linf_u,
            h1_u,
            h11_u,
            boundary_mass_fraction: boundary_mass_fraction(&u),
            window,
        };
        if !rec.energy.is_finite() {
            return Err(Error::NonFinite("energy"));
        }
        Ok(rec)
    }
}

fn fmt_opt(out: &mut String, v: Option<f64>) {
    match v {
        Some(v) => {
            let _ = write!(out, ",{v:e}");
        }
        None => out.push(','),
    }
}

pub fn observables_to_csv(records: &[ObservablesRecord]) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in records {
        let _ = write!(
            out,
            "{:e},{:e},{:e},{:e},{:e},{:e}",
            r.t, r.mass, r.energy, r.linf_u, r.h1_u, r.h11_u
        );
        let w = r.window;
        fmt_opt(&mut out, w.map(|w| w.x_d));
        fmt_opt(&mut out, w.map(|w| w.x_e));
        fmt_opt(&mut out, w.map(|w| w.j_norm));
        fmt_opt(&mut out, w.map(|w| w.xf_norm));
        let _ = write!(out, ",{:e}", r.boundary_mass_fraction);
        fmt_opt(&mut out, w.map(|w| w.lemma_ratio));
        out.push('\n');
    }
    out
}

/// Parses the output of [`observables_to_csv`]. Window columns are either all present
/// or all empty on a row.
pub fn parse_observables_csv(text: &str) -> Result<Vec<ObservablesRecord>> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((i, l)) => break (i + 1, l),
            None => return Err(Error::Parse { line: 0, msg: "empty observables file".into() }),
        }
    };
    let cols: Vec<&str> = header.1.split(',').map(str::trim).collect();
    if cols != CSV_COLUMNS {
        return Err(Error::Parse {
            line: header.0,
            msg: "unexpected observables header".into(),
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != CSV_COLUMNS.len() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} columns, found {}", CSV_COLUMNS.len(), cells.len()),
            });
        }
        let num = |k: usize| crate::grid::parse_f64(cells[k], lineno);
        let window_cells = [6, 7, 8, 9, 11];
        let empty = window_cells.iter().filter(|&&k| cells[k].is_empty()).count();
        let window = match empty {
            0 => Some(WindowNorms {
                x_d: num(6)?,
                x_e: num(7)?,
                j_norm: num(8)?,
                xf_norm: num(9)?,
                lemma_ratio: num(11)?,
            }),
            5 => None,
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "window columns partially empty".into(),
                })
            }
        };
        out.push(ObservablesRecord {
            t: num(0)?,
            mass: num(1)?,
            energy: num(2)?,
            linf_u: num(3)?,
            h1_u: num(4)?,
            h11_u: num(5)?,
            boundary_mass_fraction: num(10)?,
            window,
        });
    }
    Ok(out)
}
