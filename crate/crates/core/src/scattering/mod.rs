//! Modified-scattering analysis: the phase accumulator `Theta`, the renormalized
//! profile `g = exp(i Theta) f_hat`, the extracted data `(W0, Phi_inf, W)`, the
//! asymptotic comparator and the rate fits.

pub mod fit;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dispersion::TauQuadrature;
use crate::error::{Error, Result};
use crate::grid::{sup_norm, Field, Grid, Space, C64};
use crate::integrator::Snapshot;
use crate::observables::{position_from_profile, ObservablesRecord, GAIN_EXPONENT};
use crate::propagator::{check_coverage, dilate_and_modulate, Factorized};

pub use fit::{fit_power_law, PowerFit};

/// Earliest final time accepted by [`extract_scattering_data`].
pub const MIN_T_FINAL: f64 = 50.0;

/// Default start of the fit windows; earlier times are transient.
pub const DEFAULT_T_MIN: f64 = 25.0;

/// `Theta(t, xi) = c integral_1^t K(d_av s) |f_hat(s, xi)|^2 ds` with the averaged
/// kernel `K(s) = integral_0^1 (2 (s + D(tau)))^-1 dtau`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseAccumulator {
    theta: Vec<f64>,
    last_update_time: Option<f64>,
}

impl PhaseAccumulator {
    pub fn new(n: usize) -> Self {
        PhaseAccumulator {
            theta: vec![0.0; n],
            last_update_time: None,
        }
    }

    pub fn from_parts(theta: Vec<f64>, last_update_time: Option<f64>) -> Self {
        PhaseAccumulator {
            theta,
            last_update_time,
        }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn last_update_time(&self) -> Option<f64> {
        self.last_update_time
    }

    /// Simpson update over `[t, t + h]` from `|f_hat|^2` at the two ends and the midpoint.
    pub fn accumulate_theta(
        &mut self,
        quadrature: &TauQuadrature,
        d_av: f64,
        c: f64,
        t: f64,
        h: f64,
        moduli: [&[f64]; 3],
    ) -> Result<()> {
        if moduli.iter().any(|m| m.len() != self.theta.len()) {
            return Err(Error::LengthMismatch {
                expected: self.theta.len(),
                found: moduli.iter().map(|m| m.len()).find(|&l| l != self.theta.len()).unwrap_or(0),
            });
        }
        let k = [
            quadrature.resonant_kernel(t, d_av)?,
            quadrature.resonant_kernel(t + 0.5 * h, d_av)?,
            quadrature.resonant_kernel(t + h, d_av)?,
        ];
        let w = [c * h / 6.0 * k[0], c * h / 6.0 * 4.0 * k[1], c * h / 6.0 * k[2]];
        for (j, th) in self.theta.iter_mut().enumerate() {
            *th += w[0] * moduli[0][j] + w[1] * moduli[1][j] + w[2] * moduli[2][j];
        }
        self.last_update_time = Some(t + h);
        Ok(())
    }
}

/// `g = exp(i Theta) f_hat`.
pub fn renormalized_profile(f_hat: &Field, theta: &[f64]) -> Result<Field> {
    f_hat.ensure_space(Space::Frequency)?;
    if theta.len() != f_hat.values().len() {
        return Err(Error::LengthMismatch {
            expected: f_hat.values().len(),
            found: theta.len(),
        });
    }
    let values = f_hat
        .values()
        .iter()
        .zip(theta)
        .map(|(f, th)| f * C64::from_polar(1.0, *th))
        .collect();
    Field::new(f_hat.grid().clone(), values, Space::Frequency)
}

/// Equation constants the analysis needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterParams {
    pub c: f64,
    pub d_av: f64,
}

impl ScatterParams {
    /// Coefficient of `|W|^2 log t` in the phase: `c / (2 d_av)`.
    pub fn log_phase_coefficient(&self) -> f64 {
        self.c / (2.0 * self.d_av)
    }
}

fn window_snapshots(snapshots: &[Snapshot]) -> Vec<&Snapshot> {
    snapshots.iter().filter(|s| s.t >= 1.0).collect()
}

fn g_of(s: &Snapshot) -> Result<Field> {
    renormalized_profile(&s.f_hat, &s.theta)
}

/// `(sqrt(t1 t2), ||g(t2) - g(t1)||_inf / (t2 - t1))` over consecutive snapshots in `t >= 1`.
pub fn dtg_diagnostic(snapshots: &[Snapshot]) -> Result<Vec<(f64, f64)>> {
    let snaps = window_snapshots(snapshots);
    if snaps.len() < 3 {
        return Err(Error::Analysis(format!(
            "{} snapshots in t >= 1, at least 3 needed",
            snaps.len()
        )));
    }
    let gs = snaps.iter().map(|s| g_of(s)).collect::<Result<Vec<_>>>()?;
    Ok(snaps
        .windows(2)
        .zip(gs.windows(2))
        .map(|(s, g)| {
            let dt = s[1].t - s[0].t;
            ((s[0].t * s[1].t).sqrt(), g[1].sup_distance(&g[0]) / dt)
        })
        .collect())
}

/// `(t, ||g(2t) - g(t)||_inf)` for every snapshot pair `t, 2t` with `t >= 1`.
pub fn dyadic_differences(snapshots: &[Snapshot]) -> Result<Vec<(f64, f64)>> {
    let snaps = window_snapshots(snapshots);
    let mut out = Vec::new();
    for (i, a) in snaps.iter().enumerate() {
        if let Some(b) = snaps[i + 1..]
            .iter()
            .find(|b| (b.t - 2.0 * a.t).abs() <= 1e-9 * a.t)
        {
            out.push((a.t, g_of(b)?.sup_distance(&g_of(a)?)));
        }
    }
    Ok(out)
}

/// `max_s |K(s) - 1/(2 d_av s)| s^2` over `s = 1, 2, 4, ..., 1024`, with the per-`s`
/// deviations.
pub fn kernel_bound_constant(
    quadrature: &TauQuadrature,
    d_av: f64,
) -> Result<(f64, Vec<(f64, f64)>)> {
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for k in 0..=10 {
        let s = f64::from(1u32 << k);
        let dev = (quadrature.resonant_kernel(s, d_av)? - 1.0 / (2.0 * d_av * s)).abs();
        worst = worst.max(dev * s * s);
        rows.push((s, dev));
    }
    Ok((worst, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityCheck {
    pub t_half: f64,
    pub w_change: f64,
    pub envelope: f64,
    pub stable: bool,
}

#[derive(Debug, Clone)]
pub struct ScatteringData {
    pub t_final: f64,
    pub w0: Field,
    pub phi_inf: Vec<f64>,
    pub w: Field,
    pub stability: Option<StabilityCheck>,
}

impl ScatteringData {
    pub fn grid(&self) -> &Arc<Grid> {
        self.w.grid()
    }
}

fn profiles_at(snap: &Snapshot, params: ScatterParams) -> Result<(Field, Vec<f64>, Field)> {
    let w0 = g_of(snap)?;
    let log_t = snap.t.ln();
    let k = params.log_phase_coefficient();
    let phi: Vec<f64> = w0
        .values()
        .iter()
        .zip(&snap.theta)
        .map(|(w, th)| th - k * w.norm_sqr() * log_t)
        .collect();
    let w = w0
        .values()
        .iter()
        .zip(&phi)
        .map(|(w, p)| w * C64::from_polar(1.0, -p))
        .collect();
    let w = Field::new(w0.grid().clone(), w, Space::Frequency)?;
    Ok((w0, phi, w))
}

fn snapshot_at(snapshots: &[Snapshot], t: f64) -> Option<&Snapshot> {
    snapshots
        .iter()
        .filter(|s| s.t >= 1.0)
        .min_by(|a, b| {
            let da = (a.t / t).ln().abs();
            let db = (b.t / t).ln().abs();
            da.total_cmp(&db)
        })
}

/// `W0 = g(T)`, `Phi_inf = Theta(T) - (c / 2 d_av) |W0|^2 log T`, `W = exp(-i Phi_inf) W0`.
/// The extraction is repeated at the snapshot nearest `T/2`; a change in `W` beyond
/// `C_g (T/2)^(-1/20)`, with `C_g` the largest `||g(2t) - g(t)|| t^(1/20)` observed,
/// marks the result unstable.
pub fn extract_scattering_data(
    snapshots: &[Snapshot],
    params: ScatterParams,
    t_final: f64,
) -> Result<ScatteringData> {
    if !(params.d_av > 0.0) {
        return Err(Error::Analysis("scattering analysis needs d_av > 0".into()));
    }
    if t_final < MIN_T_FINAL {
        return Err(Error::Analysis(format!(
            "T_final = {t_final} is below {MIN_T_FINAL}"
        )));
    }
    let last = snapshots
        .iter()
        .find(|s| (s.t - t_final).abs() <= 1e-9 * t_final)
        .ok_or_else(|| Error::Analysis(format!("no snapshot at T_final = {t_final}")))?;
    let (w0, phi_inf, w) = profiles_at(last, params)?;

    let dyadic = dyadic_differences(snapshots)?;
    let half = snapshot_at(snapshots, 0.5 * t_final).filter(|s| s.t < t_final);
    let stability = match (half, dyadic.is_empty()) {
        (Some(h), false) => {
            let c_g = dyadic
                .iter()
                .map(|(t, d)| d * t.powf(GAIN_EXPONENT))
                .fold(0.0, f64::max);
            let (_, _, w_half) = profiles_at(h, params)?;
            let w_change = w.sup_distance(&w_half);
            let envelope = c_g * h.t.powf(-GAIN_EXPONENT);
            Some(StabilityCheck {
                t_half: h.t,
                w_change,
                envelope,
                stable: w_change <= envelope,
            })
        }
        _ => None,
    };
    Ok(ScatteringData {
        t_final,
        w0,
        phi_inf,
        w,
        stability,
    })
}

/// `(2i d_av t)^(-1/2) exp(i x^2 / 4 d_av t) exp(-i (c / 2 d_av) |W|^2 log t) W(-x / 2 d_av t)`.
pub fn asymptotic_field(
    data: &ScatteringData,
    params: ScatterParams,
    t: f64,
    grid: &Arc<Grid>,
) -> Result<Factorized> {
    if t < 1.0 {
        return Err(Error::TimeTooSmall {
            what: "asymptotic field",
            t,
            min: 1.0,
        });
    }
    let k = params.log_phase_coefficient() * t.ln();
    let s = params.d_av * t;
    let res = dilate_and_modulate(grid, data.w.grid().xi(), data.w.values(), s, |w| {
        w * C64::from_polar(1.0, -k * w.norm_sqr())
    });
    check_coverage(res, data.w.values(), s)
}

/// `(t, ||u(t) - asymptotic_field(t)||_inf)` at every snapshot with `t >= 1`.
pub fn residual_series(
    snapshots: &[Snapshot],
    data: &ScatteringData,
    params: ScatterParams,
) -> Result<Vec<(f64, f64)>> {
    window_snapshots(snapshots)
        .into_iter()
        .map(|s| {
            let u = position_from_profile(&s.f_hat, params.d_av * s.t)?;
            let a = asymptotic_field(data, params, s.t, u.grid())?;
            Ok((s.t, u.sup_distance(&a.field)))
        })
        .collect()
}

/// `(t, ||u(t)||_inf)` at every snapshot with `t >= 1`.
pub fn decay_series(snapshots: &[Snapshot], d_av: f64) -> Result<Vec<(f64, f64)>> {
    window_snapshots(snapshots)
        .into_iter()
        .map(|s| {
            let u = position_from_profile(&s.f_hat, d_av * s.t)?;
            Ok((s.t, sup_norm(u.values())))
        })
        .collect()
}

/// A fit, or the reason it was refused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FitOutcome {
    Fitted(PowerFit),
    Refused { error: String },
}

impl FitOutcome {
    fn from_series(series: &[(f64, f64)], t_lo: f64, t_hi: f64) -> Self {
        match fit_power_law(&fit::window(series, t_lo, t_hi)) {
            Ok(f) => FitOutcome::Fitted(f),
            Err(e) => FitOutcome::Refused {
                error: e.to_string(),
            },
        }
    }

    pub fn fitted(&self) -> Option<&PowerFit> {
        match self {
            FitOutcome::Fitted(f) => Some(f),
            FitOutcome::Refused { .. } => None,
        }
    }

    pub fn exponent(&self) -> Option<f64> {
        self.fitted().map(|f| f.exponent)
    }
}

/// Summary written as `rates.json`. Exponents are signed log-log slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub t_min: f64,
    pub t_final: f64,
    pub decay_exponent: FitOutcome,
    pub residual_exponent: FitOutcome,
    pub g_convergence_rate: FitOutcome,
    pub dtg_exponent: FitOutcome,
    pub lemma_constant: Option<f64>,
    pub theta_kernel_constant: f64,
    pub stability: Option<StabilityCheck>,
    pub predicted: PredictedRates,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedRates {
    pub decay_exponent: f64,
    pub residual_exponent: f64,
    pub g_convergence_rate: f64,
    pub dtg_exponent: f64,
}

impl Default for PredictedRates {
    fn default() -> Self {
        PredictedRates {
            decay_exponent: -0.5,
            residual_exponent: -0.5 - GAIN_EXPONENT,
            g_convergence_rate: -GAIN_EXPONENT,
            dtg_exponent: -1.0 - GAIN_EXPONENT,
        }
    }
}

/// Everything `scatter` derives from a trajectory.
#[derive(Debug, Clone)]
pub struct ScatterReport {
    pub data: ScatteringData,
    pub rates: Rates,
    pub decay: Vec<(f64, f64)>,
    pub residual: Vec<(f64, f64)>,
    pub dyadic: Vec<(f64, f64)>,
    pub dtg: Vec<(f64, f64)>,
}

pub fn analyze(
    snapshots: &[Snapshot],
    records: &[ObservablesRecord],
    quadrature: &TauQuadrature,
    params: ScatterParams,
    t_min: f64,
) -> Result<ScatterReport> {
    let t_final = snapshots
        .iter()
        .map(|s| s.t)
        .fold(f64::NEG_INFINITY, f64::max);
    let data = extract_scattering_data(snapshots, params, t_final)?;
    let decay = decay_series(snapshots, params.d_av)?;
    let residual = residual_series(snapshots, &data, params)?;
    let dyadic = dyadic_differences(snapshots)?;
    let dtg = dtg_diagnostic(snapshots)?;
    let lemma_constant = records
        .iter()
        .filter(|r| r.t >= 1.0)
        .filter_map(|r| r.window.map(|w| w.lemma_ratio))
        .reduce(f64::max);
    let (theta_kernel_constant, _) = kernel_bound_constant(quadrature, params.d_av)?;
    let rates = Rates {
        t_min,
        t_final,
        decay_exponent: FitOutcome::from_series(&decay, t_min, t_final),
        residual_exponent: FitOutcome::from_series(&residual, t_min, t_final),
        g_convergence_rate: FitOutcome::from_series(&dyadic, t_min, 0.5 * t_final),
        dtg_exponent: FitOutcome::from_series(&dtg, t_min, t_final),
        lemma_constant,
        theta_kernel_constant,
        stability: data.stability,
        predicted: PredictedRates::default(),
    };
    Ok(ScatterReport {
        data,
        rates,
        decay,
        residual,
        dyadic,
        dtg,
    })
}

/// `scattering.csv`: `xi, W0_re, W0_im, Phi_inf, W_re, W_im`.
pub fn scattering_csv(data: &ScatteringData) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("xi,W0_re,W0_im,Phi_inf,W_re,W_im\n");
    for (((xi, w0), phi), w) in data
        .grid()
        .xi()
        .iter()
        .zip(data.w0.values())
        .zip(&data.phi_inf)
        .zip(data.w.values())
    {
        let _ = writeln!(
            out,
            "{xi:e},{:e},{:e},{phi:e},{:e},{:e}",
            w0.re, w0.im, w.re, w.im
        );
    }
    out
}
