//! Least-squares power laws `y = A t^p` on log-log axes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 5;

/// Smallest accepted `t_max / t_min`. The fit windows used downstream span less than a
/// decade, so a decade cannot be demanded here.
pub const MIN_SPAN_RATIO: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r2: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

pub fn fit_power_law(series: &[(f64, f64)]) -> Result<PowerFit> {
    if series.len() < MIN_POINTS {
        return Err(Error::Fit(format!(
            "{} points, at least {MIN_POINTS} needed",
            series.len()
        )));
    }
    if let Some(&(t, y)) = series.iter().find(|(t, y)| !(*y > 0.0) || !(*t > 0.0)) {
        return Err(Error::Fit(format!(
            "nonpositive value y = {y:e} at t = {t:e}; a power law needs y > 0"
        )));
    }
    if series.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
        return Err(Error::Fit("non-finite sample".into()));
    }
    let t_min = series.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let t_max = series.iter().map(|p| p.0).fold(0.0, f64::max);
    if t_max / t_min < MIN_SPAN_RATIO {
        return Err(Error::Fit(format!(
            "window [{t_min}, {t_max}] spans a factor below {MIN_SPAN_RATIO}"
        )));
    }
    let n = series.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = series.iter().map(|(t, y)| (t.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(PowerFit {
        exponent: slope,
        prefactor: intercept.exp(),
        r2,
        t_min,
        t_max,
        points: series.len(),
    })
}

/// Points of `series` with `t_lo <= t <= t_hi`.
pub fn window(series: &[(f64, f64)], t_lo: f64, t_hi: f64) -> Vec<(f64, f64)> {
    let tol = 1e-12 * t_hi.abs().max(1.0);
    series
        .iter()
        .copied()
        .filter(|(t, _)| *t >= t_lo - tol && *t <= t_hi + tol)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
        (0..12).map(|k| 2f64.powf(k as f64 / 2.0)).map(|t| (t, f(t))).collect()
    }

    #[test]
    fn exact_laws() {
        let fit = fit_power_law(&series(|t| 1.0 / t)).unwrap();
        assert!((fit.exponent + 1.0).abs() < 1e-13);
        assert!((fit.r2 - 1.0).abs() < 1e-13);
        let fit = fit_power_law(&series(|t| 3.0 * t.powf(-0.5))).unwrap();
        assert!((fit.exponent + 0.5).abs() < 1e-13);
        assert!((fit.prefactor - 3.0).abs() < 1e-12);
    }

    #[test]
    fn alternating_noise() {
        let s: Vec<_> = series(|t| t.powf(-0.55))
            .into_iter()
            .enumerate()
            .map(|(k, (t, y))| (t, y * (1.0 + 0.01 * if k % 2 == 0 { 1.0 } else { -1.0 })))
            .collect();
        let fit = fit_power_law(&s).unwrap();
        assert!((fit.exponent + 0.55).abs() < 0.01);
        assert!(fit.r2 > 0.99);
    }

    #[test]
    fn refusals() {
        assert!(fit_power_law(&series(|t| 1.0 / t)[..4]).is_err());
        let mut s = series(|t| t);
        s[3].1 = 0.0;
        let err = fit_power_law(&s).unwrap_err().to_string();
        assert!(err.contains("nonpositive"), "{err}");
        let narrow: Vec<_> = (0..6).map(|k| (1.0 + 0.1 * k as f64, 1.0)).collect();
        assert!(fit_power_law(&narrow).is_err());
    }
}
