//! Piecewise-constant dispersion map, its antiderivative `D(tau)` and the
//! quadrature used for the `tau`-average of the nonlinearity.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `d(t) = d_plus` on `[0, t_plus)`, `-d_minus` on `[t_plus, 1)`, extended periodically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionProfile {
    d_plus: f64,
    d_minus: f64,
    t_plus: f64,
    d_av: f64,
    c: f64,
}

impl Default for DispersionProfile {
    fn default() -> Self {
        DispersionProfile::new(3.0, 1.0, 0.5, 1.0).expect("default profile is valid")
    }
}

impl DispersionProfile {
    /// The average `d_av = d_plus t_plus - d_minus (1 - t_plus)` is derived and must be nonzero.
    pub fn new(d_plus: f64, d_minus: f64, t_plus: f64, c: f64) -> Result<Self> {
        if ![d_plus, d_minus, t_plus, c].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidProfile("non-finite parameter".into()));
        }
        if !(t_plus > 0.0 && t_plus < 1.0) {
            return Err(Error::InvalidProfile(format!("t_plus = {t_plus} not in (0, 1)")));
        }
        let d_av = d_plus * t_plus - d_minus * (1.0 - t_plus);
        if d_av == 0.0 {
            return Err(Error::InvalidProfile("average dispersion d_av is zero".into()));
        }
        Ok(DispersionProfile {
            d_plus,
            d_minus,
            t_plus,
            d_av,
            c,
        })
    }

    /// Constant dispersion `d(t) = d_av`: the mean-zero part vanishes and `D = 0`.
    pub fn unmanaged(d_av: f64, c: f64) -> Result<Self> {
        Self::new(d_av, -d_av, 0.5, c)
    }

    pub fn d_plus(&self) -> f64 {
        self.d_plus
    }

    pub fn d_minus(&self) -> f64 {
        self.d_minus
    }

    pub fn t_plus(&self) -> f64 {
        self.t_plus
    }

    pub fn d_av(&self) -> f64 {
        self.d_av
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    /// `d(t)` reduced to one period.
    pub fn d(&self, t: f64) -> f64 {
        let s = t.rem_euclid(1.0);
        if s < self.t_plus {
            self.d_plus
        } else {
            -self.d_minus
        }
    }

    pub fn d0(&self, t: f64) -> f64 {
        self.d(t) - self.d_av
    }

    pub fn is_unmanaged(&self) -> bool {
        self.d_plus == self.d_av && self.d_minus == -self.d_av
    }

    /// `D(tau) = integral_0^tau d0`, exact piecewise-linear form.
    pub fn big_d(&self, tau: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::TauOutOfRange(tau));
        }
        Ok(self.big_d_unchecked(tau))
    }

    fn big_d_unchecked(&self, tau: f64) -> f64 {
        let rise = self.d_plus - self.d_av;
        if tau <= self.t_plus {
            rise * tau
        } else {
            let peak = rise * self.t_plus;
            // the second slope is exactly what returns D to zero at tau = 1
            peak - peak * (tau - self.t_plus) / (1.0 - self.t_plus)
        }
    }

    /// `D(t_plus)`, the extreme value of `D` on `[0, 1]`.
    pub fn big_d_peak(&self) -> f64 {
        (self.d_plus - self.d_av) * self.t_plus
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauNode {
    pub tau: f64,
    pub weight: f64,
    /// `D(tau)`
    pub shift: f64,
}

/// Composite Gauss-Legendre rule on `[0, t_plus] ∪ [t_plus, 1]`, weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauQuadrature {
    nodes: Vec<TauNode>,
    order: usize,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = vec![(0.0, 0.0); n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            return vec![(0.0, 2.0)];
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out[i] = (-x, w);
        out[n - 1 - i] = (x, w);
    }
    out
}

impl TauQuadrature {
    /// `order` Gauss nodes on each linear piece of `D`; `order = 1` is the midpoint rule.
    pub fn build(profile: &DispersionProfile, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidProfile("quadrature order must be positive".into()));
        }
        let rule = gauss_legendre(order);
        let mut nodes = Vec::with_capacity(2 * order);
        for (a, b) in [(0.0, profile.t_plus), (profile.t_plus, 1.0)] {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for &(x, w) in &rule {
                let tau = mid + half * x;
                nodes.push(TauNode {
                    tau,
                    weight: half * w,
                    shift: profile.big_d(tau)?,
                });
            }
        }
        Ok(TauQuadrature { nodes, order })
    }

    pub fn nodes(&self) -> &[TauNode] {
        &self.nodes
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn min_shift(&self) -> f64 {
        self.nodes.iter().map(|n| n.shift).fold(f64::INFINITY, f64::min)
    }

    /// `sum_k w_k g(D_k)`.
    pub fn average(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().map(|n| n.weight * g(n.shift)).sum()
    }

    /// `integral_0^1 (2 (a s + D(tau)))^-1 dtau` for effective time `a s`, the
    /// coefficient of the resonant cubic term. `a` is the average dispersion.
    pub fn resonant_kernel(&self, s: f64, d_av: f64) -> Result<f64> {
        let mut acc = 0.0;
        for n in &self.nodes {
            let den = d_av * s + n.shift;
            if den <= 0.0 {
                return Err(Error::NonPositiveDenominator(den));
            }
            acc += n.weight / (2.0 * den);
        }
        Ok(acc)
    }
}

/// Test oracle for tent-shaped `D`: by the change of variables `a = D(tau)` on each
/// linear branch, `integral_0^1 g(D(tau)) dtau = (1/D_max) integral_0^D_max g(a) da`.
/// Returns composite-Simpson nodes in `a` with weights summing to one, so vector-valued
/// integrands can reuse them.
pub fn tent_reduction_rule(profile: &DispersionProfile, panels: usize) -> Result<Vec<(f64, f64)>> {
    let peak = profile.big_d_peak();
    if !(peak > 0.0) {
        return Err(Error::InvalidProfile(
            "tent reduction needs D rising to a positive peak".into(),
        ));
    }
    let panels = panels.max(1) * 2;
    let h = peak / panels as f64;
    Ok((0..=panels)
        .map(|i| {
            let w = if i == 0 || i == panels {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (i as f64 * h, w * h / 3.0 / peak)
        })
        .collect())
}

pub fn tent_reduction_oracle(
    profile: &DispersionProfile,
    panels: usize,
    g: impl Fn(f64) -> f64,
) -> Result<f64> {
    Ok(tent_reduction_rule(profile, panels)?
        .into_iter()
        .map(|(a, w)| w * g(a))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_profile_values() {
        let p = DispersionProfile::default();
        assert_eq!(p.d_av(), 1.0);
        assert_eq!(p.d0(0.1), 2.0);
        assert_eq!(p.d0(0.9), -2.0);
        assert_eq!(p.big_d(0.0).unwrap(), 0.0);
        assert_eq!(p.big_d(1.0).unwrap(), 0.0);
        assert_eq!(p.big_d(0.5).unwrap(), 1.0);
        assert!(matches!(p.big_d(1.5), Err(Error::TauOutOfRange(_))));
        assert!(p.big_d(-0.01).is_err());
    }

    #[test]
    fn rejects_zero_average() {
        assert!(DispersionProfile::new(1.0, 1.0, 0.5, 1.0).is_err());
        assert!(DispersionProfile::new(3.0, 1.0, 1.0, 1.0).is_err());
        assert!(DispersionProfile::new(f64::NAN, 1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn d_is_continuous_and_peaks_at_t_plus() {
        let p = DispersionProfile::new(4.0, 0.5, 0.3, 1.0).unwrap();
        let mut max: f64 = 0.0;
        let mut prev = 0.0;
        for i in 0..=10_000 {
            let tau = i as f64 / 10_000.0;
            let d = p.big_d(tau).unwrap();
            assert!((d - prev).abs() < 1e-3, "jump at {tau}");
            prev = d;
            max = max.max(d.abs());
        }
        assert_relative_eq!(max, p.big_d_peak().abs(), max_relative = 1e-12);
        // mean-zero d0 integrates to zero over a period
        assert!(p.big_d(1.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [2usize, 5, 16, 32] {
            let rule = gauss_legendre(n);
            let deg = 2 * n - 1;
            let got: f64 = rule.iter().map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((got - exact).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn midpoint_fallback() {
        let q = TauQuadrature::build(&DispersionProfile::default(), 1).unwrap();
        let n = q.nodes();
        assert_eq!(n.len(), 2);
        assert_relative_eq!(n[0].tau, 0.25);
        assert_relative_eq!(n[1].tau, 0.75);
        assert_relative_eq!(n[0].weight, 0.5);
        assert_relative_eq!(n[0].shift, 0.5);
        assert_relative_eq!(n[1].shift, 0.5);
    }

    #[test]
    fn weights_sum_to_one_and_shifts_nonnegative() {
        let q = TauQuadrature::build(&DispersionProfile::default(), 16).unwrap();
        let total: f64 = q.nodes().iter().map(|n| n.weight).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!(q.min_shift() >= 0.0);
    }

    #[test]
    fn average_of_d_is_one_half() {
        let q = TauQuadrature::build(&DispersionProfile::default(), 16).unwrap();
        assert_relative_eq!(q.average(|d| d), 0.5, max_relative = 1e-14);
    }

    #[test]
    fn tent_oracle_values() {
        let p = DispersionProfile::default();
        assert_relative_eq!(tent_reduction_oracle(&p, 10, |_| 1.0).unwrap(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(tent_reduction_oracle(&p, 10, |a| a).unwrap(), 0.5, max_relative = 1e-14);
        assert_relative_eq!(
            tent_reduction_oracle(&p, 10, |a| a * a).unwrap(),
            1.0 / 3.0,
            max_relative = 1e-14
        );
        let inverted = DispersionProfile::new(0.5, -3.0, 0.5, 1.0).unwrap();
        assert!(tent_reduction_oracle(&inverted, 10, |a| a).is_err());
    }

    #[test]
    fn quadrature_matches_tent_oracle_for_smooth_g() {
        for p in [
            DispersionProfile::default(),
            DispersionProfile::new(5.0, 0.5, 0.3, 1.0).unwrap(),
        ] {
            let q = TauQuadrature::build(&p, 16).unwrap();
            let g = |a: f64| (1.3 * a).cos() / (1.0 + a);
            let oracle = tent_reduction_oracle(&p, 2000, g).unwrap();
            assert_relative_eq!(q.average(g), oracle, max_relative = 1e-10);
        }
    }

    #[test]
    fn orders_agree_on_smooth_g() {
        let p = DispersionProfile::default();
        let g = |a: f64| (2.0 * a).sin() + (-a).exp();
        let lo = TauQuadrature::build(&p, 8).unwrap().average(g);
        let hi = TauQuadrature::build(&p, 16).unwrap().average(g);
        assert_relative_eq!(lo, hi, max_relative = 1e-10);
    }

    #[test]
    fn resonant_kernel_closed_form() {
        // tent D = 2 tau / 2 (1 - tau): integral of 1/(2(s+D)) is log(1 + 1/s) / 2
        let q = TauQuadrature::build(&DispersionProfile::default(), 16).unwrap();
        for s in [1.0f64, 2.0, 10.0, 300.0] {
            let exact = 0.5 * (1.0 + 1.0 / s).ln();
            assert_relative_eq!(q.resonant_kernel(s, 1.0).unwrap(), exact, max_relative = 1e-12);
            assert!(exact >= 1.0 / (2.0 * (s + 1.0)) && exact <= 1.0 / (2.0 * s));
        }
        let neg = DispersionProfile::new(0.5, -3.0, 0.5, 1.0).unwrap();
        let qn = TauQuadrature::build(&neg, 4).unwrap();
        assert!(qn.min_shift() < 0.0);
        assert!(matches!(
            qn.resonant_kernel(0.1, neg.d_av()),
            Err(Error::NonPositiveDenominator(_))
        ));
    }

    #[test]
    fn unmanaged_profile_has_zero_shift() {
        let p = DispersionProfile::unmanaged(1.0, 1.0).unwrap();
        assert!(p.is_unmanaged());
        assert_eq!(p.d_av(), 1.0);
        let q = TauQuadrature::build(&p, 4).unwrap();
        assert!(q.nodes().iter().all(|n| n.shift == 0.0));
    }
}
