//! Named identity and convergence checks behind `dmnls verify`.

use std::sync::Arc;
use std::time::Instant;

use crate::config::{Scheme, SimConfig};
use crate::dispersion::{tent_reduction_oracle, DispersionProfile, TauQuadrature};
use crate::error::Result;
use crate::grid::{sup_distance, sup_norm, Field, Grid, NormKind, Space, C64};
use crate::integrator::Simulation;
use crate::nonlinearity::{gauge_covariance_check, AveragedNonlinearity};
use crate::observables::position_from_profile;
use crate::propagator::{factorized_evolve, free_evolve, galilean_j, multiply_by_x};
use crate::scattering::{fit_power_law, kernel_bound_constant, PhaseAccumulator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Fast,
    Full,
}

/// Deliberate defects that the suite must notice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Forward transform with the opposite kernel sign.
    ForwardSign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Outcome = std::result::Result<String, String>;

struct Ctx {
    fault: Option<Fault>,
}

impl Ctx {
    fn grid(&self, n: usize, length: f64) -> Arc<Grid> {
        match self.fault {
            None => Grid::new(n, length),
            Some(Fault::ForwardSign) => Grid::with_broken_forward_sign(n, length),
        }
        .expect("verification grids are valid")
    }
}

fn judge(value: f64, tol: f64, what: &str) -> Outcome {
    let msg = format!("{what} = {value:.3e} (tol {tol:.0e})");
    if value <= tol {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn both(a: Outcome, b: Outcome) -> Outcome {
    match (a, b) {
        (Ok(x), Ok(y)) => Ok(format!("{x}; {y}")),
        (Err(x), _) | (_, Err(x)) => Err(x),
    }
}

fn lift(r: Result<Outcome>) -> Outcome {
    r.unwrap_or_else(|e| Err(e.to_string()))
}

/// `exp(-x^2)` boosted by `exp(i k x)` and evolved by `i u_t + u_xx = 0`.
pub fn boosted_gaussian(x: f64, t: f64, k: f64) -> C64 {
    let z = C64::new(1.0, 4.0 * t);
    let y = x - 2.0 * k * t;
    z.sqrt().inv() * (-(y * y) / z).exp() * C64::from_polar(1.0, k * x - k * k * t)
}

fn boosted(ctx: &Ctx, n: usize, length: f64, k: f64) -> Result<Field> {
    Field::from_position_fn(ctx.grid(n, length), |x| boosted_gaussian(x, 0.0, k))
}

fn parseval(ctx: &Ctx) -> Outcome {
    lift((|| {
        let u = boosted(ctx, 512, 40.0, 1.3)?;
        let a = u.norm(NormKind::L2)?;
        let b = u.forward_transform()?.norm(NormKind::L2)?;
        Ok(judge((a - b).abs() / a, 1e-12, "relative norm gap"))
    })())
}

fn round_trip(ctx: &Ctx) -> Outcome {
    lift((|| {
        let u = boosted(ctx, 512, 40.0, 1.3)?;
        let back = u.forward_transform()?.inverse_transform()?;
        Ok(judge(back.sup_distance(&u), 1e-13, "sup error"))
    })())
}

fn spectral_derivative(ctx: &Ctx) -> Outcome {
    lift((|| {
        let g = ctx.grid(512, 40.0);
        let u = Field::from_position_fn(g.clone(), |x| boosted_gaussian(x, 0.0, 1.3))?;
        let exact = Field::from_position_fn(g, |x| {
            boosted_gaussian(x, 0.0, 1.3) * C64::new(-2.0 * x, 1.3)
        })?;
        Ok(judge(u.spectral_derivative()?.sup_distance(&exact), 1e-10, "sup error"))
    })())
}

fn gaussian_closed_form(ctx: &Ctx) -> Outcome {
    lift((|| {
        let g = ctx.grid(2048, 120.0);
        let u = Field::from_position_fn(g.clone(), |x| boosted_gaussian(x, 0.0, 1.5))?;
        let t = 2.0;
        let exact = Field::from_position_fn(g, |x| boosted_gaussian(x, t, 1.5))?;
        Ok(judge(free_evolve(&u, t)?.sup_distance(&exact), 1e-10, "sup error at t = 2"))
    })())
}

fn group_property(ctx: &Ctx) -> Outcome {
    lift((|| {
        let u = boosted(ctx, 1024, 80.0, -0.7)?;
        let a = free_evolve(&free_evolve(&u, 0.8)?, 1.7)?;
        let b = free_evolve(&u, 2.5)?;
        let unit = (b.norm(NormKind::L2)? - u.norm(NormKind::L2)?).abs() / u.norm(NormKind::L2)?;
        Ok(both(
            judge(a.sup_distance(&b), 1e-12, "composition error"),
            judge(unit, 1e-12, "unitarity gap"),
        ))
    })())
}

fn j_identity(ctx: &Ctx) -> Outcome {
    lift((|| {
        let g = ctx.grid(4096, 320.0);
        let u0 = Field::from_position_fn(g, |x| boosted_gaussian(x, 0.0, 0.8))?;
        let t = 5.0;
        let u = free_evolve(&u0, t)?;
        let j = galilean_j(&u, t)?.norm(NormKind::L2)?;
        let xf = multiply_by_x(&u0)?.norm(NormKind::L2)?;
        let conj = free_evolve(&multiply_by_x(&u0)?, t)?;
        let pointwise = galilean_j(&u, t)?.sup_distance(&conj);
        Ok(both(
            judge((j - xf).abs() / xf, 1e-6, "| ||J u|| - ||x f|| | / ||x f||"),
            judge(pointwise, 1e-8, "sup |J u - e^{itD} x f|"),
        ))
    })())
}

fn factorization(ctx: &Ctx) -> Outcome {
    lift((|| {
        let u0 = boosted(ctx, 4096, 240.0, 1.0)?;
        let t = 5.0;
        let fac = factorized_evolve(&u0, t, 4)?;
        let direct = free_evolve(&u0, t)?;
        Ok(judge(fac.field.sup_distance(&direct), 1e-4, "sup |MDFM f - e^{itD} f| at t = 5"))
    })())
}

/// `J(|u|^2 u) = 2 |u|^2 J u - u^2 conj(J u)`.
fn chain_rule(ctx: &Ctx) -> Outcome {
    lift((|| {
        let g = ctx.grid(4096, 160.0);
        let u0 = Field::from_position_fn(g.clone(), |x| boosted_gaussian(x, 0.0, 0.5))?;
        let t = 2.0;
        let u = free_evolve(&u0, t)?;
        let cube: Vec<C64> = u.values().iter().map(|v| v * v.norm_sqr()).collect();
        let lhs = galilean_j(&Field::new(g.clone(), cube, Space::Position)?, t)?;
        let ju = galilean_j(&u, t)?;
        let rhs: Vec<C64> = u
            .values()
            .iter()
            .zip(ju.values())
            .map(|(v, j)| 2.0 * v.norm_sqr() * j - v * v * j.conj())
            .collect();
        let scale = sup_norm(lhs.values()).max(f64::MIN_POSITIVE);
        Ok(judge(sup_distance(lhs.values(), &rhs) / scale, 1e-6, "relative residual"))
    })())
}

fn kernel_bound(_: &Ctx) -> Outcome {
    lift((|| {
        let q = TauQuadrature::build(&DispersionProfile::default(), 16)?;
        let (c, _) = kernel_bound_constant(&q, 1.0)?;
        Ok(if c.is_finite() && c < 1.0 {
            Ok(format!("C = {c:.4} over s = 1..1024"))
        } else {
            Err(format!("C = {c}"))
        })
    })())
}

fn tent_reduction(_: &Ctx) -> Outcome {
    lift((|| {
        let p = DispersionProfile::default();
        let q = TauQuadrature::build(&p, 16)?;
        let mut worst = 0.0f64;
        for s in [1.0, 2.0, 10.0] {
            let a = q.resonant_kernel(s, 1.0)?;
            let b = tent_reduction_oracle(&p, 4000, |d| 0.5 / (s + d))?;
            worst = worst.max((a - b).abs());
        }
        Ok(judge(worst, 1e-10, "kernel vs tent oracle"))
    })())
}

fn theta_closed_form(_: &Ctx) -> Outcome {
    lift((|| {
        let q = TauQuadrature::build(&DispersionProfile::default(), 16)?;
        let a = 0.4;
        let m = vec![a; 3];
        let mut acc = PhaseAccumulator::new(3);
        let h = 0.05;
        for k in 0..(49.0f64 / h).round() as usize {
            acc.accumulate_theta(&q, 1.0, 1.0, 1.0 + k as f64 * h, h, [&m, &m, &m])?;
        }
        let t: f64 = 50.0;
        let exact = a * 0.5 * ((t + 1.0) * (t + 1.0).ln() - t * t.ln() - 2.0 * 2f64.ln());
        Ok(judge((acc.theta()[0] - exact).abs(), 1e-8, "Theta error at t = 50"))
    })())
}

fn gauge_covariance(ctx: &Ctx) -> Outcome {
    lift((|| {
        let g = ctx.grid(256, 30.0);
        let q = TauQuadrature::build(&DispersionProfile::default(), 8)?;
        let nl = AveragedNonlinearity::new(g.clone(), &q, 1.0, true);
        let u = Field::from_position_fn(g, |x| boosted_gaussian(x, 0.0, 0.4))?;
        Ok(judge(gauge_covariance_check(&nl, &u, 0.9)?, 1e-14, "||N[e^{ia}u] - e^{ia}N[u]||"))
    })())
}

fn mass_orthogonality(ctx: &Ctx) -> Outcome {
    lift((|| {
        let g = ctx.grid(512, 40.0);
        let q = TauQuadrature::build(&DispersionProfile::default(), 8)?;
        let nl = AveragedNonlinearity::new(g.clone(), &q, 1.0, true);
        let u = Field::from_position_fn(g.clone(), |x| {
            boosted_gaussian(x, 0.0, 0.4) + boosted_gaussian(x - 2.0, 0.0, -1.0)
        })?;
        let n = nl.apply(&u)?;
        let inner: C64 = u
            .values()
            .iter()
            .zip(n.values())
            .map(|(a, b)| a.conj() * b)
            .sum::<C64>()
            * g.dx();
        Ok(judge(inner.im.abs() / inner.norm(), 1e-13, "|Im <u, N u>| / |<u, N u>|"))
    })())
}

fn power_fit(_: &Ctx) -> Outcome {
    lift((|| {
        let s: Vec<(f64, f64)> = (0..10)
            .map(|k| {
                let t = 25.0 * 2f64.powf(k as f64 / 3.0);
                (t, t.powf(-0.55) * if k % 2 == 0 { 1.01 } else { 0.99 })
            })
            .collect();
        let fit = fit_power_law(&s)?;
        Ok(judge((fit.exponent + 0.55).abs(), 0.01, "exponent error on noisy t^-0.55"))
    })())
}

fn small_run_config(eps: f64, t_end: f64, dt: f64) -> SimConfig {
    SimConfig {
        n: 1024,
        length: 320.0,
        epsilon: eps,
        t_end,
        dt,
        quad_order: 16,
        snapshots: Some(vec![t_end]),
        ..SimConfig::default()
    }
}

fn final_profile(sim: &Simulation, t: f64, dt: f64) -> Result<Field> {
    let mut st = sim.prepare_initial()?;
    sim.advance(&mut st, t, dt)?;
    Ok(st.f_hat)
}

/// Observed order `log2(e(h, h/2) / e(h/2, h/4))` of the final profile at `t`.
pub fn observed_order(cfg: &SimConfig, t: f64, h: f64) -> Result<(f64, f64, f64)> {
    let sim = Simulation::new(cfg.clone())?;
    let a = final_profile(&sim, t, h)?;
    let b = final_profile(&sim, t, h / 2.0)?;
    let c = final_profile(&sim, t, h / 4.0)?;
    let e1 = a.sup_distance(&b);
    let e2 = b.sup_distance(&c);
    Ok(((e1 / e2).log2(), e1, e2))
}

fn rk4_order(_: &Ctx) -> Outcome {
    lift((|| {
        let cfg = small_run_config(0.2, 10.0, 0.2);
        let (p, e1, e2) = observed_order(&cfg, 10.0, 0.2)?;
        let msg = format!("order {p:.3} (errors {e1:.2e}, {e2:.2e}; dt = 0.2, 0.1, 0.05)");
        Ok(if p >= 3.8 { Ok(msg) } else { Err(msg) })
    })())
}

fn strang_order(_: &Ctx) -> Outcome {
    lift((|| {
        let cfg = SimConfig {
            profile: DispersionProfile::unmanaged(1.0, 1.0)?,
            quad_order: 1,
            scheme: Scheme::Strang,
            ..small_run_config(0.2, 10.0, 0.1)
        };
        let (p, e1, e2) = observed_order(&cfg, 10.0, 0.1)?;
        let msg = format!("order {p:.3} (errors {e1:.2e}, {e2:.2e})");
        Ok(if p >= 1.8 { Ok(msg) } else { Err(msg) })
    })())
}

/// Unmanaged dispersion: the averaged RK4 integrator against the split-step oracle.
pub fn oracle_gap(eps: f64, t: f64, dt: f64) -> Result<f64> {
    let base = SimConfig {
        profile: DispersionProfile::unmanaged(1.0, 1.0)?,
        quad_order: 1,
        ..small_run_config(eps, t, dt)
    };
    let main = Simulation::new(base.clone())?;
    let oracle = Simulation::new(SimConfig {
        scheme: Scheme::Strang,
        ..base
    })?;
    let a = position_from_profile(&final_profile(&main, t, dt)?, t)?;
    let b = position_from_profile(&final_profile(&oracle, t, dt)?, t)?;
    Ok(a.sup_distance(&b))
}

fn oracle_equivalence(_: &Ctx) -> Outcome {
    lift(oracle_gap(0.1, 10.0, 0.01).map(|gap| judge(gap, 1e-6, "sup |u_rk4 - u_strang| at t = 10")))
}

type Check = (&'static str, fn(&Ctx) -> Outcome);

const FAST: [Check; 14] = [
    ("parseval", parseval),
    ("round_trip", round_trip),
    ("spectral_derivative", spectral_derivative),
    ("gaussian_closed_form", gaussian_closed_form),
    ("group_property", group_property),
    ("j_identity", j_identity),
    ("factorization_mdfm", factorization),
    ("chain_rule", chain_rule),
    ("kernel_bound", kernel_bound),
    ("tent_reduction", tent_reduction),
    ("theta_closed_form", theta_closed_form),
    ("gauge_covariance", gauge_covariance),
    ("mass_orthogonality", mass_orthogonality),
    ("power_fit", power_fit),
];

const FULL: [Check; 3] = [
    ("rk4_self_convergence", rk4_order),
    ("strang_self_convergence", strang_order),
    ("oracle_equivalence", oracle_equivalence),
];

pub fn run_suite(level: Level, fault: Option<Fault>) -> Vec<CheckResult> {
    let ctx = Ctx { fault };
    let mut checks: Vec<Check> = FAST.to_vec();
    if level == Level::Full {
        checks.extend(FULL);
    }
    checks
        .into_iter()
        .map(|(name, f)| {
            let start = Instant::now();
            let outcome = f(&ctx);
            let seconds = start.elapsed().as_secs_f64();
            let (passed, detail) = match outcome {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckResult {
                name,
                passed,
                detail,
                seconds,
            }
        })
        .collect()
}
