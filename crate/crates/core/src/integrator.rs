//! Time stepping of the profile `f(t) = exp(-i d_av t Laplacian) u(t)`.
//!
//! In frequency variables `d/dt f_hat = -i c sum_k w_k exp(i(s + D_k) xi^2) F[|v_k|^2 v_k]`
//! with `s = d_av t` and `v_k = exp(i(s + D_k) Laplacian) f`. The linear flow is
//! absorbed into the phases, so classical RK4 is limited only by the nonlinear time
//! scale.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::{InitialShape, Scheme, SimConfig};
use crate::dispersion::TauQuadrature;
use crate::error::{Error, Result};
use crate::grid::{all_finite, sobolev_h1_of_spectrum, sup_distance, sup_norm, Field, FieldCsv, Grid, NormKind, Space, C64};
use crate::nonlinearity::AveragedNonlinearity;
use crate::observables::{boundary_mass_fraction, position_from_profile, ObservablesRecord, Observer};
use crate::oracle;
use crate::scattering::PhaseAccumulator;

/// Outer-band mass share above which a run is invalid.
pub const BOUNDARY_TOL: f64 = 1e-6;
/// `||u||_{H^1} > H1_BLOWUP_FACTOR * epsilon` ends the run.
pub const H1_BLOWUP_FACTOR: f64 = 1e3;
pub const MASS_DRIFT_TOL: f64 = 1e-8;
pub const ENERGY_DRIFT_TOL: f64 = 1e-6;
pub const RK4_MIN_ORDER: f64 = 3.5;
pub const STRANG_MIN_ORDER: f64 = 1.8;

const BOUNDARY_CHECK_EVERY: u64 = 10;
const RING_CAPACITY: usize = 32;

/// Stored state at one output time; `u` is rebuilt on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub f_hat: Field,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    NonFinite { t: f64 },
    BoundaryBreach { t: f64, fraction: f64 },
    H1Blowup { t: f64, h1: f64 },
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }

    pub fn describe(&self) -> String {
        match self {
            RunStatus::Completed => "completed".into(),
            RunStatus::NonFinite { t } => format!("non-finite values at t = {t}"),
            RunStatus::BoundaryBreach { t, fraction } => format!(
                "boundary mass fraction {fraction:e} exceeds {BOUNDARY_TOL:e} at t = {t}"
            ),
            RunStatus::H1Blowup { t, h1 } => {
                format!("H1 norm {h1:e} left the small-data regime at t = {t}")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostic {
    pub step: u64,
    pub t: f64,
    pub mass: f64,
    pub sup_f_hat: f64,
}

pub struct SimState {
    pub t: f64,
    pub f_hat: Field,
    pub theta: PhaseAccumulator,
    pub step_count: u64,
    pub diagnostics: VecDeque<StepDiagnostic>,
}

impl SimState {
    fn push_diagnostic(&mut self) {
        if self.diagnostics.len() == RING_CAPACITY {
            self.diagnostics.pop_front();
        }
        let v = self.f_hat.values();
        self.diagnostics.push_back(StepDiagnostic {
            step: self.step_count,
            t: self.t,
            mass: v.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.f_hat.grid().dxi(),
            sup_f_hat: sup_norm(v),
        });
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub records: Vec<ObservablesRecord>,
    pub status: RunStatus,
    pub steps: u64,
    pub boundary_max: f64,
    pub diagnostics: Vec<StepDiagnostic>,
    pub warnings: Vec<String>,
}

/// Richardson self-convergence over a short horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfTest {
    pub horizon: f64,
    pub h: f64,
    pub err_coarse: f64,
    pub err_fine: f64,
    /// `None` when both differences sit at the roundoff floor.
    pub order: Option<f64>,
}

impl SelfTest {
    pub fn passes(&self, min_order: f64) -> bool {
        self.order.is_none_or(|p| p >= min_order)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub boundary_max: f64,
    pub self_test: Option<SelfTest>,
    pub mass: bool,
    pub energy: bool,
    pub boundary: bool,
    pub dt_order: bool,
}

impl Certification {
    pub fn certified(&self) -> bool {
        self.mass && self.energy && self.boundary && self.dt_order
    }
}

fn relative_drift(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let Some(&first) = v.first() else { return 0.0 };
    let worst = v.iter().map(|x| (x - first).abs()).fold(0.0, f64::max);
    if first == 0.0 {
        worst
    } else {
        worst / first.abs()
    }
}

/// Splits `[a, b]` into the fewest equal steps no longer than `dt`.
pub fn segment_steps(a: f64, b: f64, dt: f64) -> (usize, f64) {
    let m = (((b - a) / dt) - 1e-9).ceil().max(1.0) as usize;
    (m, (b - a) / m as f64)
}

pub struct Simulation {
    config: SimConfig,
    grid: Arc<Grid>,
    quadrature: TauQuadrature,
    nl: Arc<AveragedNonlinearity>,
    observer: Observer,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Simulation> {
        Self::with_grid(config.clone(), Grid::new(config.n, config.length)?)
    }

    pub fn with_grid(config: SimConfig, grid: Arc<Grid>) -> Result<Simulation> {
        config.validate()?;
        let quadrature = config.quadrature()?;
        let nl = Arc::new(AveragedNonlinearity::new(
            grid.clone(),
            &quadrature,
            config.profile.c(),
            config.dealias,
        ));
        let observer = Observer::new(nl.clone(), config.profile.d_av());
        Ok(Simulation {
            config,
            grid,
            quadrature,
            nl,
            observer,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn quadrature(&self) -> &TauQuadrature {
        &self.quadrature
    }

    pub fn observer(&self) -> &Observer {
        &self.observer
    }

    fn d_av(&self) -> f64 {
        self.config.profile.d_av()
    }

    fn c(&self) -> f64 {
        self.config.profile.c()
    }

    /// `u0` scaled to `||u0||_{H^{1,1}} = epsilon` and rotated by `initial.phase`.
    pub fn initial_field(&self) -> Result<Field> {
        let g = &self.grid;
        let shape = match &self.config.shape {
            InitialShape::Gaussian => {
                Field::from_position_fn(g.clone(), |x| C64::new((-x * x).exp(), 0.0))?
            }
            InitialShape::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let f = FieldCsv::parse(&text)?.into_field(g)?;
                match f.space() {
                    Space::Position => f,
                    Space::Frequency => f.inverse_transform()?,
                }
            }
        };
        let norm = shape.norm(NormKind::H11)?;
        if self.config.epsilon == 0.0 {
            return Ok(Field::zeros(g.clone(), Space::Position));
        }
        if norm == 0.0 {
            return Err(Error::Config("initial profile is identically zero".into()));
        }
        Ok(shape.scaled(C64::from_polar(self.config.epsilon / norm, self.config.phase)))
    }

    pub fn prepare_initial(&self) -> Result<SimState> {
        let u0 = self.initial_field()?;
        let mut state = SimState {
            t: 0.0,
            f_hat: u0.forward_transform()?,
            theta: PhaseAccumulator::new(self.grid.n()),
            step_count: 0,
            diagnostics: VecDeque::with_capacity(RING_CAPACITY),
        };
        state.push_diagnostic();
        Ok(state)
    }

    fn rhs_raw(&self, f_hat: &[C64], t: f64) -> Vec<C64> {
        let mut out = self.nl.profile_term(f_hat, self.d_av() * t);
        for v in out.iter_mut() {
            *v = C64::new(v.im, -v.re);
        }
        out
    }

    /// `d/dt f_hat` at time `t`.
    pub fn rhs(&self, f_hat: &Field, t: f64) -> Result<Field> {
        f_hat.ensure_space(Space::Frequency)?;
        let out = self.rhs_raw(f_hat.values(), t);
        Field::new(self.grid.clone(), out, Space::Frequency)
    }

    /// One classical RK4 step on `f_hat`, with the Simpson update of `Theta` from the
    /// stage values when the step lies in `t >= 1`.
    pub fn step_rk4(&self, state: &mut SimState, h: f64) -> Result<()> {
        let t = state.t;
        let y = state.f_hat.values();
        let axpy = |a: &[C64], k: &[C64], s: f64| -> Vec<C64> {
            a.iter().zip(k).map(|(a, k)| a + k * s).collect()
        };
        let k1 = self.rhs_raw(y, t);
        let y2 = axpy(y, &k1, 0.5 * h);
        let k2 = self.rhs_raw(&y2, t + 0.5 * h);
        let y3 = axpy(y, &k2, 0.5 * h);
        let k3 = self.rhs_raw(&y3, t + 0.5 * h);
        let y4 = axpy(y, &k3, h);
        let k4 = self.rhs_raw(&y4, t + h);
        let next: Vec<C64> = (0..y.len())
            .map(|j| y[j] + (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) * (h / 6.0))
            .collect();
        if !all_finite(&next) {
            return Err(Error::NonFinite("profile after RK4 step"));
        }
        if t >= 1.0 - 1e-12 {
            let m0: Vec<f64> = y.iter().map(|v| v.norm_sqr()).collect();
            let mm: Vec<f64> = y2
                .iter()
                .zip(&y3)
                .map(|(a, b)| 0.5 * (a.norm_sqr() + b.norm_sqr()))
                .collect();
            let m1: Vec<f64> = next.iter().map(|v| v.norm_sqr()).collect();
            state
                .theta
                .accumulate_theta(&self.quadrature, self.d_av(), self.c(), t, h, [&m0, &mm, &m1])?;
        }
        state.f_hat = Field::new(self.grid.clone(), next, Space::Frequency)?;
        state.t = t + h;
        state.step_count += 1;
        state.push_diagnostic();
        Ok(())
    }

    /// One Strang step of the unmanaged equation, carried out on `u` and mapped back to
    /// the profile. `Theta` uses the trapezoid rule.
    pub fn step_strang(&self, state: &mut SimState, h: f64) -> Result<()> {
        let t = state.t;
        let s0 = self.d_av() * t;
        let u = position_from_profile(&state.f_hat, s0)?;
        let u = oracle::strang_step(&u, h, self.c(), self.d_av())?;
        let mut spec = u.forward_transform()?.into_values();
        crate::propagator::apply_free_multiplier(&self.grid, &mut spec, -self.d_av() * (t + h));
        if t >= 1.0 - 1e-12 {
            let m0: Vec<f64> = state.f_hat.values().iter().map(|v| v.norm_sqr()).collect();
            let m1: Vec<f64> = spec.iter().map(|v| v.norm_sqr()).collect();
            let mm: Vec<f64> = m0.iter().zip(&m1).map(|(a, b)| 0.5 * (a + b)).collect();
            state
                .theta
                .accumulate_theta(&self.quadrature, self.d_av(), self.c(), t, h, [&m0, &mm, &m1])?;
        }
        state.f_hat = Field::new(self.grid.clone(), spec, Space::Frequency)?;
        state.t = t + h;
        state.step_count += 1;
        state.push_diagnostic();
        Ok(())
    }

    pub fn step(&self, state: &mut SimState, h: f64) -> Result<()> {
        match self.config.scheme {
            Scheme::Rk4 => self.step_rk4(state, h),
            Scheme::Strang => self.step_strang(state, h),
        }
    }

    /// Advances `state` to `t_target` with uniform steps no longer than `dt`.
    pub fn advance(&self, state: &mut SimState, t_target: f64, dt: f64) -> Result<()> {
        if t_target <= state.t {
            return Ok(());
        }
        let (m, h) = segment_steps(state.t, t_target, dt);
        for _ in 0..m {
            self.step(state, h)?;
        }
        state.t = t_target;
        Ok(())
    }

    fn snapshot(&self, state: &SimState) -> Snapshot {
        Snapshot {
            t: state.t,
            f_hat: state.f_hat.clone(),
            theta: state.theta.theta().to_vec(),
        }
    }

    /// Steps from 0 to `t_end`, landing exactly on every snapshot time and on `t = 1`,
    /// where `Theta` starts accumulating. Numerical aborts end the run with a status;
    /// `Err` is reserved for setup and analysis failures.
    pub fn run(&self) -> Result<Trajectory> {
        let cfg = &self.config;
        let mut warnings = Vec::new();
        if self.quadrature.min_shift() < 0.0 {
            warnings.push(
                "D takes negative values: Theta is not guaranteed to be monotone".to_string(),
            );
        }
        let schedule = cfg.snapshot_schedule();
        let mut stops = schedule.clone();
        if cfg.t_end > 1.0 {
            stops.push(1.0);
            stops.sort_by(f64::total_cmp);
            stops.dedup();
        }
        let mut state = self.prepare_initial()?;
        let mut snapshots = Vec::new();
        let mut records = Vec::new();
        let mut boundary_max = 0.0f64;
        let h1_limit = H1_BLOWUP_FACTOR * cfg.epsilon;
        let mut status = RunStatus::Completed;

        'outer: for &stop in &stops {
            if stop > state.t {
                let (m, h) = segment_steps(state.t, stop, cfg.dt);
                let t0 = state.t;
                for i in 0..m {
                    if let Err(e) = self.step(&mut state, h) {
                        match e {
                            Error::NonFinite(_) => {
                                status = RunStatus::NonFinite { t: state.t + h };
                                break 'outer;
                            }
                            other => return Err(other),
                        }
                    }
                    if i + 1 == m {
                        state.t = stop;
                    } else {
                        state.t = t0 + (i + 1) as f64 * h;
                    }
                    let h1 = sobolev_h1_of_spectrum(&self.grid, state.f_hat.values());
                    if cfg.epsilon > 0.0 && h1 > h1_limit {
                        status = RunStatus::H1Blowup { t: state.t, h1 };
                        break 'outer;
                    }
                    if state.step_count % BOUNDARY_CHECK_EVERY == 0 {
                        let u = position_from_profile(&state.f_hat, self.d_av() * state.t)?;
                        let frac = boundary_mass_fraction(&u);
                        boundary_max = boundary_max.max(frac);
                        if frac > BOUNDARY_TOL {
                            status = RunStatus::BoundaryBreach { t: state.t, fraction: frac };
                            break 'outer;
                        }
                    }
                }
            }
            if schedule.contains(&stop) {
                let rec = self.observer.record(&state.f_hat, state.t)?;
                boundary_max = boundary_max.max(rec.boundary_mass_fraction);
                snapshots.push(self.snapshot(&state));
                records.push(rec);
                if rec.boundary_mass_fraction > BOUNDARY_TOL {
                    status = RunStatus::BoundaryBreach {
                        t: state.t,
                        fraction: rec.boundary_mass_fraction,
                    };
                    break;
                }
            }
        }
        Ok(Trajectory {
            snapshots,
            records,
            status,
            steps: state.step_count,
            boundary_max,
            diagnostics: state.diagnostics.into_iter().collect(),
            warnings,
        })
    }

    /// Integrates from the initial state to `horizon` with `m` equal steps.
    fn solve_fixed(&self, horizon: f64, m: usize) -> Result<Vec<C64>> {
        let mut state = self.prepare_initial()?;
        let h = horizon / m as f64;
        for _ in 0..m {
            self.step(&mut state, h)?;
        }
        Ok(state.f_hat.into_values())
    }

    /// Richardson estimate `log2(|y_h - y_{h/2}| / |y_{h/2} - y_{h/4}|)` on
    /// `[0, min(t_end, 1)]`, starting from `h = dt` and coarsening while the finer
    /// difference is lost in roundoff.
    pub fn self_test(&self) -> Result<Option<SelfTest>> {
        let horizon = self.config.t_end.min(1.0);
        if horizon <= 0.0 {
            return Ok(None);
        }
        let (mut m, _) = segment_steps(0.0, horizon, self.config.dt);
        let mut cache: Vec<(usize, Vec<C64>)> = Vec::new();
        let mut solve = |m: usize| -> Result<Vec<C64>> {
            if let Some((_, y)) = cache.iter().find(|(k, _)| *k == m) {
                return Ok(y.clone());
            }
            let y = self.solve_fixed(horizon, m)?;
            cache.push((m, y.clone()));
            Ok(y)
        };
        loop {
            let y1 = solve(m)?;
            let y2 = solve(2 * m)?;
            let y4 = solve(4 * m)?;
            let e1 = sup_distance(&y1, &y2);
            let e2 = sup_distance(&y2, &y4);
            let floor = 1e-13 * sup_norm(&y4).max(f64::MIN_POSITIVE);
            if e2 < 30.0 * floor && m > 1 {
                m = m.div_ceil(2);
                continue;
            }
            let order = if e1 <= floor && e2 <= floor {
                None
            } else {
                Some((e1 / e2.max(f64::MIN_POSITIVE)).log2())
            };
            return Ok(Some(SelfTest {
                horizon,
                h: horizon / m as f64,
                err_coarse: e1,
                err_fine: e2,
                order,
            }));
        }
    }

    pub fn min_order(&self) -> f64 {
        match self.config.scheme {
            Scheme::Rk4 => RK4_MIN_ORDER,
            Scheme::Strang => STRANG_MIN_ORDER,
        }
    }

    pub fn certify(&self, traj: &Trajectory, self_test: Option<SelfTest>) -> Certification {
        let mass_drift = relative_drift(traj.records.iter().map(|r| r.mass));
        let energy_drift = relative_drift(traj.records.iter().map(|r| r.energy));
        let dt_order = if self.config.self_test {
            self_test.map_or(self.config.t_end == 0.0, |s| s.passes(self.min_order()))
        } else {
            false
        };
        Certification {
            mass_drift,
            energy_drift,
            boundary_max: traj.boundary_max,
            self_test,
            mass: mass_drift < MASS_DRIFT_TOL,
            energy: energy_drift < ENERGY_DRIFT_TOL,
            boundary: traj.boundary_max < BOUNDARY_TOL && traj.status.is_completed(),
            dt_order,
        }
    }
}
