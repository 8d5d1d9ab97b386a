//! Strang split-step solver for the standard cubic equation
//! `i u_t + d_av u_xx = c |u|^2 u`, kept independent of the averaged nonlinearity so
//! that it can cross-check the main integrator when the dispersion is unmanaged.

use crate::config::{Scheme, SimConfig};
use crate::error::{Error, Result};
use crate::grid::{Field, Space, C64};
use crate::integrator::{Simulation, Trajectory};
use crate::propagator::apply_free_multiplier;

/// Half linear step, exact nonlinear rotation `u exp(-i c |u|^2 dt)`, half linear step.
pub fn strang_step(u: &Field, dt: f64, c: f64, d_av: f64) -> Result<Field> {
    u.ensure_space(Space::Position)?;
    if !(dt > 0.0) {
        return Err(Error::Config(format!("step {dt} must be positive")));
    }
    let grid = u.grid();
    let mut buf = u.forward_transform()?.into_values();
    apply_free_multiplier(grid, &mut buf, 0.5 * d_av * dt);
    grid.inverse_in_place(&mut buf);
    if c != 0.0 {
        for v in buf.iter_mut() {
            *v *= C64::from_polar(1.0, -c * v.norm_sqr() * dt);
        }
    }
    grid.forward_in_place(&mut buf);
    apply_free_multiplier(grid, &mut buf, 0.5 * d_av * dt);
    grid.inverse_in_place(&mut buf);
    let out = Field::from_raw(grid.clone(), buf, Space::Position);
    out.ensure_finite()?;
    Ok(out)
}

/// `integrator::run` with the split-step scheme; the profile must be unmanaged.
pub fn run_oracle(config: &SimConfig) -> Result<Trajectory> {
    let cfg = SimConfig {
        scheme: Scheme::Strang,
        ..config.clone()
    };
    Simulation::new(cfg)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, NormKind};
    use crate::propagator::free_evolve;

    fn bump(g: &std::sync::Arc<Grid>) -> Field {
        Field::from_position_fn(g.clone(), |x| {
            C64::new(0.5 * (-x * x).exp(), 0.2 * x * (-x * x).exp())
        })
        .unwrap()
    }

    #[test]
    fn linear_limit_is_free_flow() {
        let g = Grid::new(256, 30.0).unwrap();
        let u = bump(&g);
        let a = strang_step(&u, 0.3, 0.0, 1.0).unwrap();
        let b = free_evolve(&u, 0.3).unwrap();
        assert!(a.sup_distance(&b) < 1e-14);
    }

    #[test]
    fn zero_and_mass() {
        let g = Grid::new(256, 30.0).unwrap();
        let z = Field::zeros(g.clone(), Space::Position);
        assert_eq!(strang_step(&z, 0.1, 1.0, 1.0).unwrap().norm(NormKind::Linf).unwrap(), 0.0);
        let u = bump(&g);
        let v = strang_step(&u, 0.1, 1.0, 1.0).unwrap();
        let (a, b) = (u.norm(NormKind::L2).unwrap(), v.norm(NormKind::L2).unwrap());
        assert!((a - b).abs() < 1e-14 * a);
        assert!(strang_step(&u, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn second_order() {
        let g = Grid::new(256, 30.0).unwrap();
        let u = bump(&g).scaled(C64::new(3.0, 0.0));
        let solve = |m: usize| {
            let mut v = u.clone();
            for _ in 0..m {
                v = strang_step(&v, 1.0 / m as f64, 1.0, 1.0).unwrap();
            }
            v
        };
        let (a, b, c) = (solve(20), solve(40), solve(80));
        let order = (a.sup_distance(&b) / b.sup_distance(&c)).log2();
        assert!((order - 2.0).abs() < 0.1, "{order}");
    }
}
