//! Free Schrödinger group, its modulation–dilation factorization and the
//! Galilean operator.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{sup_norm, Field, Grid, NormKind, Space, C64};

/// Smallest time accepted by [`factorized_evolve`]; `(2it)^(-1/2)` is singular at 0.
pub const FACTORIZATION_T_MIN: f64 = 1e-3;

/// Below this coverage a lattice/time mismatch is an error, unless the sampled
/// profile has already decayed to nothing at the lattice edge.
pub const MIN_COVERAGE: f64 = 0.99;

const EDGE_NEGLIGIBLE: f64 = 1e-10;

/// Multiplies a natural-order spectrum by `exp(-i t xi^2)`.
pub fn apply_free_multiplier(grid: &Grid, spectrum: &mut [C64], t: f64) {
    for (v, &xi) in spectrum.iter_mut().zip(grid.xi()) {
        *v *= C64::from_polar(1.0, -t * xi * xi);
    }
}

/// `exp(i t Laplacian) f` as the Fourier multiplier `exp(-i t xi^2)`.
pub fn free_evolve(f: &Field, t: f64) -> Result<Field> {
    if !t.is_finite() {
        return Err(Error::NonFinite("evolution time"));
    }
    let mut spec = f.forward_transform()?.into_values();
    apply_free_multiplier(f.grid(), &mut spec, t);
    f.grid().inverse_in_place(&mut spec);
    let out = Field::from_raw(f.grid().clone(), spec, Space::Position);
    debug_assert!({
        let a = f.norm(NormKind::L2).unwrap_or(0.0);
        let b = out.norm(NormKind::L2).unwrap_or(0.0);
        (a - b).abs() <= 1e-10 * a.max(1e-300)
    });
    Ok(out)
}

/// Linear interpolation of lattice samples at `target`; `None` outside the lattice.
pub(crate) fn sample_linear(nodes: &[f64], values: &[C64], target: f64) -> Option<C64> {
    let n = nodes.len();
    let (lo, hi) = (nodes[0], nodes[n - 1]);
    if !(target >= lo && target <= hi) {
        return None;
    }
    let h = (hi - lo) / (n - 1) as f64;
    let pos = (target - lo) / h;
    let i = (pos.floor() as usize).min(n - 2);
    let w = pos - i as f64;
    Some(values[i] * (1.0 - w) + values[i + 1] * w)
}

/// Whether a profile sampled on a lattice is negligible at both lattice ends, so that
/// its extension by zero beyond the lattice is exact to roundoff.
pub(crate) fn negligible_at_edges(values: &[C64]) -> bool {
    let peak = sup_norm(values);
    if peak == 0.0 {
        return true;
    }
    let band = (values.len() / 64).max(1);
    let edge = values[..band]
        .iter()
        .chain(&values[values.len() - band..])
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    edge <= EDGE_NEGLIGIBLE * peak
}

#[derive(Debug, Clone)]
pub struct Factorized {
    pub field: Field,
    /// Fraction of x-nodes whose dilated argument `-x / 2t` lies on the frequency lattice.
    pub coverage: f64,
}

/// `M(t) D(t) F M(t) f`, with `M(t) = exp(i x^2 / 4t)` and
/// `D(t) g (x) = (2it)^(-1/2) g(-x / 2t)`.
///
/// The reflection in the dilation comes from the `exp(+i x xi)` forward kernel: a
/// spectrum concentrated near `xi0` travels to `x = -2 xi0 t`.
///
/// The transform of `M(t) f` is taken on a domain zero-padded by `refine` (so the
/// frequency lattice is `refine` times finer) and sampled at `-x / 2t` by linear
/// interpolation.
pub fn factorized_evolve(f: &Field, t: f64, refine: usize) -> Result<Factorized> {
    f.ensure_space(Space::Position)?;
    if !t.is_finite() {
        return Err(Error::NonFinite("evolution time"));
    }
    if t < FACTORIZATION_T_MIN {
        return Err(Error::TimeTooSmall {
            what: "factorized evolution",
            t,
            min: FACTORIZATION_T_MIN,
        });
    }
    let grid = f.grid();
    let refine = refine.max(1).next_power_of_two();
    let fine = Grid::new(grid.n() * refine, grid.length() * refine as f64)?;
    let offset = (fine.n() - grid.n()) / 2;
    let mut buf = vec![C64::new(0.0, 0.0); fine.n()];
    for (j, (v, &x)) in f.values().iter().zip(grid.x()).enumerate() {
        buf[offset + j] = v * C64::from_polar(1.0, x * x / (4.0 * t));
    }
    fine.forward_in_place(&mut buf);
    let res = dilate_and_modulate(grid, fine.xi(), &buf, t, |w| w);
    check_coverage(res, &buf, t)
}

pub(crate) fn check_coverage(res: Factorized, profile: &[C64], t: f64) -> Result<Factorized> {
    if res.coverage < MIN_COVERAGE && !negligible_at_edges(profile) {
        return Err(Error::Coverage {
            t,
            coverage: res.coverage,
        });
    }
    Ok(res)
}

/// Evaluates `(2it)^(-1/2) exp(i x^2/4t) phase(W(-x/2t))` on `grid`, sampling the
/// profile `W` (given on `xi_nodes`) by linear interpolation and extending it by zero.
pub(crate) fn dilate_and_modulate(
    grid: &Arc<Grid>,
    xi_nodes: &[f64],
    profile: &[C64],
    t: f64,
    phase: impl Fn(C64) -> C64,
) -> Factorized {
    let amp = C64::new(0.0, 2.0 * t).sqrt().inv();
    let mut covered = 0usize;
    let values = grid
        .x()
        .iter()
        .map(|&x| match sample_linear(xi_nodes, profile, -x / (2.0 * t)) {
            Some(w) => {
                covered += 1;
                amp * C64::from_polar(1.0, x * x / (4.0 * t)) * phase(w)
            }
            None => C64::new(0.0, 0.0),
        })
        .collect();
    Factorized {
        field: Field::from_raw(grid.clone(), values, Space::Position),
        coverage: covered as f64 / grid.n() as f64,
    }
}

/// `J(t) u = x u + 2 i t u_x`.
pub fn galilean_j(u: &Field, t: f64) -> Result<Field> {
    u.ensure_space(Space::Position)?;
    let du = u.spectral_derivative()?;
    let k = C64::new(0.0, 2.0 * t);
    let values = u
        .values()
        .iter()
        .zip(du.values())
        .zip(u.grid().x())
        .map(|((v, d), &x)| v * x + k * d)
        .collect();
    Ok(Field::from_raw(u.grid().clone(), values, Space::Position))
}

/// Multiplication by `x`.
pub fn multiply_by_x(u: &Field) -> Result<Field> {
    u.ensure_space(Space::Position)?;
    let values = u
        .values()
        .iter()
        .zip(u.grid().x())
        .map(|(v, &x)| v * x)
        .collect();
    Ok(Field::from_raw(u.grid().clone(), values, Space::Position))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(grid: &Arc<Grid>) -> Field {
        Field::from_position_fn(grid.clone(), |x| C64::new((-x * x).exp(), 0.0)).unwrap()
    }

    /// `exp(-x^2)` evolved by `i u_t + u_xx = 0`, optionally boosted by `exp(i k x)`.
    pub(crate) fn gaussian_exact(x: f64, t: f64, k: f64) -> C64 {
        let z = C64::new(1.0, 4.0 * t);
        let y = x - 2.0 * k * t;
        z.sqrt().inv() * (-(y * y) / z).exp() * C64::from_polar(1.0, k * x - k * k * t)
    }

    #[test]
    fn zero_time_is_identity() {
        let g = Grid::new(256, 20.0).unwrap();
        let f = gaussian(&g);
        assert!(free_evolve(&f, 0.0).unwrap().sup_distance(&f) < 1e-14);
        assert!(free_evolve(&f, f64::NAN).is_err());
    }

    #[test]
    fn gaussian_closed_form() {
        let g = Grid::new(2048, 60.0).unwrap();
        let out = free_evolve(&gaussian(&g), 1.0).unwrap();
        let err = out
            .values()
            .iter()
            .zip(g.x())
            .map(|(v, &x)| (v - gaussian_exact(x, 1.0, 0.0)).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "err = {err:e}");
    }

    #[test]
    fn group_property_and_unitarity() {
        let g = Grid::new(512, 30.0).unwrap();
        let f = Field::from_position_fn(g.clone(), |x| {
            C64::new((-x * x).exp() * (1.0 + x), 0.3 * (-(x - 1.0) * (x - 1.0)).exp())
        })
        .unwrap();
        let fwd = free_evolve(&f, 2.7).unwrap();
        let n0 = f.norm(NormKind::L2).unwrap();
        assert!((fwd.norm(NormKind::L2).unwrap() - n0).abs() < 1e-12 * n0);
        let back = free_evolve(&fwd, -2.7).unwrap();
        assert!(back.l2_distance(&f) < 1e-12 * n0);
    }

    #[test]
    fn factorization_matches_multiplier_form() {
        let g = Grid::new(4096, 240.0).unwrap();
        let t = 5.0;
        for k in [0.0, 1.5] {
            let f = Field::from_position_fn(g.clone(), |x| gaussian_exact(x, 0.0, k)).unwrap();
            let direct = free_evolve(&f, t).unwrap();
            let exact =
                Field::from_position_fn(g.clone(), |x| gaussian_exact(x, t, k)).unwrap();
            assert!(direct.sup_distance(&exact) < 1e-10);
            let fac = factorized_evolve(&f, t, 4).unwrap();
            let err = fac.field.sup_distance(&direct);
            assert!(err < 1e-4, "k = {k}: err = {err:e}");
        }
    }

    #[test]
    fn factorized_bound_and_zero() {
        let g = Grid::new(512, 40.0).unwrap();
        let z = Field::zeros(g.clone(), Space::Position);
        let fz = factorized_evolve(&z, 2.0, 1).unwrap();
        assert_eq!(fz.field.norm(NormKind::Linf).unwrap(), 0.0);
        assert!(factorized_evolve(&z, 1e-4, 1).is_err());

        let f = gaussian(&g);
        let t = 3.0;
        let modulated = Field::from_position_fn(g.clone(), |x| {
            C64::from_polar((-x * x).exp(), x * x / (4.0 * t))
        })
        .unwrap();
        let sup_hat = modulated.forward_transform().unwrap().norm(NormKind::Linf).unwrap();
        let lhs = factorized_evolve(&f, t, 1).unwrap().field.norm(NormKind::Linf).unwrap();
        assert!(lhs <= (2.0 * t).powf(-0.5) * sup_hat * (1.0 + 1e-12));
    }

    #[test]
    fn j_at_zero_is_multiplication_by_x_and_flips_parity() {
        let g = Grid::new(256, 20.0).unwrap();
        let u = gaussian(&g);
        let j = galilean_j(&u, 0.0).unwrap();
        assert!(j.sup_distance(&multiply_by_x(&u).unwrap()) < 1e-15);
        for k in 1..128 {
            assert!((j.values()[128 + k] + j.values()[128 - k]).norm() < 1e-14);
        }
    }

    #[test]
    fn j_is_conjugated_multiplication() {
        let g = Grid::new(2048, 200.0).unwrap();
        let u0 = gaussian(&g);
        for t in [0.5, 2.0, 4.0] {
            let ut = free_evolve(&u0, t).unwrap();
            let ju = galilean_j(&ut, t).unwrap();
            // J(t) e^{itΔ} u0 = e^{itΔ} (x u0)
            let rhs = free_evolve(&multiply_by_x(&u0).unwrap(), t).unwrap();
            let scale = rhs.norm(NormKind::L2).unwrap();
            assert!(ju.l2_distance(&rhs) < 1e-6 * scale, "t = {t}");
            // || J(t) u || = || x f || with f = e^{-itΔ} u
            let f = free_evolve(&ut, -t).unwrap();
            let xf = multiply_by_x(&f).unwrap().norm(NormKind::L2).unwrap();
            let jn = ju.norm(NormKind::L2).unwrap();
            assert!((jn - xf).abs() < 1e-6 * xf);
        }
    }

    #[test]
    fn linear_sampling() {
        let nodes = [0.0, 1.0, 2.0];
        let vals = [C64::new(0.0, 0.0), C64::new(2.0, 0.0), C64::new(4.0, 2.0)];
        assert_eq!(sample_linear(&nodes, &vals, 0.5), Some(C64::new(1.0, 0.0)));
        assert_eq!(sample_linear(&nodes, &vals, 2.0), Some(C64::new(4.0, 2.0)));
        assert_eq!(sample_linear(&nodes, &vals, 2.5), None);
        assert_eq!(sample_linear(&nodes, &vals, -0.1), None);
    }
}
