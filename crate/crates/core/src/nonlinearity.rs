//! The `tau`-averaged cubic nonlinearity
//! `N[u] = c * integral_0^1 exp(-i D Laplacian) F(exp(i D Laplacian) u) dtau`, `F(z) = |z|^2 z`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::dispersion::{TauNode, TauQuadrature};
use crate::error::Result;
use crate::grid::{Field, Grid, Space, C64};

#[inline]
fn cube_in_place(buf: &mut [C64]) {
    for v in buf.iter_mut() {
        *v *= v.norm_sqr();
    }
}

/// Spectrum of `|z|^2 z` for the band-limited `z` with spectrum `spec`. With
/// `dealias` the product is formed on the twice-refined grid, which is exact for
/// cubic terms once truncated back to the stored modes.
pub(crate) fn cubic_spectrum(grid: &Grid, spec: &[C64], dealias: bool) -> Vec<C64> {
    if dealias {
        let mut samples = grid.padded_samples(spec);
        cube_in_place(&mut samples);
        grid.spectrum_from_padded(samples)
    } else {
        let mut buf = spec.to_vec();
        grid.inverse_in_place(&mut buf);
        cube_in_place(&mut buf);
        grid.forward_in_place(&mut buf);
        buf
    }
}

/// `|z|^2 z`, pointwise or dealiased.
pub fn cubic(z: &Field, dealias: bool) -> Result<Field> {
    z.ensure_space(Space::Position)?;
    z.ensure_finite()?;
    if !dealias {
        let mut v = z.values().to_vec();
        cube_in_place(&mut v);
        return Ok(Field::from_raw(z.grid().clone(), v, Space::Position));
    }
    let spec = z.forward_transform()?;
    let mut out = cubic_spectrum(z.grid(), spec.values(), true);
    z.grid().inverse_in_place(&mut out);
    Ok(Field::from_raw(z.grid().clone(), out, Space::Position))
}

/// Fixed-shape pairwise summation; the tree depends only on the number of terms.
pub(crate) fn pairwise_sum(mut parts: Vec<Vec<C64>>) -> Vec<C64> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

/// Nodes sorted by shift, with nodes of (numerically) equal `D` combined. On a tent
/// both branches sweep `[0, D_max]` affinely, so their Gauss nodes share `D` values and
/// the merge halves the work without changing the rule.
fn merge_equal_shifts(nodes: &[TauNode]) -> Vec<TauNode> {
    let mut sorted = nodes.to_vec();
    sorted.sort_by(|a, b| a.shift.total_cmp(&b.shift).then(a.tau.total_cmp(&b.tau)));
    let scale = sorted.iter().map(|n| n.shift.abs()).fold(1.0, f64::max);
    let mut out: Vec<TauNode> = Vec::with_capacity(sorted.len());
    for n in sorted {
        match out.last_mut() {
            Some(last) if (n.shift - last.shift).abs() <= 1e-12 * scale => last.weight += n.weight,
            _ => out.push(n),
        }
    }
    out
}

/// The averaged nonlinearity on a fixed grid and `tau`-rule, with the per-node
/// multipliers `exp(-i D_k xi^2)` precomputed.
pub struct AveragedNonlinearity {
    grid: Arc<Grid>,
    nodes: Vec<TauNode>,
    c: f64,
    dealias: bool,
    shift_multipliers: Vec<Vec<C64>>,
}

impl AveragedNonlinearity {
    pub fn new(grid: Arc<Grid>, quadrature: &TauQuadrature, c: f64, dealias: bool) -> Self {
        let nodes = merge_equal_shifts(quadrature.nodes());
        let shift_multipliers = nodes
            .iter()
            .map(|node| {
                grid.xi()
                    .iter()
                    .map(|xi| C64::from_polar(1.0, -node.shift * xi * xi))
                    .collect()
            })
            .collect();
        AveragedNonlinearity {
            grid,
            nodes,
            c,
            dealias,
            shift_multipliers,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn dealias(&self) -> bool {
        self.dealias
    }

    /// Number of distinct shifts actually evaluated.
    pub fn distinct_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn free_phase(&self, s: f64) -> Vec<C64> {
        self.grid
            .xi()
            .iter()
            .map(|xi| C64::from_polar(1.0, -s * xi * xi))
            .collect()
    }

    /// `sum_k c w_k exp(+i (s + D_k) xi^2) F[ F(exp(i (s + D_k) Laplacian) f) ]` for a
    /// natural-order spectrum `f_hat`. At `s = 0` this is `F[N[u]]` with `u_hat = f_hat`;
    /// at `s = t` it is the interaction-picture nonlinearity.
    pub fn profile_term(&self, f_hat: &[C64], s: f64) -> Vec<C64> {
        if self.c == 0.0 {
            return vec![C64::new(0.0, 0.0); f_hat.len()];
        }
        let base = self.free_phase(s);
        let parts: Vec<Vec<C64>> = (0..self.nodes.len())
            .into_par_iter()
            .map(|k| {
                let mult = &self.shift_multipliers[k];
                let phase: Vec<C64> = base.iter().zip(mult).map(|(a, b)| a * b).collect();
                let v: Vec<C64> = f_hat.iter().zip(&phase).map(|(f, p)| f * p).collect();
                let mut out = cubic_spectrum(&self.grid, &v, self.dealias);
                let scale = self.c * self.nodes[k].weight;
                for (o, p) in out.iter_mut().zip(&phase) {
                    *o *= p.conj() * scale;
                }
                out
            })
            .collect();
        pairwise_sum(parts)
    }

    /// `sum_k w_k || exp(i (s + D_k) Laplacian) f ||_4^4`.
    pub fn quartic_average(&self, f_hat: &[C64], s: f64) -> f64 {
        let base = self.free_phase(s);
        let parts: Vec<f64> = (0..self.nodes.len())
            .into_par_iter()
            .map(|k| {
                let v: Vec<C64> = f_hat
                    .iter()
                    .zip(&base)
                    .zip(&self.shift_multipliers[k])
                    .map(|((f, a), b)| f * a * b)
                    .collect();
                let (samples, dx) = if self.dealias {
                    (self.grid.padded_samples(&v), 0.5 * self.grid.dx())
                } else {
                    let mut buf = v;
                    self.grid.inverse_in_place(&mut buf);
                    (buf, self.grid.dx())
                };
                let l4: f64 = samples.iter().map(|z| z.norm_sqr() * z.norm_sqr()).sum();
                self.nodes[k].weight * l4 * dx
            })
            .collect();
        parts.iter().sum()
    }

    /// `N[u]` for a position-space field.
    pub fn apply(&self, u: &Field) -> Result<Field> {
        let spec = u.forward_transform()?;
        let mut out = self.profile_term(spec.values(), 0.0);
        self.grid.inverse_in_place(&mut out);
        let field = Field::from_raw(self.grid.clone(), out, Space::Position);
        field.ensure_finite()?;
        Ok(field)
    }
}

/// `|| N[e^{i theta} u] - e^{i theta} N[u] ||_2`.
pub fn gauge_covariance_check(nl: &AveragedNonlinearity, u: &Field, theta: f64) -> Result<f64> {
    let rot = C64::from_polar(1.0, theta);
    let lhs = nl.apply(&u.scaled(rot))?;
    let rhs = nl.apply(u)?.scaled(rot);
    Ok(lhs.l2_distance(&rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::{tent_reduction_rule, DispersionProfile};
    use crate::grid::NormKind;
    use crate::propagator::free_evolve;

    fn gaussian(grid: &Arc<Grid>) -> Field {
        Field::from_position_fn(grid.clone(), |x| {
            C64::new((-x * x).exp(), 0.2 * x * (-x * x).exp())
        })
        .unwrap()
    }

    fn default_nl(grid: &Arc<Grid>, order: usize) -> AveragedNonlinearity {
        let q = TauQuadrature::build(&DispersionProfile::default(), order).unwrap();
        AveragedNonlinearity::new(grid.clone(), &q, 1.0, true)
    }

    fn inner(a: &Field, b: &Field) -> C64 {
        let dx = a.grid().dx();
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| x.conj() * y)
            .sum::<C64>()
            * dx
    }

    #[test]
    fn cubic_basics() {
        let g = Grid::new(64, 10.0).unwrap();
        let z = Field::zeros(g.clone(), Space::Position);
        assert_eq!(cubic(&z, true).unwrap().norm(NormKind::Linf).unwrap(), 0.0);
        let a = C64::new(0.7, -0.2);
        let k = Field::from_position_fn(g.clone(), |_| a).unwrap();
        let expected = a * a.norm_sqr();
        for dealias in [false, true] {
            for v in cubic(&k, dealias).unwrap().values() {
                assert!((v - expected).norm() < 1e-14);
            }
        }
        let u = gaussian(&g);
        let sup = u.norm(NormKind::Linf).unwrap();
        let c = cubic(&u, false).unwrap().norm(NormKind::Linf).unwrap();
        assert!((c - sup.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn dealiasing_is_invisible_for_resolved_data() {
        let g = Grid::new(256, 40.0).unwrap();
        let u = gaussian(&g);
        let a = cubic(&u, true).unwrap();
        let b = cubic(&u, false).unwrap();
        assert!(a.sup_distance(&b) < 1e-12);
    }

    #[test]
    fn unmanaged_reduces_to_plain_cubic() {
        let g = Grid::new(128, 20.0).unwrap();
        let p = DispersionProfile::unmanaged(1.0, 1.0).unwrap();
        let q = TauQuadrature::build(&p, 4).unwrap();
        let nl = AveragedNonlinearity::new(g.clone(), &q, 1.0, true);
        let u = gaussian(&g);
        let n = nl.apply(&u).unwrap();
        assert!(n.sup_distance(&cubic(&u, true).unwrap()) < 1e-14);
    }

    #[test]
    fn merged_nodes_match_definition() {
        let g = Grid::new(256, 30.0).unwrap();
        let u = gaussian(&g);
        for (d_plus, d_minus, t_plus) in [(3.0, 1.0, 0.5), (2.5, 0.75, 0.3)] {
            let p = DispersionProfile::new(d_plus, d_minus, t_plus, 1.0).unwrap();
            let q = TauQuadrature::build(&p, 6).unwrap();
            let nl = AveragedNonlinearity::new(g.clone(), &q, 1.0, true);
            assert_eq!(nl.distinct_nodes(), 6);
            let mut acc = vec![C64::new(0.0, 0.0); g.n()];
            for node in q.nodes() {
                let v = free_evolve(&u, node.shift).unwrap();
                let w = free_evolve(&cubic(&v, true).unwrap(), -node.shift).unwrap();
                for (a, b) in acc.iter_mut().zip(w.values()) {
                    *a += b * node.weight;
                }
            }
            let direct = Field::new(g.clone(), acc, Space::Position).unwrap();
            assert!(nl.apply(&u).unwrap().sup_distance(&direct) < 1e-14);
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let g = Grid::new(64, 10.0).unwrap();
        let nl = default_nl(&g, 4);
        let z = Field::zeros(g.clone(), Space::Position);
        assert_eq!(nl.apply(&z).unwrap().norm(NormKind::Linf).unwrap(), 0.0);
    }

    fn order_gap(u: &Field, lo: usize, hi: usize) -> f64 {
        let g = u.grid();
        let a = default_nl(g, lo).apply(u).unwrap();
        let b = default_nl(g, hi).apply(u).unwrap();
        a.l2_distance(&b) / b.norm(NormKind::L2).unwrap()
    }

    #[test]
    fn quadrature_orders_agree() {
        let g = Grid::new(1024, 80.0).unwrap();
        let wide = Field::from_position_fn(g.clone(), |x| C64::new((-x * x / 16.0).exp(), 0.0))
            .unwrap();
        assert!(order_gap(&wide, 8, 32) < 1e-10);
        // A unit-width Gaussian carries frequencies whose tau-phases D xi^2 need many
        // more nodes; convergence is still geometric.
        let unit = Field::from_position_fn(g.clone(), |x| C64::new((-x * x).exp(), 0.0)).unwrap();
        assert!(order_gap(&unit, 16, 64) < 2e-5);
        assert!(order_gap(&unit, 32, 64) < 1e-9);
    }

    #[test]
    fn gauge_covariance() {
        let g = Grid::new(256, 30.0).unwrap();
        let nl = default_nl(&g, 8);
        let u = gaussian(&g);
        assert_eq!(gauge_covariance_check(&nl, &u, 0.0).unwrap(), 0.0);
        for theta in [std::f64::consts::FRAC_PI_3, std::f64::consts::PI] {
            assert!(gauge_covariance_check(&nl, &u, theta).unwrap() < 1e-12);
        }
    }

    #[test]
    fn inner_product_is_real() {
        let g = Grid::new(256, 30.0).unwrap();
        let nl = default_nl(&g, 16);
        let u = gaussian(&g);
        let ip = inner(&u, &nl.apply(&u).unwrap());
        assert!(ip.im.abs() < 1e-12 * ip.re.abs(), "{ip}");
        // and it is the averaged L4 norm
        let spec = u.forward_transform().unwrap();
        let q = nl.quartic_average(spec.values(), 0.0);
        assert!((ip.re - q).abs() < 1e-12 * q);
    }

    #[test]
    fn cubic_homogeneity() {
        let g = Grid::new(128, 20.0).unwrap();
        let nl = default_nl(&g, 4);
        let u = gaussian(&g);
        let lambda = 1.7;
        let lhs = nl.apply(&u.scaled(C64::new(lambda, 0.0))).unwrap();
        let rhs = nl.apply(&u).unwrap().scaled(C64::new(lambda.powi(3), 0.0));
        assert!(lhs.l2_distance(&rhs) < 1e-13 * rhs.norm(NormKind::L2).unwrap());
    }

    #[test]
    fn matches_tent_reduction_oracle() {
        let g = Grid::new(256, 30.0).unwrap();
        let p = DispersionProfile::default();
        let nl = default_nl(&g, 48);
        let u = gaussian(&g);
        let mut acc = vec![C64::new(0.0, 0.0); g.n()];
        for (a, w) in tent_reduction_rule(&p, 2000).unwrap() {
            let v = free_evolve(&u, a).unwrap();
            let back = free_evolve(&cubic(&v, true).unwrap(), -a).unwrap();
            for (s, b) in acc.iter_mut().zip(back.values()) {
                *s += b * w;
            }
        }
        let oracle = Field::new(g.clone(), acc, Space::Position).unwrap();
        let got = nl.apply(&u).unwrap();
        let err = got.sup_distance(&oracle);
        assert!(err < 1e-9, "err = {err:e}");
    }

    #[test]
    fn pairwise_sum_shapes() {
        let parts: Vec<Vec<C64>> = (0..5).map(|i| vec![C64::new(i as f64, 0.0); 3]).collect();
        assert_eq!(pairwise_sum(parts), vec![C64::new(10.0, 0.0); 3]);
        assert!(pairwise_sum(Vec::new()).is_empty());
    }
}
