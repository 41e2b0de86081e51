//! Direct spectral solves of the Liouville equation of the 1-D particle system
//! for `N <= 3`:
//!
//! ```text
//! d_t f_N + sum_i d_{x_i}(b_i f_N) = sigma sum_i Lap_{x_i} f_N,
//! b_i = (1/N) sum_{j != i} K(x_i - x_j)
//! ```
//!
//! plus marginals, the Kuramoto Gibbs state and BBGKY consistency residuals.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernels::{eval_kernel, KernelSpec};
use crate::spectral::{if_rk2, SpectralGrid};
use crate::torus::{min_image_coord, DensityField, GridSpec, TorusGeometry};

pub const MAX_PARTICLES: usize = 3;

#[derive(Debug, Clone)]
pub struct JointDensity {
    field: DensityField,
}

impl JointDensity {
    pub fn new(field: DensityField) -> Result<Self> {
        let grid = field.grid();
        if grid.geometry().dim() != 1 {
            return Err(Error::Unsupported("direct Liouville solves are one-dimensional".into()));
        }
        if grid.total_dims() > MAX_PARTICLES {
            return Err(Error::Resource(format!(
                "direct Liouville solves support N <= {MAX_PARTICLES}, got N = {}",
                grid.total_dims()
            )));
        }
        Ok(Self { field })
    }

    /// `g(x_1) g(x_2) ... g(x_N)`.
    pub fn tensorized(g: &DensityField, n: usize) -> Result<Self> {
        if g.grid().total_dims() != 1 {
            return Err(Error::domain("tensor factor must be a one-particle density"));
        }
        if n > MAX_PARTICLES {
            return Err(Error::Resource(format!("direct Liouville solves support N <= {MAX_PARTICLES}, got N = {n}")));
        }
        let grid = g.grid().with_blocks(n)?;
        let mut idx = vec![0usize; n];
        let vals = g.values();
        let values = (0..grid.len())
            .map(|flat| {
                grid.multi_index(flat, &mut idx);
                idx.iter().map(|&i| vals[i]).product()
            })
            .collect();
        Self::new(DensityField::new(grid, values)?)
    }

    pub fn field(&self) -> &DensityField {
        &self.field
    }

    pub fn particles(&self) -> usize {
        self.field.grid().total_dims()
    }

    /// Largest `|f(P x) - f(x)|` over coordinate permutations `P`.
    pub fn exchangeability_defect(&self) -> f64 {
        let grid = self.field.grid();
        let n = self.particles();
        let ppd = grid.points_per_dim();
        let vals = self.field.values();
        let mut idx = vec![0usize; n];
        let mut worst: f64 = 0.0;
        for perm in permutations(n) {
            for (flat, v) in vals.iter().enumerate() {
                grid.multi_index(flat, &mut idx);
                let other = perm.iter().fold(0, |acc, &p| acc * ppd + idx[p]);
                worst = worst.max((v - vals[other]).abs());
            }
        }
        worst
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Pair-kernel value `K(x_i - x_j)` at every node of `grid`.
fn pair_kernel(grid: &GridSpec, kernel: &KernelSpec, i: usize, j: usize) -> Result<Vec<f64>> {
    let length = grid.geometry().length();
    let mut idx = vec![0usize; grid.total_dims()];
    let h = grid.spacing();
    // K(x_i - x_j) only depends on the index difference
    let ppd = grid.points_per_dim();
    let table: Vec<f64> = (0..ppd)
        .map(|delta| eval_kernel(kernel, &[min_image_coord(delta as f64 * h, 0.0, length)]).map(|v| v[0]))
        .collect::<Result<_>>()?;
    Ok((0..grid.len())
        .map(|flat| {
            grid.multi_index(flat, &mut idx);
            table[(idx[i] + ppd - idx[j]) % ppd]
        })
        .collect())
}

fn check_kernel(grid: &GridSpec, kernel: &KernelSpec) -> Result<()> {
    if kernel.dim() != 1 || grid.geometry() != kernel.geometry() {
        return Err(Error::domain(format!(
            "kernel {} does not live on the circle of length {}",
            kernel.name(),
            grid.geometry().length()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LiouvilleSolver {
    sg: SpectralGrid,
    drifts: Vec<Vec<f64>>,
    sigma: f64,
}

impl LiouvilleSolver {
    pub fn new(grid: GridSpec, kernel: &KernelSpec, sigma: f64) -> Result<Self> {
        let n = grid.total_dims();
        if n > MAX_PARTICLES {
            return Err(Error::Resource(format!("direct Liouville solves support N <= {MAX_PARTICLES}, got N = {n}")));
        }
        check_kernel(&grid, kernel)?;
        let mut drifts = vec![vec![0.0; grid.len()]; n];
        for (i, b) in drifts.iter_mut().enumerate() {
            for j in (0..n).filter(|&j| j != i) {
                for (bv, kv) in b.iter_mut().zip(pair_kernel(&grid, kernel, i, j)?) {
                    *bv += kv / n as f64;
                }
            }
        }
        Ok(Self { sg: SpectralGrid::new(grid), drifts, sigma })
    }

    fn transport(&self, fhat: &[Complex64]) -> Vec<Complex64> {
        let mut g = fhat.to_vec();
        self.sg.dealias(&mut g);
        let f = self.sg.to_physical(&g);
        let refs: Vec<&[f64]> = self.drifts.iter().map(Vec::as_slice).collect();
        self.sg.minus_divergence(&refs, &f, true)
    }

    pub fn step(&self, joint: &JointDensity, dt: f64) -> Result<JointDensity> {
        if joint.field.grid() != &self.sg.grid {
            return Err(Error::domain("joint density and solver grids differ"));
        }
        let factors = self.sg.heat_factors(self.sigma, dt);
        let next = if_rk2::<Error>(joint.field.spectrum(), &factors, dt, |f| Ok(self.transport(f)))?;
        Ok(JointDensity { field: DensityField::from_spectrum(self.sg.grid, next)? })
    }

    /// `steps` consecutive steps of size `dt`.
    pub fn advance(&self, joint: &JointDensity, dt: f64, steps: usize) -> Result<JointDensity> {
        let mut out = joint.clone();
        for _ in 0..steps {
            out = self.step(&out, dt)?;
        }
        Ok(out)
    }
}

/// One integrating-factor RK2 step of the Liouville equation.
pub fn liouville_step(joint: &JointDensity, kernel: &KernelSpec, sigma: f64, dt: f64) -> Result<JointDensity> {
    LiouvilleSolver::new(*joint.field.grid(), kernel, sigma)?.step(joint, dt)
}

/// Integrate a field on `T^m` (1-D blocks) over its trailing `m - k` coordinates.
pub fn marginalize(field: &DensityField, k: usize) -> Result<DensityField> {
    let grid = field.grid();
    let m = grid.total_dims();
    if k == 0 || k > m {
        return Err(Error::domain(format!("marginal order {k} outside 1..={m}")));
    }
    if grid.geometry().dim() != 1 {
        return Err(Error::Unsupported("marginals of multi-dimensional blocks".into()));
    }
    if k == m {
        return Ok(field.clone());
    }
    let ppd = grid.points_per_dim();
    let inner = ppd.pow((m - k) as u32);
    let weight = grid.spacing().powi((m - k) as i32);
    let values = field.values().chunks(inner).map(|c| c.iter().sum::<f64>() * weight).collect();
    DensityField::new(grid.with_blocks(k)?, values)
}

pub fn extract_marginal(joint: &JointDensity, k: usize) -> Result<DensityField> {
    marginalize(&joint.field, k)
}

/// Invariant density `prod_{i<j} exp(cos(x_i - x_j) / (sigma N))` of the
/// Kuramoto system, normalized by quadrature.
pub fn gibbs_stationary_kuramoto(n: usize, sigma: f64, points: usize) -> Result<JointDensity> {
    if n == 0 || n > MAX_PARTICLES {
        return Err(Error::Resource(format!("direct Liouville solves support 1 <= N <= {MAX_PARTICLES}, got N = {n}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::domain(format!("sigma must be positive, got {sigma}")));
    }
    let grid = GridSpec::new(TorusGeometry::circle(), points, n)?;
    let beta = 1.0 / (sigma * n as f64);
    let field = DensityField::from_fn(grid, |x| {
        let mut e = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                e += (x[i] - x[j]).cos() - 1.0;
            }
        }
        (beta * e).exp()
    });
    let mass = field.mass();
    JointDensity::new(field.scaled(1.0 / mass))
}

/// `L^2` norm of the `k`-th BBGKY equation evaluated on `(f_k, f_{k+1})`:
///
/// ```text
/// d_t f_k + (1/N) sum_{i != j <= k} d_i(K(x_i - x_j) f_k)
///         + ((N-k)/N) sum_{i <= k} d_i int K(x_i - y) f_{k+1}(.., y) dy - sigma Lap f_k
/// ```
///
/// With `coupling = false` the `f_{k+1}` term is dropped.
pub fn bbgky_residual(
    f_k: &DensityField,
    f_k1: &DensityField,
    kernel: &KernelSpec,
    sigma: f64,
    n: usize,
    dfdt: &DensityField,
    coupling: bool,
) -> Result<f64> {
    let grid = *f_k.grid();
    let k = grid.total_dims();
    if dfdt.grid() != &grid {
        return Err(Error::domain("dfdt and f_k grids differ"));
    }
    if f_k1.grid() != &grid.with_blocks(k + 1)? {
        return Err(Error::domain("f_{k+1} must live on the grid of f_k with one more coordinate"));
    }
    if k + 1 > n {
        return Err(Error::domain(format!("marginal order {} exceeds N = {n}", k + 1)));
    }
    check_kernel(&grid, kernel)?;
    let sg = SpectralGrid::new(grid);
    let nf = n as f64;

    let mut internal = vec![vec![0.0; grid.len()]; k];
    for (i, b) in internal.iter_mut().enumerate() {
        for j in (0..k).filter(|&j| j != i) {
            for (bv, kv) in b.iter_mut().zip(pair_kernel(&grid, kernel, i, j)?) {
                *bv += kv / nf;
            }
        }
    }
    let refs: Vec<&[f64]> = internal.iter().map(Vec::as_slice).collect();
    // minus_divergence returns -div, so subtract it
    let mut total: Vec<Complex64> = sg.minus_divergence(&refs, f_k.values(), false).iter().map(|c| -c).collect();

    if coupling {
        let big = *f_k1.grid();
        let ppd = grid.points_per_dim();
        let h = grid.spacing();
        let weight = (nf - k as f64) / nf;
        let mut fields = Vec::with_capacity(k);
        for i in 0..k {
            let kij = pair_kernel(&big, kernel, i, k)?;
            let g: Vec<f64> = kij
                .chunks(ppd)
                .zip(f_k1.values().chunks(ppd))
                .map(|(kc, fc)| kc.iter().zip(fc).map(|(a, b)| a * b).sum::<f64>() * h * weight)
                .collect();
            fields.push(g);
        }
        let ones = vec![1.0; grid.len()];
        let refs: Vec<&[f64]> = fields.iter().map(Vec::as_slice).collect();
        for (t, c) in total.iter_mut().zip(sg.minus_divergence(&refs, &ones, false)) {
            *t -= c;
        }
    }
    for (t, c) in total.iter_mut().zip(sg.laplacian(f_k.spectrum(), sigma)) {
        *t -= c;
    }
    for (t, c) in total.iter_mut().zip(dfdt.spectrum()) {
        *t += c;
    }
    Ok(sg.l2_of_spectrum(&total))
}

/// Centered difference `(after - before) / (2 dt)`.
pub fn centered_time_derivative(before: &DensityField, after: &DensityField, dt: f64) -> Result<DensityField> {
    Ok(after.difference(before)?.scaled(0.5 / dt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line(n: usize) -> GridSpec {
        GridSpec::single(TorusGeometry::circle(), n).unwrap()
    }

    fn kuramoto() -> KernelSpec {
        KernelSpec::kuramoto(2.0 * PI).unwrap()
    }

    fn l1(a: &DensityField, b: &DensityField) -> f64 {
        a.difference(b).unwrap().lp_norm(1.0).unwrap()
    }

    #[test]
    fn too_many_particles() {
        let grid = GridSpec::new(TorusGeometry::circle(), 4, 4).unwrap();
        assert!(matches!(JointDensity::new(DensityField::uniform(grid)), Err(Error::Resource(_))));
        assert!(matches!(gibbs_stationary_kuramoto(4, 0.5, 8), Err(Error::Resource(_))));
    }

    #[test]
    fn zero_kernel_is_heat_flow() {
        let grid = GridSpec::new(TorusGeometry::circle(), 16, 2).unwrap();
        let f = DensityField::from_fn(grid, |x| (1.0 + 0.5 * (x[0] + 2.0 * x[1]).cos()) / (4.0 * PI * PI));
        let j = JointDensity::new(f.clone()).unwrap();
        let out = liouville_step(&j, &KernelSpec::zero(TorusGeometry::circle()), 0.3, 0.1).unwrap();
        let slot = 16 + 2;
        let want = (-0.3 * 5.0 * 0.1f64).exp();
        assert!((out.field().spectrum()[slot].re / f.spectrum()[slot].re / want - 1.0).abs() < 1e-12);
    }

    #[test]
    fn marginals() {
        let g = DensityField::from_fn(line(16), |x| (1.0 + 0.7 * x[0].sin()) / (2.0 * PI));
        let j = JointDensity::tensorized(&g, 3).unwrap();
        let m1 = extract_marginal(&j, 1).unwrap();
        for (a, b) in m1.values().iter().zip(g.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let m2 = extract_marginal(&j, 2).unwrap();
        let m21 = marginalize(&m2, 1).unwrap();
        for (a, b) in m21.values().iter().zip(m1.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(extract_marginal(&j, 3).unwrap().values(), j.field().values());
        assert!(matches!(extract_marginal(&j, 0), Err(Error::Domain(_))));
        assert!(matches!(extract_marginal(&j, 4), Err(Error::Domain(_))));

        let u = JointDensity::new(DensityField::uniform(GridSpec::new(TorusGeometry::circle(), 8, 3).unwrap())).unwrap();
        let m = extract_marginal(&u, 2).unwrap();
        assert!(m.values().iter().all(|v| (v - 1.0 / (4.0 * PI * PI)).abs() < 1e-15));
    }

    #[test]
    fn exchangeability_is_preserved() {
        let g = DensityField::from_fn(line(16), |x| (1.0 + 0.6 * x[0].cos() + 0.2 * (2.0 * x[0]).sin()) / (2.0 * PI));
        let j = JointDensity::tensorized(&g, 3).unwrap();
        let solver = LiouvilleSolver::new(*j.field().grid(), &kuramoto(), 0.5).unwrap();
        let out = solver.advance(&j, 1e-2, 100).unwrap();
        assert!(out.exchangeability_defect() <= 1e-9);
        assert!((out.field().mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gibbs_state() {
        let gibbs = gibbs_stationary_kuramoto(2, 0.5, 64).unwrap();
        assert!((gibbs.field().mass() - 1.0).abs() < 1e-10);
        let m1 = extract_marginal(&gibbs, 1).unwrap();
        assert!(l1(&m1, &DensityField::uniform(line(64))) <= 1e-8);

        let next = liouville_step(&gibbs, &kuramoto(), 0.5, 1e-3).unwrap();
        assert!(l1(next.field(), gibbs.field()) <= 1e-6);

        let hot = gibbs_stationary_kuramoto(2, 100.0, 32).unwrap();
        let u = DensityField::uniform(*hot.field().grid());
        assert!(hot.field().difference(&u).unwrap().lp_norm(f64::INFINITY).unwrap() <= 1e-2);
    }

    #[test]
    fn bbgky_trivial_case() {
        let k = KernelSpec::smooth_fourier(
            TorusGeometry::circle(),
            vec![
                crate::kernels::FourierTerm { mode: vec![1], coeff: vec![Complex64::new(0.3, 0.0)] },
                crate::kernels::FourierTerm { mode: vec![-1], coeff: vec![Complex64::new(0.3, 0.0)] },
            ],
        )
        .unwrap();
        let g1 = line(32);
        let g2 = g1.with_blocks(2).unwrap();
        let r = bbgky_residual(
            &DensityField::uniform(g1),
            &DensityField::uniform(g2),
            &k,
            0.4,
            3,
            &DensityField::constant(g1, 0.0),
            true,
        )
        .unwrap();
        assert!(r <= 1e-10);
        assert!(matches!(
            bbgky_residual(&DensityField::uniform(g1), &DensityField::uniform(g1), &k, 0.4, 3, &DensityField::constant(g1, 0.0), true),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn bbgky_consistency_for_two_particles() {
        let g = DensityField::from_fn(line(64), |x| (1.0 + 0.8 * x[0].cos()) / (2.0 * PI));
        let j = JointDensity::tensorized(&g, 2).unwrap();
        let dt = 1e-3;
        let solver = LiouvilleSolver::new(*j.field().grid(), &kuramoto(), 0.5).unwrap();
        let before = solver.advance(&j, dt, 199).unwrap();
        let mid = solver.step(&before, dt).unwrap();
        let after = solver.step(&mid, dt).unwrap();
        let dfdt = centered_time_derivative(
            &extract_marginal(&before, 1).unwrap(),
            &extract_marginal(&after, 1).unwrap(),
            dt,
        )
        .unwrap();
        let f1 = extract_marginal(&mid, 1).unwrap();
        let full = bbgky_residual(&f1, mid.field(), &kuramoto(), 0.5, 2, &dfdt, true).unwrap();
        let ablated = bbgky_residual(&f1, mid.field(), &kuramoto(), 0.5, 2, &dfdt, false).unwrap();
        assert!(full <= 1e-3, "{full}");
        assert!(ablated > 10.0 * full, "{ablated} vs {full}");
    }
}
