//! The sharp Sobolev inequality on `T^n`
//!
//! ```text
//! ||f||_{L^{2*}} <= sqrt(2e) K_n (||grad f||^2 + (4 n^2 / |T|^2) ||f||^2)^{1/2},  2* = 2n/(n-2)
//! ```
//!
//! its dimension-scaled variants on `T^{dk}`, and the piecewise-linear cutoff
//! used to periodize the Euclidean inequality.

use std::f64::consts::{E, PI};

use num_complex::Complex64;
use rand::Rng;

use crate::diagnostics::Comparison;
use crate::error::{Error, Result};
use crate::special::ln_gamma;
use crate::spectral::SpectralGrid;
use crate::torus::{lp_norm_of, DensityField};

/// Quadrature nodes for one-dimensional `L^p` norms of trigonometric polynomials.
pub const QUADRATURE_POINTS: usize = 8192;
/// Safety factor on calibrated constants.
pub const CALIBRATION_SAFETY: f64 = 1.1;

/// Optimal Sobolev constant `K_n` on `R^n`, `n >= 3`.
pub fn sobolev_constant(n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::domain(format!("the critical exponent 2n/(n-2) needs n >= 3, got {n}")));
    }
    let nf = n as f64;
    let ln_omega = 2f64.ln() + 0.5 * nf * PI.ln() - ln_gamma(0.5 * nf);
    let ln_ratio = ln_gamma(nf + 1.0) - ln_gamma(0.5 * nf) - ln_gamma(0.5 * nf + 1.0) - ln_omega;
    Ok((-0.5 * (nf * (nf - 2.0)).ln() + ln_ratio / nf).exp())
}

/// Critical exponent `2n / (n - 2)`.
pub fn critical_exponent(n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::domain(format!("the critical exponent 2n/(n-2) needs n >= 3, got {n}")));
    }
    Ok(2.0 * n as f64 / (n as f64 - 2.0))
}

/// `a0 + sum_m (cos[m-1] cos(k_m x) + sin[m-1] sin(k_m x))` on `[0, L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPoly {
    pub length: f64,
    pub a0: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl TrigPoly {
    pub fn constant(length: f64, a0: f64) -> Self {
        Self { length, a0, cos: Vec::new(), sin: Vec::new() }
    }

    /// `a0 + a cos(2 pi m x / L)`.
    pub fn single_mode(length: f64, a0: f64, m: usize, a: f64) -> Self {
        let mut cos = vec![0.0; m];
        if m > 0 {
            cos[m - 1] = a;
        }
        Self { length, a0: if m == 0 { a0 + a } else { a0 }, cos, sin: vec![0.0; m] }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let w = 2.0 * PI / self.length;
        let mut v = self.a0;
        for (j, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            let (s, c) = (w * (j + 1) as f64 * x).sin_cos();
            v += a * c + b * s;
        }
        v
    }

    pub fn l2_sq(&self) -> f64 {
        let osc: f64 = self.cos.iter().zip(&self.sin).map(|(a, b)| a * a + b * b).sum();
        self.length * (self.a0 * self.a0 + 0.5 * osc)
    }

    pub fn grad_l2_sq(&self) -> f64 {
        let w = 2.0 * PI / self.length;
        let s: f64 = self
            .cos
            .iter()
            .zip(&self.sin)
            .enumerate()
            .map(|(j, (a, b))| (w * (j + 1) as f64).powi(2) * (a * a + b * b))
            .sum();
        0.5 * self.length * s
    }

    pub fn mass(&self) -> f64 {
        self.a0 * self.length
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        let h = self.length / QUADRATURE_POINTS as f64;
        let vals: Vec<f64> = (0..QUADRATURE_POINTS).map(|j| self.eval(j as f64 * h)).collect();
        lp_norm_of(&vals, h, p)
    }
}

#[derive(Debug, Clone)]
pub enum TestFunction {
    /// `g_1(x_1) ... g_n(x_n)` on a cube of side `length`.
    Tensorized(Vec<TrigPoly>),
    /// Full grid on `T^n`, one-dimensional blocks, `n <= 4`.
    Grid(DensityField),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub lp: f64,
    pub l2: f64,
    pub grad: f64,
}

impl TestFunction {
    pub fn dim(&self) -> usize {
        match self {
            TestFunction::Tensorized(f) => f.len(),
            TestFunction::Grid(g) => g.grid().total_dims(),
        }
    }

    pub fn length(&self) -> f64 {
        match self {
            TestFunction::Tensorized(f) => f[0].length,
            TestFunction::Grid(g) => g.grid().geometry().length(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TestFunction::Tensorized(f) => {
                if f.is_empty() || f.iter().any(|g| g.length != f[0].length || g.cos.len() != g.sin.len()) {
                    return Err(Error::domain("tensor factors must share one period and be well formed"));
                }
            }
            TestFunction::Grid(g) => {
                if g.grid().geometry().dim() != 1 {
                    return Err(Error::domain("grid test functions use one-dimensional blocks"));
                }
            }
        }
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        match self {
            TestFunction::Tensorized(f) => f.iter().map(TrigPoly::mass).product(),
            TestFunction::Grid(g) => g.mass(),
        }
    }

    /// `(||f||_{L^p}, ||f||_{L^2}, ||grad f||_{L^2})`.
    pub fn norms(&self, p: f64) -> Result<Norms> {
        self.validate()?;
        match self {
            TestFunction::Tensorized(f) => {
                let mut lp = 1.0;
                for g in f {
                    lp *= g.lp_norm(p)?;
                }
                let sq: Vec<f64> = f.iter().map(TrigPoly::l2_sq).collect();
                let l2 = sq.iter().product::<f64>().sqrt();
                let grad_sq: f64 = f
                    .iter()
                    .enumerate()
                    .map(|(i, g)| {
                        let others: f64 = sq.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).product();
                        g.grad_l2_sq() * others
                    })
                    .sum();
                Ok(Norms { lp, l2, grad: grad_sq.sqrt() })
            }
            TestFunction::Grid(g) => {
                let sg = SpectralGrid::new(*g.grid());
                let fhat = g.spectrum();
                let grad_sq: f64 = (0..fhat.len()).map(|flat| sg.k2(flat) * fhat[flat].norm_sqr()).sum::<f64>()
                    * g.grid().volume();
                Ok(Norms { lp: g.lp_norm(p)?, l2: g.lp_norm(2.0)?, grad: grad_sq.sqrt() })
            }
        }
    }

    /// Full-grid materialization of a tensorized function.
    pub fn to_grid(&self, points: usize) -> Result<TestFunction> {
        match self {
            TestFunction::Grid(_) => Ok(self.clone()),
            TestFunction::Tensorized(f) => {
                let geometry = crate::torus::TorusGeometry::new(1, self.length())?;
                let grid = crate::torus::GridSpec::new(geometry, points, f.len())?;
                Ok(TestFunction::Grid(DensityField::from_fn(grid, |x| {
                    f.iter().zip(x).map(|(g, &xi)| g.eval(xi)).product()
                })))
            }
        }
    }
}

/// A random tensorized product of positive trigonometric polynomials of
/// degree at most `degree`, each normalized to unit mass.
pub fn random_tensorized(n: usize, degree: usize, length: f64, rng: &mut impl Rng) -> TestFunction {
    let factors = (0..n)
        .map(|_| {
            let deg = rng.random_range(1..=degree.max(1));
            let mut cos: Vec<f64> = (0..deg).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut sin: Vec<f64> = (0..deg).map(|_| rng.random_range(-1.0..1.0)).collect();
            // keep 1 + sum(...) positive
            let total: f64 = cos.iter().chain(&sin).map(|v| v.abs()).sum();
            let shrink = rng.random_range(0.1..0.95) / total;
            cos.iter_mut().chain(sin.iter_mut()).for_each(|v| *v *= shrink / length);
            TrigPoly { length, a0: 1.0 / length, cos, sin }
        })
        .collect();
    TestFunction::Tensorized(factors)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityAudit {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub holds: bool,
}

/// The torus inequality with the sharp constant.
pub fn verify_inequality(f: &TestFunction) -> Result<InequalityAudit> {
    let n = f.dim();
    let p = critical_exponent(n)?;
    let norms = f.norms(p)?;
    let length = f.length();
    let nf = n as f64;
    let rhs = (2.0 * E).sqrt()
        * sobolev_constant(n)?
        * (norms.grad.powi(2) + 4.0 * nf * nf / (length * length) * norms.l2.powi(2)).sqrt();
    let c = Comparison::new(norms.lp, rhs);
    Ok(InequalityAudit { lhs: norms.lp, rhs, ratio: norms.lp / rhs, holds: c.holds })
}

/// `||f||_{L^{2*_k}(T^{dk})} <= C (k^{-1/2} ||grad f|| + k^{1/2} ||f||)`.
pub fn effective_inequality_check(f: &TestFunction, d: usize, k: usize, c: f64) -> Result<Comparison> {
    let (lhs, grad, l2) = scaled_norms(f, d, k)?;
    let kf = k as f64;
    Ok(Comparison::new(lhs, c * (grad / kf.sqrt() + kf.sqrt() * l2)))
}

fn scaled_norms(f: &TestFunction, d: usize, k: usize) -> Result<(f64, f64, f64)> {
    if f.dim() != d * k {
        return Err(Error::domain(format!("function lives on T^{}, expected T^{}", f.dim(), d * k)));
    }
    let norms = f.norms(critical_exponent(d * k)?)?;
    Ok((norms.lp, norms.grad, norms.l2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActiveBranch {
    Gradient,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientBoundAudit {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub branch: ActiveBranch,
}

fn gradient_bound_rhs(grad: f64, d: usize, k: usize, c: f64) -> (f64, ActiveBranch) {
    let dk = (d * k) as f64;
    let kf = k as f64;
    let first = grad.powf(dk / (dk + 2.0));
    let second = c.powi(k as i32) * kf.powf(dk / 4.0);
    let (m, branch) = if first >= second {
        (first, ActiveBranch::Gradient)
    } else {
        (second, ActiveBranch::Constant)
    };
    (c / kf.sqrt() * m, branch)
}

/// `||f||_{L^2} <= (C / sqrt k) max(||grad f||^{dk/(dk+2)}, C^k k^{dk/4})` for a probability density on `T^{dk}`.
pub fn l2_gradient_bound_check(f: &TestFunction, d: usize, k: usize, c: f64) -> Result<GradientBoundAudit> {
    let (_, grad, l2) = scaled_norms(f, d, k)?;
    let (rhs, branch) = gradient_bound_rhs(grad, d, k, c);
    let cmp = Comparison::new(l2, rhs);
    Ok(GradientBoundAudit { lhs: l2, rhs, holds: cmp.holds, branch })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub d: usize,
    pub k: usize,
    pub length: f64,
    /// Constant for the effective inequality.
    pub c_effective: f64,
    /// Constant for the gradient bound on the L² norm.
    pub c_gradient: f64,
    pub family_size: usize,
}

/// Calibration order: `k = 2` unless `2d < 3`, then the smallest admissible `k`.
pub fn calibration_order(d: usize) -> usize {
    (2..).find(|k| d * k >= 3).unwrap_or(3)
}

/// Fit both constants over constants, single modes and random tensorized
/// densities on `T^{dk}`, times [`CALIBRATION_SAFETY`].
pub fn calibrate(d: usize, length: f64, random_members: usize, rng: &mut impl Rng) -> Result<Calibration> {
    let k = calibration_order(d);
    let n = d * k;
    let mut family = vec![TestFunction::Tensorized(vec![TrigPoly::constant(length, 1.0 / length); n])];
    for m in 1..=8 {
        let mut factors = vec![TrigPoly::constant(length, 1.0 / length); n];
        factors[0] = TrigPoly::single_mode(length, 1.0 / length, m, 0.9 / length);
        family.push(TestFunction::Tensorized(factors));
    }
    for _ in 0..random_members {
        family.push(random_tensorized(n, 6, length, rng));
    }
    let mut c_eff: f64 = 0.0;
    let mut c_grad: f64 = 0.0;
    let kf = k as f64;
    for f in &family {
        let (lhs, grad, l2) = scaled_norms(f, d, k)?;
        c_eff = c_eff.max(lhs / (grad / kf.sqrt() + kf.sqrt() * l2));
        c_grad = c_grad.max(required_gradient_constant(l2, grad, d, k));
    }
    Ok(Calibration {
        d,
        k,
        length,
        c_effective: CALIBRATION_SAFETY * c_eff,
        c_gradient: CALIBRATION_SAFETY * c_grad,
        family_size: family.len(),
    })
}

/// Smallest `C` with `l2 <= rhs(C)`; the right side is increasing in `C`.
fn required_gradient_constant(l2: f64, grad: f64, d: usize, k: usize) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while gradient_bound_rhs(grad, d, k, hi).0 < l2 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gradient_bound_rhs(grad, d, k, mid).0 < l2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Piecewise-linear cutoff: 1 on `|x| <= 1/2`, 0 beyond `(1 + eta)/2`, linear in between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffProfile {
    pub eta: f64,
}

impl CutoffProfile {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::domain(format!("eta must lie in (0, 1], got {eta}")));
        }
        Ok(Self { eta })
    }

    pub fn value(&self, x: f64) -> f64 {
        let a = x.abs();
        if a <= 0.5 {
            1.0
        } else if a >= 0.5 * (1.0 + self.eta) {
            0.0
        } else {
            (self.eta + 1.0) / self.eta - 2.0 * a / self.eta
        }
    }

    pub fn support_width(&self) -> f64 {
        1.0 + self.eta
    }

    /// `int |phi'|^2`: slope `2/eta` on two ramps of width `eta/2`.
    pub fn gradient_energy(&self) -> f64 {
        2.0 * (2.0 / self.eta).powi(2) * (0.5 * self.eta)
    }

    /// `int phi^2 = 1 + eta/3`.
    pub fn l2_sq(&self) -> f64 {
        1.0 + self.eta / 3.0
    }

    /// `sum_k phi(x + k)^p` over integer shifts.
    pub fn periodized(&self, x: f64, p: f64) -> f64 {
        (-2..=2).map(|k| self.value(x + k as f64).powf(p)).sum()
    }
}

/// The cutoff with `eta = 1/n`.
pub fn cutoff_profile(n: usize) -> Result<CutoffProfile> {
    if n == 0 {
        return Err(Error::domain("cutoff dimension must be at least 1"));
    }
    CutoffProfile::new(1.0 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffAudit {
    pub n: usize,
    pub gradient_energy: f64,
    /// Midpoint quadrature of `int |phi'|^2` on a grid aligned with the kinks.
    pub gradient_energy_quadrature: f64,
    pub l2_sq: f64,
    pub support_width: f64,
    /// Smallest `prod_i sum_k phi(x_i + k)^p` over the sample points.
    pub covering_min: f64,
}

/// Covering exponent: `2*` for `n >= 3`, otherwise 2.
pub fn covering_exponent(n: usize) -> f64 {
    critical_exponent(n).unwrap_or(2.0)
}

/// Energy identity, `L^2` bound and the periodized covering bound at `samples` points of `[0,1)^n`.
pub fn audit_cutoff(n: usize, samples: usize, rng: &mut impl Rng) -> Result<CutoffAudit> {
    let phi = cutoff_profile(n)?;
    let p = covering_exponent(n);
    // derivative is piecewise constant with kinks at multiples of eta/2
    let cells = 64 * (n + 1);
    let h = phi.eta / 64.0;
    let mut quad = 0.0;
    for j in 0..cells {
        let x = -0.5 * phi.support_width() + (j as f64 + 0.5) * h;
        let slope = (phi.value(x + 1e-3 * h) - phi.value(x - 1e-3 * h)) / (2e-3 * h);
        quad += slope * slope * h;
    }
    let mut covering_min = f64::INFINITY;
    for s in 0..samples {
        let value: f64 = if s < 1024.min(samples) {
            // a regular sweep of one axis, including the ramp endpoints
            phi.periodized(s as f64 / 1024.0, p)
        } else {
            (0..n).map(|_| phi.periodized(rng.random::<f64>(), p)).product()
        };
        covering_min = covering_min.min(value);
    }
    Ok(CutoffAudit {
        n,
        gradient_energy: phi.gradient_energy(),
        gradient_energy_quadrature: quad,
        l2_sq: phi.l2_sq(),
        support_width: phi.support_width(),
        covering_min,
    })
}

/// Spectral single-mode grid function `1 + a cos(2 pi m x_0 / L)` on `T^n`; used in sweeps.
pub fn grid_mode(n: usize, points: usize, length: f64, m: i64, a: f64) -> Result<TestFunction> {
    let geometry = crate::torus::TorusGeometry::new(1, length)?;
    let grid = crate::torus::GridSpec::new(geometry, points, n)?;
    let mut spec = vec![Complex64::default(); grid.len()];
    spec[0] = Complex64::new(1.0, 0.0);
    let stride = points.pow((n - 1) as u32);
    let slot = |m: i64| grid.slot_of(m).map(|s| s * stride);
    if let (Some(p), Some(q)) = (slot(m), slot(-m)) {
        spec[p] += Complex64::new(0.5 * a, 0.0);
        spec[q] += Complex64::new(0.5 * a, 0.0);
    }
    Ok(TestFunction::Grid(DensityField::from_spectrum(grid, spec)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constants_match_high_precision_values() {
        // mpmath, 50 digits, evaluating the closed form with exact Gamma
        let cases = [
            (3, 0.427_260_542_862_526_66),
            (4, 0.312_189_205_697_777_95),
            (5, 0.259_833_080_684_934_31),
            (8, 0.188_946_719_343_984_63),
            (10, 0.165_133_524_113_089_78),
            (100, 0.048_715_931_784_764_637),
            (1000, 0.015_313_589_415_221_575),
            (10000, 0.004_839_730_765_208_633),
        ];
        for (n, want) in cases {
            let got = sobolev_constant(n).unwrap();
            assert!(((got - want) / want).abs() < 1e-10, "n={n}: {got} vs {want}");
        }
        assert!(matches!(sobolev_constant(2), Err(Error::Domain(_))));
    }

    #[test]
    fn constant_decay_is_like_inverse_sqrt() {
        for n in 3..50 {
            assert!(sobolev_constant(n + 1).unwrap() < sobolev_constant(n).unwrap());
        }
        let scaled: Vec<f64> = [3, 10, 100, 1000, 10000]
            .iter()
            .map(|&n| sobolev_constant(n).unwrap() * (n as f64).sqrt())
            .collect();
        for s in &scaled {
            assert!((0.1..=2.0).contains(s));
        }
        let (lo, hi) = scaled.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &s| (a.min(s), b.max(s)));
        assert!(hi / lo < 2.0);
    }

    #[test]
    fn constant_function_example() {
        let f = TestFunction::Tensorized(vec![TrigPoly::constant(1.0, 1.0); 3]);
        let a = verify_inequality(&f).unwrap();
        assert!((a.lhs - 1.0).abs() < 1e-12);
        assert!((a.rhs - 5.977_316_840_035_982_5).abs() < 1e-9);
        assert!(a.holds);
    }

    #[test]
    fn sine_product_example() {
        let f = TestFunction::Tensorized(vec![
            TrigPoly { length: 1.0, a0: 0.0, cos: vec![0.0], sin: vec![1.0] };
            4
        ]);
        let a = verify_inequality(&f).unwrap();
        assert!(a.holds && a.ratio < 1.0);
    }

    #[test]
    fn tensorized_norms_match_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_tensorized(2, 4, 1.0, &mut rng);
        let g = f.to_grid(64).unwrap();
        for p in [2.0, 3.0, 6.0] {
            // positive polynomials of low degree: both quadratures are exact for these integer p
            let a = f.norms(p).unwrap();
            let b = g.norms(p).unwrap();
            let tol = 1e-10;
            assert!(((a.lp - b.lp) / b.lp).abs() < tol, "p={p}: {} vs {}", a.lp, b.lp);
            assert!(((a.l2 - b.l2) / b.l2).abs() < 1e-10);
            assert!(((a.grad - b.grad) / b.grad).abs() < 1e-10);
        }
    }

    #[test]
    fn random_sweep_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..60 {
            let n = 3 + i % 6;
            let length = [1.0, 2.0 * PI, 0.5][i % 3];
            let f = random_tensorized(n, 5, length, &mut rng);
            assert!(verify_inequality(&f).unwrap().holds);
        }
    }

    #[test]
    fn calibration_and_effective_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cal = calibrate(1, 1.0, 40, &mut rng).unwrap();
        assert_eq!(cal.k, 3);
        assert_eq!(calibration_order(2), 2);
        let k = 3;
        let constant = TestFunction::Tensorized(vec![TrigPoly::constant(1.0, 1.0); 3]);
        let c = effective_inequality_check(&constant, 1, k, cal.c_effective).unwrap();
        assert!(c.holds);
        // margin for the unit constant on the unit cube is C sqrt(k) - 1
        assert!((c.rhs - c.lhs - (cal.c_effective * (k as f64).sqrt() - 1.0)).abs() < 1e-12);

        let mut high = vec![TrigPoly::constant(1.0, 1.0); 3];
        high[0] = TrigPoly::single_mode(1.0, 0.0, 12, 1.0);
        let c = effective_inequality_check(&TestFunction::Tensorized(high), 1, k, cal.c_effective).unwrap();
        assert!(c.holds && c.rhs > 5.0 * c.lhs);

        let g = l2_gradient_bound_check(&constant, 1, k, cal.c_gradient).unwrap();
        assert!(g.holds);
        assert_eq!(g.branch, ActiveBranch::Constant);
    }

    #[test]
    fn cutoff_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..=6 {
            let a = audit_cutoff(n, 2000, &mut rng).unwrap();
            assert!((a.gradient_energy - 4.0 * n as f64).abs() <= 4.0 * n as f64 * f64::EPSILON * 4.0);
            assert!((a.gradient_energy_quadrature - 4.0 * n as f64).abs() < 1e-6 * n as f64);
            assert!(a.l2_sq <= 1.0 + 1.0 / n as f64);
            assert!(a.covering_min >= 1.0);
        }
        assert_eq!(cutoff_profile(1).unwrap().gradient_energy(), 4.0);
        assert_eq!(cutoff_profile(4).unwrap().support_width(), 1.25);
        let phi = cutoff_profile(2).unwrap();
        assert_eq!(phi.value(0.5), 1.0);
        assert_eq!(phi.value(0.75), 0.0);
        assert!((phi.value(0.625) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn grid_mode_norms() {
        let f = grid_mode(3, 16, 1.0, 2, 0.5).unwrap();
        let nrm = f.norms(2.0).unwrap();
        assert!((nrm.l2 - (1.0f64 + 0.125).sqrt()).abs() < 1e-12);
        assert!((nrm.grad - 4.0 * PI * 0.5 / 2f64.sqrt()).abs() < 1e-10);
    }
}
