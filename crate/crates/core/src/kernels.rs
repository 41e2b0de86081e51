//! Interaction kernels `K : T^d -> R^d`.
//!
//! Every kernel in the library is a finite trigonometric polynomial (the
//! singular Biot–Savart and logarithmic kernels are carried by their truncated
//! Fourier series), so pointwise evaluation, particle drifts and grid
//! convolutions all share one representation. Coefficients are mean-normalized:
//! `K(x) = sum_m c(m) exp(i k(m) . x)`.
//!
//! Conventions (`G` the periodic Green's function, `-Lap G = delta - 1/|T|^d`,
//! `G ~ -(1/2 pi) log|x|` near 0):
//!
//! * Kuramoto (d = 1): `K(x) = -sin(2 pi x / L)`, i.e. `-sin x` on `L = 2 pi`;
//!   `c(+-1) = +-i/2`.
//! * Biot–Savart (d = 2): `K = grad^perp G`, `c(m) = i k^perp / (L^2 |k|^2)` with
//!   `k^perp = (-k_2, k_1)`.
//! * Attractive log (d = 2): `K = grad G` (points toward the source),
//!   `c(m) = i k / (L^2 |k|^2)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::special::{bessel_j, bessel_ratio_i1_i0};
use crate::torus::{fft_nd, min_image, Direction, DensityField, GridSpec, TorusGeometry};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Regularity class claimed for a kernel; metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularity {
    /// `K = div phi` with `phi` in `L^2`.
    HMinus1,
    /// `K` in `W^{-theta, 2/theta}` with `theta = 2/(d+2)`.
    WNegTheta,
    Smooth,
}

/// One vector-valued Fourier coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierTerm {
    pub mode: Vec<i64>,
    pub coeff: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelVariant {
    Zero,
    Kuramoto,
    BiotSavart2D { cutoff: usize },
    AttractiveLog2D { cutoff: usize },
    SmoothFourier { terms: Vec<FourierTerm> },
    Mollified { base: Box<KernelSpec>, epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    variant: KernelVariant,
    geometry: TorusGeometry,
    divergence_free: bool,
    regularity: Regularity,
    guard_radius: f64,
}

#[derive(Debug, Clone)]
pub struct KernelDecomposition {
    /// Attractive part `K+`.
    pub k_plus: KernelSpec,
    /// Repulsive part `K-`.
    pub k_minus: KernelSpec,
    /// `min_x div K-(x)` on the audit grid; `(div K-)_-` is bounded by its negative part.
    pub minus_divergence_floor: f64,
    /// `max_x |K+(x)|` on the audit grid.
    pub plus_sup: f64,
}

/// Vector field on a grid, one value array per component.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub grid: GridSpec,
    pub components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn max_abs(&self) -> f64 {
        self.components.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn default_guard(length: f64, cutoff: usize) -> f64 {
    // half the spacing of the smallest grid resolving the cutoff
    0.5 * length / (2 * cutoff.max(1)) as f64
}

impl KernelSpec {
    pub fn zero(geometry: TorusGeometry) -> Self {
        Self {
            variant: KernelVariant::Zero,
            geometry,
            divergence_free: true,
            regularity: Regularity::Smooth,
            guard_radius: 0.0,
        }
    }

    /// `K(x) = -sin(2 pi x / length)`.
    pub fn kuramoto(length: f64) -> Result<Self> {
        Ok(Self {
            variant: KernelVariant::Kuramoto,
            geometry: TorusGeometry::new(1, length)?,
            divergence_free: false,
            regularity: Regularity::Smooth,
            guard_radius: 0.0,
        })
    }

    pub fn biot_savart(length: f64, cutoff: usize) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::domain("Biot-Savart mode cutoff must be positive"));
        }
        Ok(Self {
            variant: KernelVariant::BiotSavart2D { cutoff },
            geometry: TorusGeometry::new(2, length)?,
            divergence_free: true,
            regularity: Regularity::HMinus1,
            guard_radius: default_guard(length, cutoff),
        })
    }

    pub fn attractive_log(length: f64, cutoff: usize) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::domain("log-kernel mode cutoff must be positive"));
        }
        Ok(Self {
            variant: KernelVariant::AttractiveLog2D { cutoff },
            geometry: TorusGeometry::new(2, length)?,
            divergence_free: false,
            regularity: Regularity::HMinus1,
            guard_radius: default_guard(length, cutoff),
        })
    }

    /// Kernel from an explicit coefficient table. The table must be closed under
    /// `m -> -m` with `c(-m) = conj(c(m))`.
    pub fn smooth_fourier(geometry: TorusGeometry, terms: Vec<FourierTerm>) -> Result<Self> {
        let d = geometry.dim();
        for t in &terms {
            if t.mode.len() != d || t.coeff.len() != d {
                return Err(Error::domain(format!("Fourier term {:?} does not match d = {d}", t.mode)));
            }
            let neg: Vec<i64> = t.mode.iter().map(|m| -m).collect();
            let partner = terms.iter().find(|s| s.mode == neg).ok_or_else(|| {
                Error::domain(format!("mode {:?} has no conjugate partner; kernel would not be real", t.mode))
            })?;
            for (a, b) in t.coeff.iter().zip(&partner.coeff) {
                if (a - b.conj()).norm() > 1e-12 * (1.0 + a.norm()) {
                    return Err(Error::domain(format!("coefficients of {:?} are not conjugate-symmetric", t.mode)));
                }
            }
        }
        let mut spec = Self {
            variant: KernelVariant::SmoothFourier { terms },
            geometry,
            divergence_free: false,
            regularity: Regularity::Smooth,
            guard_radius: 0.0,
        };
        spec.divergence_free = spec.divergence_residual_all() <= 1e-8;
        Ok(spec)
    }

    /// `rho_eps * K` with the unit-mass bump `rho_eps ~ (1 - (|x|/eps)^2)^2` on `|x| < eps`.
    pub fn mollify(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::domain(format!("mollification radius must be positive, got {epsilon}")));
        }
        if epsilon >= self.geometry.length() / 4.0 {
            return Err(Error::domain(format!(
                "mollification radius {epsilon} must stay below length/4 = {}",
                self.geometry.length() / 4.0
            )));
        }
        Ok(Self {
            variant: KernelVariant::Mollified { base: Box::new(self.clone()), epsilon },
            geometry: self.geometry,
            divergence_free: self.divergence_free,
            regularity: Regularity::Smooth,
            guard_radius: 0.0,
        })
    }

    pub fn variant(&self) -> &KernelVariant {
        &self.variant
    }

    pub fn geometry(&self) -> TorusGeometry {
        self.geometry
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn divergence_free(&self) -> bool {
        self.divergence_free
    }

    pub fn regularity(&self) -> Regularity {
        self.regularity
    }

    /// Exponent `theta = 2/(d+2)` of the `W^{-theta, 2/theta}` class.
    pub fn theta(&self) -> f64 {
        2.0 / (self.dim() as f64 + 2.0)
    }

    /// Radius below which pointwise evaluation of an unmollified singular kernel is refused.
    pub fn guard_radius(&self) -> f64 {
        self.guard_radius
    }

    pub fn with_guard_radius(mut self, radius: f64) -> Self {
        self.guard_radius = radius;
        self
    }

    pub fn is_singular(&self) -> bool {
        matches!(self.variant, KernelVariant::BiotSavart2D { .. } | KernelVariant::AttractiveLog2D { .. })
    }

    pub fn name(&self) -> String {
        match &self.variant {
            KernelVariant::Zero => "zero".into(),
            KernelVariant::Kuramoto => "kuramoto".into(),
            KernelVariant::BiotSavart2D { cutoff } => format!("biot-savart-2d(cutoff={cutoff})"),
            KernelVariant::AttractiveLog2D { cutoff } => format!("attractive-log-2d(cutoff={cutoff})"),
            KernelVariant::SmoothFourier { terms } => format!("smooth-fourier({} terms)", terms.len()),
            KernelVariant::Mollified { base, epsilon } => format!("mollified({}, eps={epsilon})", base.name()),
        }
    }

    /// Mean-normalized Fourier coefficient at integer mode `mode`.
    pub fn fourier_coefficient(&self, mode: &[i64]) -> Vec<Complex64> {
        let d = self.dim();
        let zero = vec![Complex64::default(); d];
        match &self.variant {
            KernelVariant::Zero => zero,
            KernelVariant::Kuramoto => match mode[0] {
                1 => vec![0.5 * I],
                -1 => vec![-0.5 * I],
                _ => zero,
            },
            KernelVariant::BiotSavart2D { cutoff } | KernelVariant::AttractiveLog2D { cutoff } => {
                let cutoff = *cutoff as i64;
                if mode.iter().all(|&m| m == 0) || mode.iter().any(|m| m.abs() > cutoff) {
                    return zero;
                }
                let k: Vec<f64> = mode.iter().map(|&m| self.geometry.wavenumber(m)).collect();
                let k2 = k[0] * k[0] + k[1] * k[1];
                let scale = 1.0 / (self.geometry.volume() * k2);
                if matches!(self.variant, KernelVariant::BiotSavart2D { .. }) {
                    vec![I * (-k[1] * scale), I * (k[0] * scale)]
                } else {
                    vec![I * (k[0] * scale), I * (k[1] * scale)]
                }
            }
            KernelVariant::SmoothFourier { terms } => terms
                .iter()
                .find(|t| t.mode.as_slice() == mode)
                .map(|t| t.coeff.clone())
                .unwrap_or(zero),
            KernelVariant::Mollified { base, epsilon } => {
                let kmag = mode
                    .iter()
                    .map(|&m| self.geometry.wavenumber(m).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let damp = mollifier_hat(kmag * epsilon, d);
                base.fourier_coefficient(mode).into_iter().map(|c| c * damp).collect()
            }
        }
    }

    /// All modes with a nonzero coefficient.
    pub fn terms(&self) -> Vec<FourierTerm> {
        let modes: Vec<Vec<i64>> = match &self.variant {
            KernelVariant::Zero => Vec::new(),
            KernelVariant::Kuramoto => vec![vec![1], vec![-1]],
            KernelVariant::BiotSavart2D { cutoff } | KernelVariant::AttractiveLog2D { cutoff } => {
                let c = *cutoff as i64;
                let mut out = Vec::new();
                for m0 in -c..=c {
                    for m1 in -c..=c {
                        if m0 != 0 || m1 != 0 {
                            out.push(vec![m0, m1]);
                        }
                    }
                }
                out
            }
            KernelVariant::SmoothFourier { terms } => terms.iter().map(|t| t.mode.clone()).collect(),
            KernelVariant::Mollified { base, .. } => base.terms().into_iter().map(|t| t.mode).collect(),
        };
        modes
            .into_iter()
            .map(|mode| {
                let coeff = self.fourier_coefficient(&mode);
                FourierTerm { mode, coeff }
            })
            .filter(|t| t.coeff.iter().any(|c| c.norm() > 0.0))
            .collect()
    }

    /// Upper bound `sum_m |k| |c(m)|` on the Lipschitz constant of `K`.
    pub fn lipschitz_bound(&self) -> f64 {
        self.terms()
            .iter()
            .map(|t| {
                let kmag = t.mode.iter().map(|&m| self.geometry.wavenumber(m).powi(2)).sum::<f64>().sqrt();
                let cmag = t.coeff.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                kmag * cmag
            })
            .sum()
    }

    fn divergence_residual_all(&self) -> f64 {
        self.terms()
            .iter()
            .map(|t| divergence_of_term(&self.geometry, t).norm())
            .fold(0.0, f64::max)
    }

    /// Sum of the Fourier series at `x` without the singularity guard.
    pub(crate) fn eval_series(&self, x: &[f64], terms: &[FourierTerm]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d];
        for t in terms {
            let phase: f64 = t.mode.iter().zip(x).map(|(&m, &xi)| self.geometry.wavenumber(m) * xi).sum();
            let e = Complex64::from_polar(1.0, phase);
            for (o, c) in out.iter_mut().zip(&t.coeff) {
                *o += (c * e).re;
            }
        }
        out
    }
}

fn divergence_of_term(geometry: &TorusGeometry, t: &FourierTerm) -> Complex64 {
    t.mode
        .iter()
        .zip(&t.coeff)
        .map(|(&m, c)| I * geometry.wavenumber(m) * c)
        .sum()
}

/// Fourier transform `int rho(x) exp(-i k.x) dx` of the unit-mass bump
/// `rho(x) ~ (1 - |x|^2)^2` on the unit ball, evaluated at `|k| = a`.
pub fn mollifier_hat(a: f64, dim: usize) -> f64 {
    let a = a.abs();
    match dim {
        1 if a < 2.0 => taylor_sum(-a * a, |k| (2 * k - 1) as f64 * (2 * k) as f64, |k| {
            let k = k as f64;
            15.0 / ((2.0 * k + 1.0) * (2.0 * k + 3.0) * (2.0 * k + 5.0))
        }),
        1 => 15.0 * (3.0 * a.sin() - 3.0 * a * a.cos() - a * a * a.sin()) / a.powi(5),
        2 if a < 4.0 => taylor_sum(-0.25 * a * a, |k| (k * k) as f64, |k| {
            let k = k as f64;
            6.0 / ((k + 1.0) * (k + 2.0) * (k + 3.0))
        }),
        2 => 48.0 * bessel_j(3, a) / a.powi(3),
        _ => unreachable!("kernels are defined for d = 1, 2"),
    }
}

/// `sum_k t_k w_k` with `t_0 = 1`, `t_k = t_{k-1} q / denom(k)`.
fn taylor_sum(q: f64, denom: impl Fn(usize) -> f64, weight: impl Fn(usize) -> f64) -> f64 {
    let mut t = 1.0;
    let mut s = weight(0);
    for k in 1..60 {
        t *= q / denom(k);
        let term = t * weight(k);
        s += term;
        if term.abs() < 1e-18 {
            break;
        }
    }
    s
}

/// Evaluate `K` at a min-image displacement.
pub fn eval_kernel(spec: &KernelSpec, displacement: &[f64]) -> Result<Vec<f64>> {
    let d = spec.dim();
    if displacement.len() != d {
        return Err(Error::domain(format!("displacement has {} components, kernel has d = {d}", displacement.len())));
    }
    match spec.variant {
        KernelVariant::Zero => return Ok(vec![0.0; d]),
        KernelVariant::Kuramoto => {
            return Ok(vec![-(2.0 * PI * displacement[0] / spec.geometry.length()).sin()]);
        }
        _ => {}
    }
    if spec.is_singular() {
        let r = displacement.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r < spec.guard_radius {
            return Err(Error::Singularity(format!(
                "|x| = {r:.3e} is inside the guard radius {:.3e} of {}",
                spec.guard_radius,
                spec.name()
            )));
        }
    }
    Ok(spec.eval_series(displacement, &spec.terms()))
}

pub fn fourier_coefficients(spec: &KernelSpec, mode: &[i64]) -> Vec<Complex64> {
    spec.fourier_coefficient(mode)
}

pub fn mollify(spec: &KernelSpec, epsilon: f64) -> Result<KernelSpec> {
    spec.mollify(epsilon)
}

/// Spectral `H^{-1}` norm `(sum_{0<|m|_inf<=cutoff} |c(m)|^2 / |k(m)|^2)^{1/2}`.
///
/// For a mean-zero field this is the infimum of `||phi||` over matrix potentials
/// with `div phi = K`, attained by `phi = grad Lap^{-1} K`, with `L^2` taken
/// against the normalized measure `dx / |T|^d`.
pub fn h_minus1_norm(spec: &KernelSpec, cutoff: usize) -> Result<f64> {
    let d = spec.dim();
    let mean = spec.fourier_coefficient(&vec![0; d]);
    if mean.iter().any(|c| c.norm() > 1e-14) {
        return Err(Error::domain("kernel has nonzero mean; its H^-1 norm is infinite"));
    }
    let geometry = spec.geometry();
    let cutoff = cutoff as i64;
    let mut sum = 0.0;
    for t in spec.terms() {
        if t.mode.iter().any(|m| m.abs() > cutoff) {
            continue;
        }
        let k2: f64 = t.mode.iter().map(|&m| geometry.wavenumber(m).powi(2)).sum();
        sum += t.coeff.iter().map(|c| c.norm_sqr()).sum::<f64>() / k2;
    }
    Ok(sum.sqrt())
}

/// `(K * f)(x) = int K(x - y) f(y) dy`, computed as `|T|^d c(m) f^(m)` per mode.
pub fn convolve(spec: &KernelSpec, field: &DensityField) -> Result<VectorField> {
    let grid = *field.grid();
    let d = spec.dim();
    if grid.total_dims() != d || grid.geometry() != spec.geometry() {
        return Err(Error::domain(format!(
            "field lives on T^{} (L = {}), kernel on T^{d} (L = {})",
            grid.total_dims(),
            grid.geometry().length(),
            spec.geometry().length()
        )));
    }
    let fhat = field.spectrum();
    let volume = spec.geometry().volume();
    let n = grid.points_per_dim();
    let mut components = Vec::with_capacity(d);
    let terms = spec.terms();
    for a in 0..d {
        let mut buf = vec![Complex64::default(); grid.len()];
        for t in &terms {
            if let Some(flat) = flat_slot(&grid, &t.mode) {
                buf[flat] = volume * t.coeff[a] * fhat[flat];
            }
        }
        fft_nd(&mut buf, n, d, Direction::Inverse);
        components.push(buf.iter().map(|c| c.re).collect());
    }
    Ok(VectorField { grid, components })
}

pub(crate) fn flat_slot(grid: &GridSpec, mode: &[i64]) -> Option<usize> {
    let n = grid.points_per_dim();
    let mut flat = 0;
    for &m in mode {
        flat = flat * n + grid.slot_of(m)?;
    }
    Some(flat)
}

/// Split `K = K+ + K-` into attractive and repulsive parts.
pub fn decompose(spec: &KernelSpec) -> Result<KernelDecomposition> {
    let zero = KernelSpec::zero(spec.geometry());
    let (k_plus, k_minus) = match &spec.variant {
        KernelVariant::Zero => (zero.clone(), zero),
        KernelVariant::Kuramoto | KernelVariant::AttractiveLog2D { .. } | KernelVariant::SmoothFourier { .. } => {
            (spec.clone(), zero)
        }
        KernelVariant::BiotSavart2D { .. } => {
            return Err(Error::Unsupported(
                "Biot-Savart is divergence-free and handled through its H^-1 norm; it has no attraction/repulsion split"
                    .into(),
            ))
        }
        KernelVariant::Mollified { base, epsilon } => {
            let inner = decompose(base)?;
            (inner.k_plus.mollify(*epsilon)?, inner.k_minus.mollify(*epsilon)?)
        }
    };
    let grid = GridSpec::single(spec.geometry(), 64)?;
    let minus_divergence_floor = divergence_on_grid(&k_minus, &grid).into_iter().fold(0.0, f64::min);
    let plus_sup = sup_on_grid(&k_plus, &grid);
    Ok(KernelDecomposition { k_plus, k_minus, minus_divergence_floor, plus_sup })
}

fn divergence_on_grid(spec: &KernelSpec, grid: &GridSpec) -> Vec<f64> {
    let mut buf = vec![Complex64::default(); grid.len()];
    for t in spec.terms() {
        if let Some(flat) = flat_slot(grid, &t.mode) {
            buf[flat] += divergence_of_term(&spec.geometry(), &t);
        }
    }
    fft_nd(&mut buf, grid.points_per_dim(), grid.total_dims(), Direction::Inverse);
    buf.iter().map(|c| c.re).collect()
}

fn sup_on_grid(spec: &KernelSpec, grid: &GridSpec) -> f64 {
    let terms = spec.terms();
    (0..grid.len())
        .map(|flat| {
            let x = grid.node(flat);
            spec.eval_series(&x, &terms).iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max)
}

/// `max_m |k(m) . c(m)|` over modes representable on `grid`; zero for divergence-free kernels.
pub fn check_divergence_free(spec: &KernelSpec, grid: &GridSpec) -> f64 {
    spec.terms()
        .iter()
        .filter(|t| flat_slot(grid, &t.mode).is_some())
        .map(|t| divergence_of_term(&spec.geometry(), t).norm())
        .fold(0.0, f64::max)
}

/// Direct min-image quadrature of `int K(x - y) f(y) dy`; a slow reference for tests.
pub fn convolve_by_quadrature(spec: &KernelSpec, field: &DensityField) -> Result<VectorField> {
    let grid = *field.grid();
    let d = spec.dim();
    let geometry = spec.geometry();
    let cell = grid.cell_volume();
    let nodes: Vec<Vec<f64>> = (0..grid.len()).map(|j| grid.node(j)).collect();
    let mut components = vec![vec![0.0; grid.len()]; d];
    for (i, xi) in nodes.iter().enumerate() {
        for (yj, fj) in nodes.iter().zip(field.values()) {
            let disp = min_image(xi, yj, &geometry);
            let k = eval_kernel(spec, &disp)?;
            for a in 0..d {
                components[a][i] += k[a] * fj * cell;
            }
        }
    }
    Ok(VectorField { grid, components })
}

/// Stationary order parameter helper shared with the mean-field module.
pub(crate) fn kuramoto_self_consistency(r: f64, sigma: f64) -> f64 {
    bessel_ratio_i1_i0(r / sigma) - r
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn circle() -> TorusGeometry {
        TorusGeometry::circle()
    }

    #[test]
    fn kuramoto_values() {
        let k = KernelSpec::kuramoto(2.0 * PI).unwrap();
        assert!((eval_kernel(&k, &[PI / 2.0]).unwrap()[0] + 1.0).abs() < 1e-15);
        assert_eq!(eval_kernel(&k, &[0.0]).unwrap()[0], 0.0);
        let z = KernelSpec::zero(TorusGeometry::new(2, 1.0).unwrap());
        assert_eq!(eval_kernel(&z, &[0.3, 0.1]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn kuramoto_series_matches_closed_form() {
        let k = KernelSpec::kuramoto(2.0 * PI).unwrap();
        let terms = k.terms();
        for x in [-3.0, -0.4, 0.2, 1.7, 3.1] {
            let series = k.eval_series(&[x], &terms)[0];
            assert!((series + f64::sin(x)).abs() < 1e-15);
        }
    }

    #[test]
    fn kuramoto_coefficients() {
        let k = KernelSpec::kuramoto(2.0 * PI).unwrap();
        assert_eq!(k.fourier_coefficient(&[1]), vec![Complex64::new(0.0, 0.5)]);
        assert_eq!(k.fourier_coefficient(&[-1]), vec![Complex64::new(0.0, -0.5)]);
        assert_eq!(k.fourier_coefficient(&[2]), vec![Complex64::default()]);
        let z = KernelSpec::zero(circle());
        assert!(z.terms().is_empty());
    }

    #[test]
    fn biot_savart_coefficients_are_conjugate_symmetric_and_orthogonal() {
        let k = KernelSpec::biot_savart(2.0 * PI, 8).unwrap();
        assert_eq!(k.fourier_coefficient(&[0, 0]), vec![Complex64::default(); 2]);
        for t in k.terms() {
            let neg: Vec<i64> = t.mode.iter().map(|m| -m).collect();
            let partner = k.fourier_coefficient(&neg);
            for (a, b) in t.coeff.iter().zip(&partner) {
                assert!((a - b.conj()).norm() < 1e-15);
            }
        }
        let grid = GridSpec::single(k.geometry(), 32).unwrap();
        assert!(check_divergence_free(&k, &grid) <= 1e-12);
        assert!(k.divergence_free());
    }

    #[test]
    fn divergence_audit_values() {
        let k = KernelSpec::kuramoto(2.0 * PI).unwrap();
        let grid = GridSpec::single(circle(), 16).unwrap();
        assert!((check_divergence_free(&k, &grid) - 0.5).abs() < 1e-15);
        assert_eq!(check_divergence_free(&KernelSpec::zero(circle()), &grid), 0.0);
    }

    #[test]
    fn smooth_fourier_validation() {
        let g = circle();
        let one_sided = vec![FourierTerm { mode: vec![1], coeff: vec![Complex64::new(0.0, 0.5)] }];
        assert!(KernelSpec::smooth_fourier(g, one_sided).is_err());
        let skew = vec![
            FourierTerm { mode: vec![1], coeff: vec![Complex64::new(0.0, 0.5)] },
            FourierTerm { mode: vec![-1], coeff: vec![Complex64::new(0.0, 0.5)] },
        ];
        assert!(KernelSpec::smooth_fourier(g, skew).is_err());
        let good = vec![
            FourierTerm { mode: vec![1], coeff: vec![Complex64::new(0.0, 0.5)] },
            FourierTerm { mode: vec![-1], coeff: vec![Complex64::new(0.0, -0.5)] },
        ];
        let k = KernelSpec::smooth_fourier(g, good).unwrap();
        assert!(!k.divergence_free());
        assert!((eval_kernel(&k, &[PI / 2.0]).unwrap()[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_guard() {
        let k = KernelSpec::biot_savart(1.0, 16).unwrap();
        assert!(matches!(eval_kernel(&k, &[1e-4, 0.0]), Err(Error::Singularity(_))));
        assert!(eval_kernel(&k, &[0.2, 0.1]).is_ok());
        let m = k.mollify(0.05).unwrap();
        assert!(eval_kernel(&m, &[0.0, 0.0]).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn h_minus1_examples() {
        let k = KernelSpec::kuramoto(2.0 * PI).unwrap();
        assert!((h_minus1_norm(&k, 4).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(h_minus1_norm(&KernelSpec::zero(circle()), 4).unwrap(), 0.0);
        let mean = vec![
            FourierTerm { mode: vec![0], coeff: vec![Complex64::new(1.0, 0.0)] },
        ];
        let shifted = KernelSpec::smooth_fourier(circle(), mean).unwrap();
        assert!(matches!(h_minus1_norm(&shifted, 4), Err(Error::Domain(_))));
    }

    #[test]
    fn h_minus1_is_monotone_in_cutoff() {
        let k = KernelSpec::attractive_log(2.0 * PI, 128).unwrap();
        let mut prev = 0.0;
        for c in [1, 2, 4, 8, 16, 32, 64, 128] {
            let v = h_minus1_norm(&k, c).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        let n64 = h_minus1_norm(&k, 64).unwrap();
        let n128 = h_minus1_norm(&k, 128).unwrap();
        assert!((n128 - n64) / n128 < 0.01);
    }

    #[test]
    fn mollified_h_minus1_contracts() {
        let k = KernelSpec::biot_savart(2.0 * PI, 64).unwrap();
        let m = k.mollify(0.2).unwrap();
        assert!(h_minus1_norm(&m, 64).unwrap() <= h_minus1_norm(&k, 64).unwrap());
    }

    #[test]
    fn mollifier_hat_branches_agree() {
        for dim in [1, 2] {
            let cut = if dim == 1 { 2.0 } else { 4.0 };
            let below = mollifier_hat(cut * (1.0 - 1e-15), dim);
            let above = mollifier_hat(cut, dim);
            assert!((below - above).abs() < 1e-12, "d={dim}: {below} vs {above}");
            assert_eq!(mollifier_hat(0.0, dim), 1.0);
        }
    }

    #[test]
    fn mollifier_hat_matches_quadrature() {
        // 1-D: direct midpoint quadrature of the normalized bump
        let n = 200_000;
        for a in [0.05, 0.7, 3.0, 11.0] {
            let h = 2.0 / n as f64;
            let mut s = 0.0;
            for j in 0..n {
                let u = -1.0 + (j as f64 + 0.5) * h;
                s += (1.0 - u * u).powi(2) * (a * u).cos() * h;
            }
            let want = s * 15.0 / 16.0;
            assert!((mollifier_hat(a, 1) - want).abs() < 1e-9, "a={a}");
        }
        // 2-D: radial quadrature against J0
        for a in [0.3, 2.0, 9.0] {
            let n = 20_000;
            let h = 1.0 / n as f64;
            let mut s = 0.0;
            for j in 0..n {
                let r = (j as f64 + 0.5) * h;
                s += (1.0 - r * r).powi(2) * bessel_j(0, a * r) * r * h;
            }
            let want = s * 6.0;
            assert!((mollifier_hat(a, 2) - want).abs() < 1e-8, "a={a}");
        }
    }

    #[test]
    fn mollified_kuramoto_converges_at_second_order() {
        let k = KernelSpec::kuramoto(2.0 * PI).unwrap();
        let errs: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&eps| {
                let m = k.mollify(eps).unwrap();
                (0..400)
                    .map(|j| {
                        let x = -PI + j as f64 * 2.0 * PI / 400.0;
                        (eval_kernel(&m, &[x]).unwrap()[0] - eval_kernel(&k, &[x]).unwrap()[0]).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.05, "observed order {order}");
        }
        let zero = KernelSpec::zero(circle()).mollify(0.1).unwrap();
        assert_eq!(eval_kernel(&zero, &[0.4]).unwrap(), vec![0.0]);
        assert!(matches!(k.mollify(0.0), Err(Error::Domain(_))));
        assert!(k.mollify(2.0).is_err());
    }

    #[test]
    fn mollification_contracts_every_mode() {
        for (k, eps) in [
            (KernelSpec::biot_savart(1.0, 12).unwrap(), 0.1),
            (KernelSpec::attractive_log(2.0 * PI, 12).unwrap(), 1.0),
            (KernelSpec::kuramoto(2.0 * PI).unwrap(), 1.2),
        ] {
            let m = k.mollify(eps).unwrap();
            for t in k.terms() {
                let a: f64 = t.coeff.iter().map(|c| c.norm_sqr()).sum();
                let b: f64 = m.fourier_coefficient(&t.mode).iter().map(|c| c.norm_sqr()).sum();
                assert!(b <= a * (1.0 + 1e-14));
            }
        }
    }

    #[test]
    fn convolution_examples() {
        let grid = GridSpec::single(circle(), 32).unwrap();
        let k = KernelSpec::kuramoto(2.0 * PI).unwrap();
        let uniform = DensityField::uniform(grid);
        assert!(convolve(&k, &uniform).unwrap().max_abs() < 1e-15);
        let zero = KernelSpec::zero(circle());
        let bump = DensityField::from_fn(grid, |x| (1.0 + x[0].cos()) / (2.0 * PI));
        assert_eq!(convolve(&zero, &bump).unwrap().max_abs(), 0.0);

        // int -sin(x - y) (1 + cos y) / (2 pi) dy = -sin(x) / 2
        let v = convolve(&k, &bump).unwrap();
        for (j, val) in v.components[0].iter().enumerate() {
            let x = grid.node(j)[0];
            assert!((val + 0.5 * x.sin()).abs() < 1e-14);
        }
        let q = convolve_by_quadrature(&k, &bump).unwrap();
        for (a, b) in v.components[0].iter().zip(&q.components[0]) {
            assert!((a - b).abs() < 1e-12);
        }

        let wrong = GridSpec::single(TorusGeometry::new(2, 2.0 * PI).unwrap(), 8).unwrap();
        assert!(convolve(&k, &DensityField::uniform(wrong)).is_err());
    }

    #[test]
    fn convolution_matches_quadrature_for_smooth_2d_kernel() {
        let k = KernelSpec::biot_savart(1.0, 3).unwrap().mollify(0.1).unwrap();
        let grid = GridSpec::single(k.geometry(), 32).unwrap();
        let f = DensityField::from_fn(grid, |x| {
            1.0 + 0.5 * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin() + 0.2 * (4.0 * PI * x[1]).cos()
        });
        let a = convolve(&k, &f).unwrap();
        let b = convolve_by_quadrature(&k, &f).unwrap();
        for c in 0..2 {
            for (u, v) in a.components[c].iter().zip(&b.components[c]) {
                assert!((u - v).abs() < 1e-8);
            }
        }
        // divergence-free kernel against a constant density
        let flat = DensityField::constant(grid, 1.0);
        assert!(convolve(&k, &flat).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn decomposition_examples() {
        let z = decompose(&KernelSpec::zero(circle())).unwrap();
        assert!(matches!(z.k_plus.variant(), KernelVariant::Zero));
        assert!(matches!(z.k_minus.variant(), KernelVariant::Zero));

        let terms = vec![
            FourierTerm { mode: vec![2], coeff: vec![Complex64::new(0.0, 0.25)] },
            FourierTerm { mode: vec![-2], coeff: vec![Complex64::new(0.0, -0.25)] },
        ];
        let s = KernelSpec::smooth_fourier(circle(), terms).unwrap();
        let ds = decompose(&s).unwrap();
        assert_eq!(ds.k_plus, s);
        assert!(matches!(ds.k_minus.variant(), KernelVariant::Zero));

        let log = KernelSpec::attractive_log(2.0 * PI, 16).unwrap();
        let dl = decompose(&log).unwrap();
        assert_eq!(dl.minus_divergence_floor, 0.0);
        assert!(dl.plus_sup > 0.0);
        let grid = GridSpec::single(log.geometry(), 32).unwrap();
        for j in (0..grid.len()).step_by(37) {
            let x = grid.node(j);
            let x: Vec<f64> = x.iter().map(|v| v + 0.1).collect();
            let whole = eval_kernel(&log, &x).unwrap();
            let plus = eval_kernel(&dl.k_plus, &x).unwrap();
            let minus = eval_kernel(&dl.k_minus, &x).unwrap();
            for a in 0..2 {
                assert!((plus[a] + minus[a] - whole[a]).abs() < 1e-10);
            }
        }

        let bs = KernelSpec::biot_savart(1.0, 4).unwrap();
        assert!(matches!(decompose(&bs), Err(Error::Unsupported(_))));
    }

    #[test]
    fn attractive_log_points_toward_source() {
        let k = KernelSpec::attractive_log(2.0 * PI, 64).unwrap();
        let v = eval_kernel(&k, &[0.3, 0.0]).unwrap();
        assert!(v[0] < 0.0, "{v:?}");
    }

    proptest! {
        #[test]
        fn kuramoto_is_odd(x in -10.0f64..10.0) {
            let k = KernelSpec::kuramoto(2.0 * PI).unwrap();
            let a = eval_kernel(&k, &[x]).unwrap()[0];
            let b = eval_kernel(&k, &[-x]).unwrap()[0];
            prop_assert!((a + b).abs() < 1e-15);
        }
    }
}
