//! Periodic geometry on the flat torus `T^n = [0, L)^n`.
//!
//! Grids are uniform with `points_per_dim` nodes per coordinate at
//! `x_j = j * L / points_per_dim`, stored row-major (last coordinate fastest).
//! Spectral coefficients use the mean-normalized convention
//!
//! ```text
//! f(x) = sum_m c(m) exp(i k(m) . x),   k(m) = 2 pi m / L,
//! c(m) = (1 / n^dims) sum_j f(x_j) exp(-i k(m) . x_j)
//! ```
//!
//! so that `c(0)` is the grid mean and the mass is `c(0) * L^dims`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Largest number of nodes a single grid may hold.
pub const MAX_GRID_POINTS: usize = 1 << 22;
/// Largest joint dimension `k * d` of any grid.
pub const MAX_TOTAL_DIMS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusGeometry {
    dim: usize,
    length: f64,
}

impl TorusGeometry {
    pub fn new(dim: usize, length: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("torus dimension must be at least 1"));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::domain(format!("torus length must be positive, got {length}")));
        }
        Ok(Self { dim, length })
    }

    /// The circle `[0, 2 pi)` used by the Kuramoto experiments.
    pub fn circle() -> Self {
        Self { dim: 1, length: 2.0 * PI }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Wavenumber `2 pi m / L` of the integer mode `m`.
    pub fn wavenumber(&self, m: i64) -> f64 {
        2.0 * PI * m as f64 / self.length
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    geometry: TorusGeometry,
    points_per_dim: usize,
    total_dims: usize,
}

impl GridSpec {
    /// A grid on `T^{total_dims}` built from `geometry` (with `total_dims = k * d`
    /// for a joint grid of `k` particles).
    pub fn new(geometry: TorusGeometry, points_per_dim: usize, total_dims: usize) -> Result<Self> {
        if points_per_dim < 4 || !points_per_dim.is_power_of_two() {
            return Err(Error::domain(format!(
                "points_per_dim must be a power of two >= 4, got {points_per_dim}"
            )));
        }
        if total_dims == 0 || total_dims % geometry.dim() != 0 {
            return Err(Error::domain(format!(
                "total_dims {total_dims} is not a positive multiple of d = {}",
                geometry.dim()
            )));
        }
        if total_dims > MAX_TOTAL_DIMS {
            return Err(Error::Resource(format!(
                "grid with {total_dims} dimensions exceeds the limit of {MAX_TOTAL_DIMS}"
            )));
        }
        let total = (points_per_dim as u128).pow(total_dims as u32);
        if total > MAX_GRID_POINTS as u128 {
            return Err(Error::Resource(format!(
                "grid with {total_dims} dimensions at {points_per_dim} points each needs {total} nodes (limit {MAX_GRID_POINTS})"
            )));
        }
        Ok(Self { geometry, points_per_dim, total_dims })
    }

    /// A grid on the base torus `T^d` itself.
    pub fn single(geometry: TorusGeometry, points_per_dim: usize) -> Result<Self> {
        Self::new(geometry, points_per_dim, geometry.dim())
    }

    pub fn geometry(&self) -> TorusGeometry {
        self.geometry
    }

    pub fn points_per_dim(&self) -> usize {
        self.points_per_dim
    }

    pub fn total_dims(&self) -> usize {
        self.total_dims
    }

    /// Number of particle blocks `k` of the joint grid.
    pub fn blocks(&self) -> usize {
        self.total_dims / self.geometry.dim()
    }

    pub fn len(&self) -> usize {
        self.points_per_dim.pow(self.total_dims as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.geometry.length() / self.points_per_dim as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.total_dims as i32)
    }

    pub fn volume(&self) -> f64 {
        self.geometry.length().powi(self.total_dims as i32)
    }

    /// Same geometry and resolution on `blocks * d` dimensions.
    pub fn with_blocks(&self, blocks: usize) -> Result<Self> {
        Self::new(self.geometry, self.points_per_dim, blocks * self.geometry.dim())
    }

    /// Multi-index of the flat node index `flat`.
    pub fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        let n = self.points_per_dim;
        for slot in out.iter_mut().rev() {
            *slot = flat % n;
            flat /= n;
        }
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.total_dims];
        self.multi_index(flat, &mut idx);
        let h = self.spacing();
        idx.iter().map(|&i| i as f64 * h).collect()
    }

    /// Integer mode carried by FFT slot `i` along one axis (Nyquist maps to `-n/2`).
    pub fn mode_of(&self, i: usize) -> i64 {
        let n = self.points_per_dim;
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    /// Slot along one axis holding integer mode `m`, if it is representable.
    pub fn slot_of(&self, m: i64) -> Option<usize> {
        let n = self.points_per_dim as i64;
        if m >= n / 2 || m < -n / 2 {
            None
        } else {
            Some(m.rem_euclid(n) as usize)
        }
    }

    /// Integer mode vector of the flat spectral slot `flat`.
    pub fn modes_of(&self, flat: usize, out: &mut [i64]) {
        let mut idx = vec![0; self.total_dims];
        self.multi_index(flat, &mut idx);
        for (o, i) in out.iter_mut().zip(idx) {
            *o = self.mode_of(i);
        }
    }
}

/// Reduce `x` modulo `length` into `[0, length)`.
pub fn wrap_coord(x: f64, length: f64) -> f64 {
    let r = x.rem_euclid(length);
    // rem_euclid of a tiny negative number rounds up to `length` itself
    if r >= length {
        0.0
    } else {
        r
    }
}

pub fn wrap(x: &mut [f64], geometry: &TorusGeometry) {
    for c in x.iter_mut() {
        *c = wrap_coord(*c, geometry.length());
    }
}

/// Signed shortest displacement `x - y` on a circle of circumference `length`,
/// in `[-length/2, length/2)`; exact half-length ties map to `-length/2`.
pub fn min_image_coord(x: f64, y: f64, length: f64) -> f64 {
    let half = 0.5 * length;
    let r = (x - y + half).rem_euclid(length) - half;
    if r >= half {
        r - length
    } else {
        r
    }
}

pub fn min_image(x: &[f64], y: &[f64], geometry: &TorusGeometry) -> Vec<f64> {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| min_image_coord(a, b, geometry.length()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Real grid function on `T^{total_dims}` with a lazily computed spectrum.
#[derive(Debug, Clone)]
pub struct DensityField {
    grid: GridSpec,
    values: Vec<f64>,
    spectral: OnceLock<Vec<Complex64>>,
}

impl DensityField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::domain(format!(
                "field has {} values but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values, spectral: OnceLock::new() })
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()], spectral: OnceLock::new() }
    }

    /// The normalized uniform density `1 / |T|^{total_dims}`.
    pub fn uniform(grid: GridSpec) -> Self {
        Self::constant(grid, 1.0 / grid.volume())
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut idx = vec![0usize; grid.total_dims()];
        let mut x = vec![0.0; grid.total_dims()];
        let h = grid.spacing();
        let values = (0..grid.len())
            .map(|flat| {
                grid.multi_index(flat, &mut idx);
                for (xi, &i) in x.iter_mut().zip(&idx) {
                    *xi = i as f64 * h;
                }
                f(&x)
            })
            .collect();
        Self { grid, values, spectral: OnceLock::new() }
    }

    /// Field whose mean-normalized coefficients are `coeffs` (real part of the synthesis).
    pub fn from_spectrum(grid: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::domain("spectrum length does not match grid"));
        }
        let mut buf = coeffs.clone();
        fft_nd(&mut buf, grid.points_per_dim(), grid.total_dims(), Direction::Inverse);
        let values = buf.iter().map(|c| c.re).collect();
        let spectral = OnceLock::new();
        let _ = spectral.set(coeffs);
        Ok(Self { grid, values, spectral })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the nodal values; drops any cached spectrum.
    pub fn values_mut(&mut self) -> &mut [f64] {
        self.spectral.take();
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn spectrum(&self) -> &[Complex64] {
        self.spectral.get_or_init(|| {
            let mut buf: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fft_nd(&mut buf, self.grid.points_per_dim(), self.grid.total_dims(), Direction::Forward);
            buf
        })
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `(int |f|^p)^{1/p}` by the midpoint rule; `p = f64::INFINITY` gives `max |f|`.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        lp_norm_of(&self.values, self.grid.cell_volume(), p)
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * lambda).collect(),
            spectral: OnceLock::new(),
        }
    }

    /// Pointwise difference `self - other` on a shared grid.
    pub fn difference(&self, other: &DensityField) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::domain("fields live on different grids"));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self { grid: self.grid, values, spectral: OnceLock::new() })
    }
}

/// Refresh one side of a field from the other.
pub fn transform(field: &DensityField, direction: Direction) -> DensityField {
    match direction {
        Direction::Forward => {
            let out = field.clone();
            out.spectrum();
            out
        }
        Direction::Inverse => {
            let coeffs = field.spectrum().to_vec();
            DensityField::from_spectrum(field.grid, coeffs).expect("spectrum length matches grid")
        }
    }
}

pub(crate) fn lp_norm_of(values: &[f64], cell_volume: f64, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::domain(format!("L^p norm needs p >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let s: f64 = if p == 1.0 {
        values.iter().map(|v| v.abs()).sum()
    } else if p == 2.0 {
        values.iter().map(|v| v * v).sum()
    } else {
        values.iter().map(|v| v.abs().powf(p)).sum()
    };
    Ok((s * cell_volume).powf(1.0 / p))
}

fn plan(n: usize, direction: Direction) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let forward = direction == Direction::Forward;
    let mut cache = PLANS.get_or_init(Default::default).lock().expect("fft plan cache poisoned");
    cache
        .entry((n, forward))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if forward {
                planner.plan_fft_forward(n)
            } else {
                planner.plan_fft_inverse(n)
            }
        })
        .clone()
}

/// In-place multidimensional DFT on a row-major `[n; dims]` array.
///
/// The forward direction carries the `1 / n^dims` factor; the inverse is unscaled.
pub fn fft_nd(data: &mut [Complex64], n: usize, dims: usize, direction: Direction) {
    debug_assert_eq!(data.len(), n.pow(dims as u32));
    let fft = plan(n, direction);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let total = data.len();
    for axis in 0..dims {
        let stride = n.pow((dims - 1 - axis) as u32);
        if stride == 1 {
            fft.process_with_scratch(data, &mut scratch);
            continue;
        }
        // gather all lines along `axis` into a contiguous buffer, transform, scatter back
        let block = stride * n;
        let mut lines = vec![Complex64::default(); total];
        for (b, chunk) in data.chunks(block).enumerate() {
            for s in 0..stride {
                let dst = &mut lines[(b * stride + s) * n..(b * stride + s + 1) * n];
                for (j, d) in dst.iter_mut().enumerate() {
                    *d = chunk[j * stride + s];
                }
            }
        }
        fft.process_with_scratch(&mut lines, &mut scratch);
        for (b, chunk) in data.chunks_mut(block).enumerate() {
            for s in 0..stride {
                let src = &lines[(b * stride + s) * n..(b * stride + s + 1) * n];
                for (j, v) in src.iter().enumerate() {
                    chunk[j * stride + s] = *v;
                }
            }
        }
    }
    if direction == Direction::Forward {
        let scale = 1.0 / total as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(points: usize, length: f64) -> GridSpec {
        GridSpec::single(TorusGeometry::new(1, length).unwrap(), points).unwrap()
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_coord(0.3, 1.0), 0.3);
        assert!((wrap_coord(1.3, 1.0) - 0.3).abs() < 1e-15);
        let l = 2.0 * PI;
        assert!((wrap_coord(-0.25, l) - (l - 0.25)).abs() < 1e-15);
        assert_eq!(wrap_coord(-1e-18, 1.0), 0.0);
    }

    #[test]
    fn min_image_examples() {
        assert!((min_image_coord(0.1, 0.9, 1.0) - 0.2).abs() < 1e-15);
        assert_eq!(min_image_coord(0.4, 0.4, 1.0), 0.0);
        assert_eq!(min_image_coord(0.75, 0.25, 1.0), -0.5);
        assert_eq!(min_image_coord(0.25, 0.75, 1.0), -0.5);
    }

    #[test]
    fn geometry_rejects_bad_input() {
        assert!(TorusGeometry::new(0, 1.0).is_err());
        assert!(TorusGeometry::new(1, 0.0).is_err());
        let g = TorusGeometry::new(1, 1.0).unwrap();
        assert!(GridSpec::single(g, 6).is_err());
        assert!(GridSpec::single(g, 2).is_err());
        match GridSpec::new(g, 128, 4) {
            Err(Error::Resource(msg)) => assert!(msg.contains("4 dimensions")),
            other => panic!("expected resource error, got {other:?}"),
        }
        assert!(GridSpec::new(g, 64, 5).is_err());
        assert!(GridSpec::new(g, 8, 4).is_ok());
    }

    #[test]
    fn volume_is_integral_of_one() {
        let g = TorusGeometry::new(2, 3.0).unwrap();
        let grid = GridSpec::single(g, 16).unwrap();
        let one = DensityField::constant(grid, 1.0);
        assert!((one.mass() - g.volume()).abs() < 1e-12);
        assert!((grid.volume() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn constant_field_spectrum() {
        let grid = line(32, 1.0);
        let f = DensityField::constant(grid, 2.5);
        let s = f.spectrum();
        assert!((s[0].re - 2.5).abs() < 1e-14);
        assert!(s[1..].iter().all(|c| c.norm() <= 1e-13));
    }

    #[test]
    fn cosine_has_two_modes() {
        let l = 3.0;
        let grid = line(64, l);
        let f = DensityField::from_fn(grid, |x| (2.0 * PI * x[0] / l).cos());
        let s = f.spectrum();
        for (i, c) in s.iter().enumerate() {
            let m = grid.mode_of(i);
            if m.abs() == 1 {
                assert!((c.re - 0.5).abs() < 1e-14 && c.im.abs() < 1e-14);
            } else {
                assert!(c.norm() < 1e-14, "mode {m} = {c}");
            }
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dims in 1..=3 {
            let g = TorusGeometry::new(dims, 1.7).unwrap();
            let grid = GridSpec::single(g, 16).unwrap();
            for _ in 0..100 {
                let values: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let f = DensityField::new(grid, values.clone()).unwrap();
                let back = transform(&transform(&f, Direction::Forward), Direction::Inverse);
                let err = back.values().iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err <= 1e-12, "round trip error {err}");
                let physical: f64 = values.iter().map(|v| v * v).sum::<f64>() * grid.cell_volume();
                let spectral: f64 = f.spectrum().iter().map(|c| c.norm_sqr()).sum::<f64>() * grid.volume();
                assert!(((physical - spectral) / physical).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn lp_norm_examples() {
        let g = TorusGeometry::new(1, 2.0).unwrap();
        let grid = GridSpec::new(g, 16, 2).unwrap();
        let u = DensityField::uniform(grid);
        assert!((u.lp_norm(2.0).unwrap() - 2f64.powf(-1.0)).abs() < 1e-14);
        assert!((u.lp_norm(1.0).unwrap() - 1.0).abs() < 1e-14);

        let s = DensityField::from_fn(line(64, 1.0), |x| (2.0 * PI * x[0]).sin());
        assert!((s.lp_norm(2.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((s.lp_norm(f64::INFINITY).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(s.lp_norm(0.5), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent(x in -1e3f64..1e3, l in 0.1f64..10.0) {
            let w = wrap_coord(x, l);
            prop_assert!((0.0..l).contains(&w));
            prop_assert_eq!(wrap_coord(w, l), w);
            let k = ((x - w) / l).round();
            prop_assert!((x - w - k * l).abs() < 1e-9 * (1.0 + x.abs()));
        }

        #[test]
        fn min_image_is_antisymmetric(x in 0.0f64..1.0, y in 0.0f64..1.0) {
            let d = min_image_coord(x, y, 1.0);
            prop_assert!((-0.5..0.5).contains(&d));
            if d != -0.5 {
                prop_assert!((d + min_image_coord(y, x, 1.0)).abs() < 1e-12);
            }
        }

        #[test]
        fn lp_norm_is_homogeneous(lambda in 0.01f64..100.0, p in 1.0f64..6.0) {
            let f = DensityField::from_fn(line(32, 1.0), |x| 1.0 + (2.0 * PI * x[0]).sin());
            let a = f.scaled(lambda).lp_norm(p).unwrap();
            let b = lambda * f.lp_norm(p).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * b);
        }
    }
}
