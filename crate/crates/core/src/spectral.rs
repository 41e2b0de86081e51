//! Shared pseudo-spectral machinery: wavenumber tables, 2/3-rule dealiasing
//! and the integrating-factor Heun step used by both PDE solvers.

use num_complex::Complex64;

use crate::torus::{fft_nd, Direction, GridSpec};

pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone)]
pub(crate) struct SpectralGrid {
    pub grid: GridSpec,
    /// `k` per flat index and axis, `[len][dims]` flattened.
    wavenumbers: Vec<f64>,
    keep: Vec<bool>,
}

impl SpectralGrid {
    pub fn new(grid: GridSpec) -> Self {
        let dims = grid.total_dims();
        let n = grid.points_per_dim();
        let geometry = grid.geometry();
        let limit = (n / 3) as i64;
        let mut wavenumbers = Vec::with_capacity(grid.len() * dims);
        let mut keep = Vec::with_capacity(grid.len());
        let mut modes = vec![0i64; dims];
        for flat in 0..grid.len() {
            grid.modes_of(flat, &mut modes);
            let mut inside = true;
            for &m in &modes {
                wavenumbers.push(geometry.wavenumber(m));
                inside &= m.abs() <= limit;
            }
            keep.push(inside);
        }
        Self { grid, wavenumbers, keep }
    }

    pub fn dims(&self) -> usize {
        self.grid.total_dims()
    }

    pub fn k(&self, flat: usize, axis: usize) -> f64 {
        self.wavenumbers[flat * self.dims() + axis]
    }

    pub fn k2(&self, flat: usize) -> f64 {
        let d = self.dims();
        self.wavenumbers[flat * d..(flat + 1) * d].iter().map(|k| k * k).sum()
    }

    pub fn dealias(&self, buf: &mut [Complex64]) {
        for (v, &keep) in buf.iter_mut().zip(&self.keep) {
            if !keep {
                *v = Complex64::default();
            }
        }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        fft_nd(buf, self.grid.points_per_dim(), self.dims(), Direction::Forward);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        fft_nd(buf, self.grid.points_per_dim(), self.dims(), Direction::Inverse);
    }

    /// Physical values of a (Hermitian) spectrum.
    pub fn to_physical(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut buf = spectrum.to_vec();
        self.inverse(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// `-sum_a d_a (u_a f)` in spectral form; `u` and `f` are physical.
    pub fn minus_divergence(&self, velocities: &[&[f64]], f: &[f64], dealias: bool) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); self.grid.len()];
        let mut buf = vec![Complex64::default(); self.grid.len()];
        for (axis, u) in velocities.iter().enumerate() {
            for ((b, &ui), &fi) in buf.iter_mut().zip(u.iter()).zip(f) {
                *b = Complex64::new(ui * fi, 0.0);
            }
            self.forward(&mut buf);
            for (flat, (o, b)) in out.iter_mut().zip(&buf).enumerate() {
                *o -= I * self.k(flat, axis) * b;
            }
        }
        if dealias {
            self.dealias(&mut out);
        }
        out
    }

    /// `exp(-sigma |k|^2 dt)` per mode.
    pub fn heat_factors(&self, sigma: f64, dt: f64) -> Vec<f64> {
        (0..self.grid.len()).map(|flat| (-sigma * self.k2(flat) * dt).exp()).collect()
    }

    /// `sigma * Laplacian` in spectral form.
    pub fn laplacian(&self, spectrum: &[Complex64], sigma: f64) -> Vec<Complex64> {
        spectrum.iter().enumerate().map(|(flat, c)| -sigma * self.k2(flat) * c).collect()
    }

    /// `sqrt(int |g|^2)` of a mean-normalized spectrum by Parseval.
    pub fn l2_of_spectrum(&self, spectrum: &[Complex64]) -> f64 {
        (self.grid.volume() * spectrum.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt()
    }
}

/// One Heun step for `f' = sigma Lap f + N(f)` with the diffusion integrated exactly:
///
/// ```text
/// f1    = E (f + dt N(f))
/// f_new = E f + dt/2 (E N(f) + N(f1))
/// ```
pub(crate) fn if_rk2<E>(
    fhat: &[Complex64],
    factors: &[f64],
    dt: f64,
    mut nonlinear: impl FnMut(&[Complex64]) -> Result<Vec<Complex64>, E>,
) -> Result<Vec<Complex64>, E> {
    let n0 = nonlinear(fhat)?;
    let f1: Vec<Complex64> = fhat
        .iter()
        .zip(&n0)
        .zip(factors)
        .map(|((f, n), e)| (f + dt * n) * e)
        .collect();
    let n1 = nonlinear(&f1)?;
    Ok(fhat
        .iter()
        .zip(&n0)
        .zip(&n1)
        .zip(factors)
        .map(|(((f, a), b), e)| e * f + 0.5 * dt * (e * a + b))
        .collect())
}
