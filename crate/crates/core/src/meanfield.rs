//! Pseudo-spectral solver for the nonlinear mean-field equation
//!
//! ```text
//! d_t f + div((K * f) f) = sigma Lap f
//! ```
//!
//! in `d = 1, 2`, and the stationary Kuramoto states.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernels::{flat_slot, kuramoto_self_consistency, KernelSpec, KernelVariant};
use crate::spectral::{if_rk2, SpectralGrid};
use crate::special::bessel_i0_scaled;
use crate::torus::{DensityField, GridSpec, TorusGeometry};

/// Resolution used for [`StationaryKuramoto::density`].
pub const KURAMOTO_GRID_POINTS: usize = 256;
/// Courant number of the transport guard `|K*f|_max dt <= CFL * spacing`.
pub const CFL: f64 = 0.5;
/// Most-negative value tolerated before a resolution warning.
pub const NEGATIVITY_WARNING: f64 = -1e-8;

#[derive(Debug, Clone)]
pub struct MeanFieldState {
    pub field: DensityField,
    pub time: f64,
}

/// Precomputed tables for repeated steps with one kernel on one grid.
#[derive(Debug, Clone)]
pub struct MeanFieldSolver {
    sg: SpectralGrid,
    /// `|T|^d c_a(m)` per axis and flat mode.
    coeffs: Vec<Vec<Complex64>>,
    sigma: f64,
    interacting: bool,
}

impl MeanFieldSolver {
    pub fn new(grid: GridSpec, kernel: &KernelSpec, sigma: f64) -> Result<Self> {
        let d = kernel.dim();
        if grid.total_dims() != d || grid.geometry() != kernel.geometry() {
            return Err(Error::domain(format!(
                "grid on T^{} (L = {}) does not match kernel {} on T^{d}",
                grid.total_dims(),
                grid.geometry().length(),
                kernel.name()
            )));
        }
        if d == 2 && !kernel.divergence_free() {
            return Err(Error::Unsupported(format!(
                "the 2-D mean-field solver needs a divergence-free kernel, got {}",
                kernel.name()
            )));
        }
        if !(sigma >= 0.0) {
            return Err(Error::domain(format!("sigma must be non-negative, got {sigma}")));
        }
        let volume = kernel.geometry().volume();
        let mut coeffs = vec![vec![Complex64::default(); grid.len()]; d];
        let terms = kernel.terms();
        for t in &terms {
            if let Some(flat) = flat_slot(&grid, &t.mode) {
                for (a, c) in t.coeff.iter().enumerate() {
                    coeffs[a][flat] = volume * c;
                }
            }
        }
        Ok(Self {
            sg: SpectralGrid::new(grid),
            coeffs,
            sigma,
            interacting: !matches!(kernel.variant(), KernelVariant::Zero) && !terms.is_empty(),
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.sg.grid
    }

    /// Velocity `K * f` on the grid from a spectrum.
    fn velocity(&self, fhat: &[Complex64]) -> Vec<Vec<f64>> {
        self.coeffs
            .iter()
            .map(|c| {
                let prod: Vec<Complex64> = c.iter().zip(fhat).map(|(a, b)| a * b).collect();
                self.sg.to_physical(&prod)
            })
            .collect()
    }

    fn transport(&self, fhat: &[Complex64], dealias: bool) -> (Vec<Complex64>, f64) {
        if !self.interacting {
            return (vec![Complex64::default(); fhat.len()], 0.0);
        }
        let mut g = fhat.to_vec();
        if dealias {
            self.sg.dealias(&mut g);
        }
        let f = self.sg.to_physical(&g);
        let u = self.velocity(&g);
        let umax = u.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let refs: Vec<&[f64]> = u.iter().map(Vec::as_slice).collect();
        (self.sg.minus_divergence(&refs, &f, dealias), umax)
    }

    /// Largest step the transport guard admits for `state`.
    pub fn max_stable_dt(&self, state: &MeanFieldState) -> f64 {
        let (_, umax) = self.transport(state.field.spectrum(), true);
        if umax == 0.0 {
            f64::INFINITY
        } else {
            CFL * self.sg.grid.spacing() / umax
        }
    }

    pub fn step(&self, state: &MeanFieldState, dt: f64) -> Result<MeanFieldState> {
        if state.field.grid() != self.grid() {
            return Err(Error::domain("state and solver grids differ"));
        }
        if !(dt > 0.0) {
            return Err(Error::domain(format!("dt must be positive, got {dt}")));
        }
        let factors = self.sg.heat_factors(self.sigma, dt);
        let spacing = self.sg.grid.spacing();
        let mut first = true;
        let next = if_rk2(state.field.spectrum(), &factors, dt, |fhat| {
            let (n, umax) = self.transport(fhat, true);
            if first && umax * dt > CFL * spacing {
                return Err(Error::StepSize { dt, suggested: CFL * spacing / umax });
            }
            first = false;
            Ok(n)
        })?;
        let field = DensityField::from_spectrum(*self.grid(), next)?;
        if field.min_value() < NEGATIVITY_WARNING {
            log::warn!(
                "mean-field density reached {:e} at t = {}; the grid may be under-resolved",
                field.min_value(),
                state.time + dt
            );
        }
        Ok(MeanFieldState { field, time: state.time + dt })
    }

    /// `|| div((K*f) f) - sigma Lap f ||_{L^2}` without dealiasing.
    pub fn stationary_residual(&self, field: &DensityField) -> Result<f64> {
        if field.grid() != self.grid() {
            return Err(Error::domain("field and solver grids differ"));
        }
        let fhat = field.spectrum();
        let (n, _) = self.transport(fhat, false);
        let lap = self.sg.laplacian(fhat, self.sigma);
        let r: Vec<Complex64> = n.iter().zip(&lap).map(|(a, b)| a + b).collect();
        Ok(self.sg.l2_of_spectrum(&r))
    }
}

/// One integrating-factor RK2 step of the mean-field equation.
pub fn vfp_step(state: &MeanFieldState, kernel: &KernelSpec, sigma: f64, dt: f64) -> Result<MeanFieldState> {
    MeanFieldSolver::new(*state.field.grid(), kernel, sigma)?.step(state, dt)
}

#[derive(Debug, Clone)]
pub struct MeanFieldRun {
    pub states: Vec<MeanFieldState>,
    /// `||f(t)||_{L^2}` at each output time.
    pub l2_monitor: Vec<f64>,
}

/// Integrate from `initial` at `t = 0` and record the state at each of `t_grid`.
///
/// Steps have size `dt` except a shortened last step landing on each output time.
pub fn solve(
    initial: &DensityField,
    kernel: &KernelSpec,
    sigma: f64,
    t_grid: &[f64],
    dt: f64,
) -> Result<MeanFieldRun> {
    if (initial.mass() - 1.0).abs() > 1e-8 || initial.min_value() < NEGATIVITY_WARNING {
        return Err(Error::domain("initial datum is not a probability density"));
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) || t_grid.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::domain("output times must be sorted and non-negative"));
    }
    let mut run = MeanFieldRun { states: Vec::new(), l2_monitor: Vec::new() };
    if t_grid.is_empty() {
        return Ok(run);
    }
    let solver = MeanFieldSolver::new(*initial.grid(), kernel, sigma)?;
    let mut state = MeanFieldState { field: initial.clone(), time: 0.0 };
    let mut steps: u64 = 0;
    for &target in t_grid {
        loop {
            let remaining = target - state.time;
            if remaining <= 1e-12 * target.max(1.0) {
                break;
            }
            let next_time = (steps + 1) as f64 * dt;
            if next_time <= target + 1e-12 * target.max(1.0) {
                state = solver.step(&state, next_time - state.time)?;
                state.time = next_time;
                steps += 1;
            } else {
                state = solver.step(&state, remaining)?;
                state.time = target;
            }
        }
        run.l2_monitor.push(state.field.lp_norm(2.0)?);
        run.states.push(state.clone());
    }
    Ok(run)
}

/// `|| div((K*f) f) - sigma Lap f ||_{L^2}` computed spectrally.
pub fn stationary_residual(field: &DensityField, kernel: &KernelSpec, sigma: f64) -> Result<f64> {
    MeanFieldSolver::new(*field.grid(), kernel, sigma)?.stationary_residual(field)
}

#[derive(Debug, Clone)]
pub struct StationaryKuramoto {
    pub sigma: f64,
    pub order_parameter: f64,
    pub phase: f64,
    pub density: DensityField,
}

impl StationaryKuramoto {
    /// `exp(kappa cos(x - phase)) / (2 pi I0(kappa))`, `kappa = r / sigma`, on `grid`.
    pub fn density_on(&self, grid: GridSpec) -> Result<DensityField> {
        if grid.geometry() != TorusGeometry::circle() || grid.total_dims() != 1 {
            return Err(Error::domain("the Kuramoto state lives on the circle of length 2 pi"));
        }
        let kappa = self.order_parameter / self.sigma;
        let norm = 2.0 * PI * bessel_i0_scaled(kappa);
        let phase = self.phase;
        Ok(DensityField::from_fn(grid, |x| (kappa * ((x[0] - phase).cos() - 1.0)).exp() / norm))
    }

    pub fn self_consistency_residual(&self) -> f64 {
        kuramoto_self_consistency(self.order_parameter, self.sigma).abs()
    }
}

/// Largest root of `r = I1(r/sigma) / I0(r/sigma)` in `[0, 1]`, and its density.
pub fn kuramoto_stationary(sigma: f64) -> Result<StationaryKuramoto> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::domain(format!("sigma must be positive, got {sigma}")));
    }
    let g = |r: f64| kuramoto_self_consistency(r, sigma);
    // scan down from r = 1 for the last sign change; g(1) < 0 always
    const SCAN: usize = 2000;
    let mut bracket = None;
    let mut hi = 1.0;
    for j in (1..SCAN).rev() {
        let lo = j as f64 / SCAN as f64;
        if g(lo) > 0.0 {
            bracket = Some((lo, hi));
            break;
        }
        hi = lo;
    }
    let r = match bracket {
        None => 0.0,
        Some((mut lo, mut hi)) => {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if g(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    };
    let mut state = StationaryKuramoto {
        sigma,
        order_parameter: r,
        phase: 0.0,
        density: DensityField::uniform(GridSpec::single(TorusGeometry::circle(), KURAMOTO_GRID_POINTS)?),
    };
    state.density = state.density_on(*state.density.grid())?;
    Ok(state)
}

/// One `x_0,...,value` row per grid node.
pub fn write_field_csv(w: &mut impl Write, field: &DensityField) -> Result<()> {
    let grid = field.grid();
    let dims = grid.total_dims();
    let cols: Vec<String> = (0..dims).map(|a| format!("x{a}")).collect();
    writeln!(w, "{},value", cols.join(","))?;
    for (flat, v) in field.values().iter().enumerate() {
        let x: Vec<String> = grid.node(flat).iter().map(|c| format!("{c:.12e}")).collect();
        writeln!(w, "{},{v:.17e}", x.join(","))?;
    }
    Ok(())
}

/// JSON array of `{"mode": [...], "re": .., "im": ..}` for every grid mode.
pub fn write_spectrum_json(w: &mut impl Write, field: &DensityField) -> Result<()> {
    let grid = field.grid();
    let mut modes = vec![0i64; grid.total_dims()];
    write!(w, "[")?;
    for (flat, c) in field.spectrum().iter().enumerate() {
        grid.modes_of(flat, &mut modes);
        let m: Vec<String> = modes.iter().map(|v| v.to_string()).collect();
        let sep = if flat == 0 { "" } else { "," };
        write!(w, "{sep}\n  {{\"mode\": [{}], \"re\": {:e}, \"im\": {:e}}}", m.join(", "), c.re, c.im)?;
    }
    writeln!(w, "\n]")?;
    Ok(())
}
