//! Euler–Maruyama ensembles of the N-particle system
//!
//! ```text
//! dX_i = (1/N) sum_{j != i} K(X_i - X_j) dt + sqrt(2 sigma) dW_i
//! ```
//!
//! on `T^d`, run as `M` independent replicas.
//!
//! Noise is counter-based: the Gaussian increment of coordinate `a` of particle
//! `p` at step `s` in replica `r` is a pure function of `(seed, r, s, p, a)`.
//! Concretely it is drawn from the ChaCha8 stream `r` keyed by `seed`, starting
//! at word `(s * N + p) * 4`; every particle-step consumes exactly four 32-bit
//! words (one Box–Muller pair per two coordinates). Results therefore do not
//! depend on how replicas are scheduled across threads, and a run can be
//! resumed from any step.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{eval_kernel, FourierTerm, KernelSpec, KernelVariant};
use crate::torus::{min_image, wrap_coord, DensityField, TorusGeometry};

/// Magic bytes of the binary snapshot format.
pub const SNAPSHOT_MAGIC: &[u8; 8] = b"CHLBSNAP";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Mass tolerance for densities handed to the sampler.
pub const TOL_MASS: f64 = 1e-6;
/// Negativity tolerance for densities handed to the sampler.
pub const TOL_NEG: f64 = 1e-10;

const WORDS_PER_PARTICLE_STEP: u128 = 4;
/// Stream-key offset separating initial-condition sampling from the dynamics noise.
const SAMPLING_KEY: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_particles: usize,
    pub sigma: f64,
    pub dt: f64,
    pub t_max: f64,
    pub kernel: KernelSpec,
    pub replicas: usize,
    pub seed: u64,
    pub snapshot_times: Vec<f64>,
    /// Worker threads for the replica pool; 0 uses the global rayon pool.
    pub workers: usize,
}

impl SimConfig {
    pub fn geometry(&self) -> TorusGeometry {
        self.kernel.geometry()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::domain("need at least one particle"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::domain(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::domain(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        // t_max = 0 is the degenerate "initial diagnostics only" horizon
        if !(self.t_max == 0.0 || self.t_max >= self.dt) {
            return Err(Error::domain(format!("t_max = {} must be 0 or at least dt = {}", self.t_max, self.dt)));
        }
        let mut prev = f64::NEG_INFINITY;
        for &t in &self.snapshot_times {
            if !(0.0..=self.t_max + 0.5 * self.dt).contains(&t) {
                return Err(Error::domain(format!("snapshot time {t} outside [0, {}]", self.t_max)));
            }
            if t < prev {
                return Err(Error::domain("snapshot times must be sorted"));
            }
            prev = t;
        }
        Ok(())
    }

    /// `0.1 * min(1, 1/Lip)`; exceeding it only triggers a warning.
    pub fn stable_dt(&self) -> f64 {
        let lip = self.kernel.lipschitz_bound();
        0.1 * if lip > 1.0 { 1.0 / lip } else { 1.0 }
    }

    pub fn total_steps(&self) -> u64 {
        (self.t_max / self.dt).round() as u64
    }

    /// Requested snapshot times snapped to the step grid, deduplicated.
    pub fn snapshot_steps(&self) -> Vec<(f64, u64)> {
        let times: Vec<f64> = if self.snapshot_times.is_empty() {
            vec![0.0, self.t_max]
        } else {
            self.snapshot_times.clone()
        };
        let mut out: Vec<(f64, u64)> = Vec::new();
        for t in times {
            let step = (t / self.dt).round() as u64;
            if out.last().map(|&(_, s)| s) != Some(step) {
                out.push((t, step));
            }
        }
        out
    }
}

/// Positions `[M][N][d]`, flattened row-major, all coordinates in `[0, L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub geometry: TorusGeometry,
    pub n_particles: usize,
    pub replicas: usize,
    pub positions: Vec<f64>,
    pub time: f64,
    pub step: u64,
}

impl ParticleEnsemble {
    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn replica(&self, r: usize) -> &[f64] {
        let w = self.n_particles * self.dim();
        &self.positions[r * w..(r + 1) * w]
    }

    pub fn particle(&self, r: usize, p: usize) -> &[f64] {
        let d = self.dim();
        &self.replica(r)[p * d..(p + 1) * d]
    }
}

/// Counter-addressed Gaussian stream for one replica.
pub struct NoiseStream {
    rng: ChaCha8Rng,
    n_particles: usize,
}

impl NoiseStream {
    pub fn new(seed: u64, replica: usize, n_particles: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(replica as u64);
        Self { rng, n_particles }
    }

    /// Position the stream at `(step, particle)`.
    pub fn seek(&mut self, step: u64, particle: usize) {
        let word = (step as u128 * self.n_particles as u128 + particle as u128) * WORDS_PER_PARTICLE_STEP;
        self.rng.set_word_pos(word);
    }

    /// Two independent standard normals from exactly two 64-bit draws.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * SCALE;
        let u2 = (self.rng.next_u64() >> 11) as f64 * SCALE;
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        (r * c, r * s)
    }

    /// The `d <= 2` increments of the particle the stream currently points at.
    fn fill(&mut self, out: &mut [f64]) {
        let (a, b) = self.normal_pair();
        out[0] = a;
        if out.len() > 1 {
            out[1] = b;
        }
    }
}

/// Kernel prepared for fast drift evaluation: the half of its Fourier table with
/// positive leading mode, so the real sum can be formed as `2 Re(...)`.
#[derive(Debug, Clone)]
pub struct DriftPlan {
    geometry: TorusGeometry,
    half: Vec<FourierTerm>,
    max_mode: usize,
    /// `K(0)`, subtracted to remove the self-interaction.
    at_origin: Vec<f64>,
    zero: bool,
}

impl DriftPlan {
    pub fn new(kernel: &KernelSpec) -> Self {
        let terms = kernel.terms();
        let d = kernel.dim();
        let mut at_origin = vec![0.0; d];
        for t in &terms {
            for (o, c) in at_origin.iter_mut().zip(&t.coeff) {
                *o += c.re;
            }
        }
        let positive = |m: &[i64]| m.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0);
        let half: Vec<FourierTerm> = terms.into_iter().filter(|t| positive(&t.mode)).collect();
        let max_mode = half.iter().flat_map(|t| t.mode.iter().map(|m| m.unsigned_abs() as usize)).max().unwrap_or(0);
        Self {
            geometry: kernel.geometry(),
            zero: matches!(kernel.variant(), KernelVariant::Zero) || half.is_empty(),
            half,
            max_mode,
            at_origin,
        }
    }

    /// `drift_i = (1/N) sum_{j != i} K(x_i - x_j)` for one replica, into `out`.
    pub fn drift_into(&self, positions: &[f64], n: usize, out: &mut [f64], scratch: &mut DriftScratch) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if self.zero {
            return;
        }
        let d = self.geometry.dim();
        let width = self.max_mode + 1;
        let base = 2.0 * PI / self.geometry.length();
        // per particle and axis: e^{i k_1 x}, e^{2 i k_1 x}, ...
        scratch.powers.resize(n * d * width, Complex64::default());
        for p in 0..n {
            for a in 0..d {
                let e = Complex64::from_polar(1.0, base * positions[p * d + a]);
                let row = &mut scratch.powers[(p * d + a) * width..(p * d + a + 1) * width];
                row[0] = Complex64::new(1.0, 0.0);
                for j in 1..width {
                    row[j] = row[j - 1] * e;
                }
            }
        }
        let phase = |powers: &[Complex64], p: usize, mode: &[i64]| -> Complex64 {
            let mut z = Complex64::new(1.0, 0.0);
            for (a, &m) in mode.iter().enumerate() {
                let w = powers[(p * d + a) * width + m.unsigned_abs() as usize];
                z *= if m >= 0 { w } else { w.conj() };
            }
            z
        };
        let inv_n = 1.0 / n as f64;
        for t in &self.half {
            let s: Complex64 = (0..n).map(|p| phase(&scratch.powers, p, &t.mode).conj()).sum();
            for p in 0..n {
                let z = phase(&scratch.powers, p, &t.mode) * s;
                for (a, c) in t.coeff.iter().enumerate() {
                    out[p * d + a] += 2.0 * (c * z).re * inv_n;
                }
            }
        }
        for p in 0..n {
            for a in 0..d {
                out[p * d + a] -= self.at_origin[a] * inv_n;
            }
        }
    }
}

#[derive(Debug, Default)]
pub struct DriftScratch {
    powers: Vec<Complex64>,
}

/// Mean-field drift of one replica by spectral summation, `O(N * modes)`.
pub fn drift(positions: &[f64], kernel: &KernelSpec, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; positions.len()];
    DriftPlan::new(kernel).drift_into(positions, n, &mut out, &mut DriftScratch::default());
    out
}

/// Reference `O(N^2)` pair loop through `eval_kernel`; propagates singularity errors.
pub fn drift_pairwise(positions: &[f64], kernel: &KernelSpec, n: usize) -> Result<Vec<f64>> {
    let d = kernel.dim();
    let geometry = kernel.geometry();
    let mut out = vec![0.0; n * d];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let disp = min_image(&positions[i * d..(i + 1) * d], &positions[j * d..(j + 1) * d], &geometry);
            let k = eval_kernel(kernel, &disp)?;
            for a in 0..d {
                out[i * d + a] += k[a] / n as f64;
            }
        }
    }
    Ok(out)
}

/// Draw `M` replicas of `N` i.i.d. particles from `density` on `T^d`.
///
/// The density is read as piecewise constant on the cells centred at the grid
/// nodes: inverse CDF over cells for `d = 1`, rejection from the uniform
/// envelope for `d = 2`.
pub fn sample_initial(density: &DensityField, n: usize, m: usize, seed: u64) -> Result<ParticleEnsemble> {
    let grid = *density.grid();
    let geometry = grid.geometry();
    let d = geometry.dim();
    if grid.total_dims() != d {
        return Err(Error::domain("initial density must live on the single-particle torus"));
    }
    let fmax = density.values().iter().copied().fold(0.0, f64::max);
    if density.min_value() < -TOL_NEG * fmax.max(1.0) {
        return Err(Error::domain(format!("initial density has negative values (min {:e})", density.min_value())));
    }
    if (density.mass() - 1.0).abs() > TOL_MASS {
        return Err(Error::domain(format!("initial density has mass {}", density.mass())));
    }
    let h = grid.spacing();
    let npts = grid.points_per_dim();
    let length = geometry.length();
    let cell_of = |x: f64| -> usize { (((x / h) + 0.5).floor() as usize) % npts };

    let mut cdf = Vec::new();
    if d == 1 {
        let mut acc = 0.0;
        for &v in density.values() {
            acc += v.max(0.0);
            cdf.push(acc);
        }
    }
    let width = n * d;
    let mut positions = vec![0.0; m * width];
    positions.par_chunks_mut(width.max(1)).enumerate().for_each(|(r, chunk)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SAMPLING_KEY);
        rng.set_stream(r as u64);
        match d {
            1 => {
                let total = *cdf.last().unwrap();
                for x in chunk.iter_mut() {
                    let u = rng.random::<f64>() * total;
                    let cell = cdf.partition_point(|&c| c <= u).min(npts - 1);
                    let offset = rng.random::<f64>() - 0.5;
                    *x = wrap_coord((cell as f64 + offset) * h, length);
                }
            }
            _ => {
                for p in chunk.chunks_mut(2) {
                    loop {
                        let x = rng.random::<f64>() * length;
                        let y = rng.random::<f64>() * length;
                        let v = density.values()[cell_of(x) * npts + cell_of(y)];
                        if rng.random::<f64>() * fmax < v {
                            p[0] = x;
                            p[1] = y;
                            break;
                        }
                    }
                }
            }
        }
    });
    Ok(ParticleEnsemble { geometry, n_particles: n, replicas: m, positions, time: 0.0, step: 0 })
}

/// Per-replica integrator state.
struct ReplicaStepper<'a> {
    plan: &'a DriftPlan,
    geometry: TorusGeometry,
    n: usize,
    dt: f64,
    noise_scale: f64,
}

impl ReplicaStepper<'_> {
    /// Advance one replica from `step` to `step + 1`.
    ///
    /// `labels[p]` names the noise channel used by slot `p` (identity when `None`).
    fn step(
        &self,
        positions: &mut [f64],
        noise: &mut NoiseStream,
        step: u64,
        labels: Option<&[usize]>,
        drift_buf: &mut Vec<f64>,
        scratch: &mut DriftScratch,
    ) -> std::result::Result<(), String> {
        let d = self.geometry.dim();
        drift_buf.resize(positions.len(), 0.0);
        self.plan.drift_into(positions, self.n, drift_buf, scratch);
        let mut xi = [0.0; 2];
        if labels.is_none() {
            noise.seek(step, 0);
        }
        for p in 0..self.n {
            if let Some(l) = labels {
                noise.seek(step, l[p]);
            }
            noise.fill(&mut xi[..d]);
            for a in 0..d {
                let x = positions[p * d + a] + drift_buf[p * d + a] * self.dt + self.noise_scale * xi[a];
                if !x.is_finite() {
                    return Err(format!("particle {p} coordinate {a} became {x}"));
                }
                positions[p * d + a] = wrap_coord(x, self.geometry.length());
            }
        }
        Ok(())
    }
}

/// One Euler–Maruyama step of every replica.
pub fn em_step(ensemble: &mut ParticleEnsemble, config: &SimConfig) -> Result<()> {
    advance(ensemble, config, ensemble.step + 1)
}

/// One step of a single replica with permuted noise channels; used to check exchangeability.
pub fn em_step_labeled(
    positions: &mut [f64],
    replica: usize,
    step: u64,
    config: &SimConfig,
    labels: &[usize],
) -> Result<()> {
    let plan = DriftPlan::new(&config.kernel);
    let stepper = stepper(&plan, config);
    let mut noise = NoiseStream::new(config.seed, replica, config.n_particles);
    stepper
        .step(positions, &mut noise, step, Some(labels), &mut Vec::new(), &mut DriftScratch::default())
        .map_err(|detail| Error::BlowUp { replica, step, detail })
}

fn stepper<'a>(plan: &'a DriftPlan, config: &SimConfig) -> ReplicaStepper<'a> {
    ReplicaStepper {
        plan,
        geometry: config.geometry(),
        n: config.n_particles,
        dt: config.dt,
        noise_scale: (2.0 * config.sigma * config.dt).sqrt(),
    }
}

/// Advance all replicas to `target_step`, in parallel over replicas.
pub fn advance(ensemble: &mut ParticleEnsemble, config: &SimConfig, target_step: u64) -> Result<()> {
    if ensemble.n_particles != config.n_particles || ensemble.geometry != config.geometry() {
        return Err(Error::domain("ensemble does not match the simulation config"));
    }
    if target_step <= ensemble.step {
        return Ok(());
    }
    let plan = DriftPlan::new(&config.kernel);
    let st = stepper(&plan, config);
    let start = ensemble.step;
    let width = config.n_particles * config.geometry().dim();
    let seed = config.seed;
    let n = config.n_particles;
    let work = |positions: &mut Vec<f64>| -> Result<()> {
        positions
            .par_chunks_mut(width)
            .enumerate()
            .map(|(r, chunk)| {
                let mut noise = NoiseStream::new(seed, r, n);
                let mut buf = Vec::with_capacity(width);
                let mut scratch = DriftScratch::default();
                for s in start..target_step {
                    st.step(chunk, &mut noise, s, None, &mut buf, &mut scratch)
                        .map_err(|detail| (r, s, detail))?;
                }
                Ok(())
            })
            // lowest failing replica wins so the error is schedule-independent
            .collect::<Vec<std::result::Result<(), (usize, u64, String)>>>()
            .into_iter()
            .find_map(|r| r.err())
            .map_or(Ok(()), |(replica, step, detail)| Err(Error::BlowUp { replica, step, detail }))
    };
    if config.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Resource(e.to_string()))?;
        pool.install(|| work(&mut ensemble.positions))?;
    } else {
        work(&mut ensemble.positions)?;
    }
    ensemble.step = target_step;
    ensemble.time = target_step as f64 * config.dt;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub requested_time: f64,
    pub ensemble: ParticleEnsemble,
}

/// Step grid alignment and guard settings recorded with a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetadata {
    /// `(requested, actual)` snapshot times; actual times sit on the step grid.
    pub snapshot_alignment: Vec<(f64, f64)>,
    pub guard_radius: f64,
    pub stable_dt: f64,
    pub dt_exceeds_guard: bool,
}

pub fn run_metadata(config: &SimConfig) -> RunMetadata {
    let stable_dt = config.stable_dt();
    RunMetadata {
        snapshot_alignment: config
            .snapshot_steps()
            .iter()
            .map(|&(t, s)| (t, s as f64 * config.dt))
            .collect(),
        guard_radius: config.kernel.guard_radius(),
        stable_dt,
        dt_exceeds_guard: config.dt > stable_dt,
    }
}

/// Run from `initial`, handing each snapshot to `sink` as soon as it exists.
///
/// On a blow-up the snapshots already handed out stay with the caller and the
/// error is returned.
pub fn run_ensemble_streaming(
    config: &SimConfig,
    initial: ParticleEnsemble,
    mut sink: impl FnMut(Snapshot) -> Result<()>,
) -> Result<RunMetadata> {
    config.validate()?;
    let meta = run_metadata(config);
    if meta.dt_exceeds_guard {
        log::warn!(
            "dt = {} exceeds the stability guard {} for kernel {}",
            config.dt,
            meta.stable_dt,
            config.kernel.name()
        );
    }
    let mut ensemble = initial;
    for (requested, step) in config.snapshot_steps() {
        if step < ensemble.step {
            continue;
        }
        advance(&mut ensemble, config, step)?;
        sink(Snapshot { requested_time: requested, ensemble: ensemble.clone() })?;
    }
    Ok(meta)
}

pub fn run_ensemble(config: &SimConfig, initial: ParticleEnsemble) -> Result<(Vec<Snapshot>, RunMetadata)> {
    let mut out = Vec::new();
    let meta = run_ensemble_streaming(config, initial, |s| {
        out.push(s);
        Ok(())
    })?;
    Ok((out, meta))
}

/// Binary layout (little endian): magic, version u32, N u64, d u64, M u64,
/// time f64, seed u64, step u64, length f64, then `M*N*d` f64 coordinates.
pub fn write_snapshot(w: &mut impl Write, ensemble: &ParticleEnsemble, seed: u64) -> Result<()> {
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    for v in [ensemble.n_particles as u64, ensemble.dim() as u64, ensemble.replicas as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&ensemble.time.to_le_bytes())?;
    w.write_all(&seed.to_le_bytes())?;
    w.write_all(&ensemble.step.to_le_bytes())?;
    w.write_all(&ensemble.geometry.length().to_le_bytes())?;
    for x in &ensemble.positions {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Inverse of [`write_snapshot`]; returns the ensemble and the seed.
pub fn read_snapshot(r: &mut impl Read) -> Result<(ParticleEnsemble, u64)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Format("not a particle snapshot (bad magic bytes)".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != SNAPSHOT_VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let mut b8 = [0u8; 8];
    let mut u = |r: &mut dyn Read| -> Result<u64> {
        r.read_exact(&mut b8)?;
        Ok(u64::from_le_bytes(b8))
    };
    let n = u(r)? as usize;
    let d = u(r)? as usize;
    let m = u(r)? as usize;
    let time = f64::from_bits(u(r)?);
    let seed = u(r)?;
    let step = u(r)?;
    let length = f64::from_bits(u(r)?);
    let geometry = TorusGeometry::new(d, length).map_err(|e| Error::Format(e.to_string()))?;
    let count = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(m))
        .ok_or_else(|| Error::Format("snapshot header overflows".into()))?;
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    let positions = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((ParticleEnsemble { geometry, n_particles: n, replicas: m, positions, time, step }, seed))
}

/// CSV layout: one `# N=..,d=..,M=..,time=..,seed=..` header line, a column
/// line, then one row per particle.
pub fn write_snapshot_csv(w: &mut impl Write, ensemble: &ParticleEnsemble, seed: u64) -> Result<()> {
    let d = ensemble.dim();
    writeln!(
        w,
        "# N={},d={},M={},time={},seed={}",
        ensemble.n_particles, d, ensemble.replicas, ensemble.time, seed
    )?;
    let coords: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
    writeln!(w, "replica,particle,{}", coords.join(","))?;
    for r in 0..ensemble.replicas {
        for p in 0..ensemble.n_particles {
            let x: Vec<String> = ensemble.particle(r, p).iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{r},{p},{}", x.join(","))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::GridSpec;

    fn kuramoto_config(n: usize, m: usize, sigma: f64, dt: f64, t_max: f64) -> SimConfig {
        SimConfig {
            n_particles: n,
            sigma,
            dt,
            t_max,
            kernel: KernelSpec::kuramoto(2.0 * PI).unwrap(),
            replicas: m,
            seed: 42,
            snapshot_times: vec![],
            workers: 0,
        }
    }

    fn ensemble_from(positions: Vec<f64>, n: usize, geometry: TorusGeometry) -> ParticleEnsemble {
        let replicas = positions.len() / (n * geometry.dim());
        ParticleEnsemble { geometry, n_particles: n, replicas, positions, time: 0.0, step: 0 }
    }

    #[test]
    fn drift_examples() {
        let k = KernelSpec::kuramoto(2.0 * PI).unwrap();
        let x = [0.0, PI / 2.0];
        let fast = drift(&x, &k, 2);
        let slow = drift_pairwise(&x, &k, 2).unwrap();
        assert!((fast[0] - 0.5).abs() < 1e-15 && (fast[1] + 0.5).abs() < 1e-15);
        assert!((slow[0] - 0.5).abs() < 1e-15 && (slow[1] + 0.5).abs() < 1e-15);

        let z = KernelSpec::zero(TorusGeometry::new(2, 1.0).unwrap());
        assert_eq!(drift(&[0.1, 0.2, 0.3, 0.4], &z, 2), vec![0.0; 4]);
    }

    #[test]
    fn fast_and_pairwise_drift_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let kernels = [
            KernelSpec::kuramoto(2.0 * PI).unwrap(),
            KernelSpec::biot_savart(1.0, 4).unwrap().mollify(0.05).unwrap(),
            KernelSpec::attractive_log(2.0 * PI, 3).unwrap().mollify(0.3).unwrap(),
        ];
        for k in &kernels {
            let d = k.dim();
            let n = 9;
            let x: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>() * k.geometry().length()).collect();
            let a = drift(&x, k, n);
            let b = drift_pairwise(&x, k, n).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12, "{}: {u} vs {v}", k.name());
            }
            // odd kernels carry no net momentum
            for c in 0..d {
                let total: f64 = (0..n).map(|p| a[p * d + c]).sum();
                assert!(total.abs() < 1e-12);
            }
            // translation equivariance
            let shifted: Vec<f64> = x.iter().map(|v| wrap_coord(v + 0.37, k.geometry().length())).collect();
            let s = drift(&shifted, k, n);
            for (u, v) in a.iter().zip(&s) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pairwise_drift_reports_singularity() {
        let k = KernelSpec::biot_savart(1.0, 8).unwrap();
        let x = [0.5, 0.5, 0.5 + 1e-6, 0.5];
        assert!(matches!(drift_pairwise(&x, &k, 2), Err(Error::Singularity(_))));
    }

    #[test]
    fn deterministic_euler_step() {
        let cfg = kuramoto_config(2, 1, 0.0, 0.01, 0.01);
        let mut e = ensemble_from(vec![0.0, PI / 2.0], 2, TorusGeometry::circle());
        em_step(&mut e, &cfg).unwrap();
        assert!((e.positions[0] - 0.005).abs() < 1e-15);
        assert!((e.positions[1] - (PI / 2.0 - 0.005)).abs() < 1e-15);

        let mut still = kuramoto_config(3, 2, 0.0, 0.1, 1.0);
        still.kernel = KernelSpec::zero(TorusGeometry::circle());
        let mut e = ensemble_from(vec![0.1, 0.2, 0.3, 1.0, 2.0, 3.0], 3, TorusGeometry::circle());
        let before = e.positions.clone();
        advance(&mut e, &still, 10).unwrap();
        assert_eq!(e.positions, before);
    }

    #[test]
    fn increment_variance_matches_diffusion() {
        let sigma = 0.5;
        let dt = 0.01;
        let mut cfg = kuramoto_config(1, 10_000, sigma, dt, dt);
        cfg.kernel = KernelSpec::zero(TorusGeometry::circle());
        let start = vec![PI; 10_000];
        let mut e = ensemble_from(start.clone(), 1, TorusGeometry::circle());
        em_step(&mut e, &cfg).unwrap();
        let incs: Vec<f64> = e.positions.iter().map(|x| x - PI).collect();
        let mean = incs.iter().sum::<f64>() / incs.len() as f64;
        let var = incs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (incs.len() - 1) as f64;
        assert!((var / (2.0 * sigma * dt) - 1.0).abs() < 0.05, "variance ratio {}", var / (2.0 * sigma * dt));
    }

    #[test]
    fn sampling_uniform_and_bump() {
        let grid = GridSpec::single(TorusGeometry::new(1, 1.0).unwrap(), 256).unwrap();
        let u = DensityField::uniform(grid);
        let e = sample_initial(&u, 10, 10_000, 1).unwrap();
        let mut hist = vec![0.0; 64];
        for &x in &e.positions {
            hist[(x * 64.0) as usize] += 1.0;
        }
        let n = e.positions.len() as f64;
        let l1: f64 = hist.iter().map(|c| (c / n * 64.0 - 1.0).abs() / 64.0).sum();
        assert!(l1 <= 0.05, "L1 = {l1}");

        let width: f64 = 0.02;
        let bump = DensityField::from_fn(grid, |x| {
            let z = crate::torus::min_image_coord(x[0], 0.5, 1.0) / width;
            (-0.5 * z * z).exp() / (width * (2.0 * PI).sqrt())
        });
        let e = sample_initial(&bump, 10, 1_000, 2).unwrap();
        let mean = e.positions.iter().sum::<f64>() / e.positions.len() as f64;
        assert!((mean - 0.5).abs() < 3.0 * width / (e.positions.len() as f64).sqrt() + 1e-3);

        let empty = sample_initial(&u, 4, 0, 1).unwrap();
        assert!(empty.positions.is_empty());

        let mut neg = u.clone();
        neg.values_mut()[3] = -0.5;
        neg.values_mut()[4] = 2.5;
        assert!(matches!(sample_initial(&neg, 4, 2, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn exchangeability_under_relabeling() {
        let cfg = kuramoto_config(3, 1, 0.4, 0.01, 0.2);
        let x0 = vec![0.3, 2.0, 4.4];
        let perm = [2usize, 0, 1];
        let mut plain = x0.clone();
        let mut permuted: Vec<f64> = perm.iter().map(|&p| x0[p]).collect();
        for s in 0..20 {
            em_step_labeled(&mut plain, 0, s, &cfg, &[0, 1, 2]).unwrap();
            em_step_labeled(&mut permuted, 0, s, &cfg, &perm).unwrap();
        }
        for (slot, &p) in perm.iter().enumerate() {
            assert!((permuted[slot] - plain[p]).abs() < 1e-12);
        }
    }

    #[test]
    fn runs_are_reproducible_across_worker_counts() {
        let grid = GridSpec::single(TorusGeometry::circle(), 64).unwrap();
        let f0 = DensityField::from_fn(grid, |x| (1.0 + 0.5 * x[0].cos()) / (2.0 * PI));
        let mut cfg = kuramoto_config(5, 40, 0.3, 0.05, 1.0);
        cfg.snapshot_times = vec![0.0, 0.52, 1.0];
        let init = sample_initial(&f0, 5, 40, cfg.seed).unwrap();
        let (a, meta) = run_ensemble(&cfg, init.clone()).unwrap();
        let (b, _) = run_ensemble(&cfg, init.clone()).unwrap();
        cfg.workers = 4;
        let (c, _) = run_ensemble(&cfg, init.clone()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.len(), 3);
        assert!((meta.snapshot_alignment[1].1 - 0.5).abs() < 1e-12);

        let mut zero_cfg = cfg.clone();
        zero_cfg.t_max = 0.0;
        zero_cfg.snapshot_times = vec![];
        let (z, _) = run_ensemble(&zero_cfg, init.clone()).unwrap();
        assert_eq!(z.len(), 1);
        assert_eq!(z[0].ensemble, init);
    }

    #[test]
    fn snapshot_round_trip() {
        let e = ensemble_from(vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6], 3, TorusGeometry::circle());
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &e, 99).unwrap();
        let (back, seed) = read_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!(back, e);
        assert_eq!(seed, 99);
        buf[0] = b'X';
        assert!(matches!(read_snapshot(&mut buf.as_slice()), Err(Error::Format(_))));

        let mut csv = Vec::new();
        write_snapshot_csv(&mut csv, &e, 99).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("# N=3,d=1,M=2,time=0,seed=99\nreplica,particle,x0\n"));
        assert_eq!(text.lines().count(), 8);
    }
}
