//! Flat TOML experiment configuration.
//!
//! Every key is optional except `preset`; unset keys fall back to the preset's
//! reference values. Unknown keys are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::criteria::*;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Counterexample,
    EntropyDecay,
    L2Bounds,
    ChaosRate,
    SobolevAudit,
    Sigma0Audit,
    OracleCrosscheck,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::Counterexample,
        Preset::EntropyDecay,
        Preset::L2Bounds,
        Preset::ChaosRate,
        Preset::SobolevAudit,
        Preset::Sigma0Audit,
        Preset::OracleCrosscheck,
        Preset::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Counterexample => "counterexample",
            Preset::EntropyDecay => "entropy-decay",
            Preset::L2Bounds => "l2-bounds",
            Preset::ChaosRate => "chaos-rate",
            Preset::SobolevAudit => "sobolev-audit",
            Preset::Sigma0Audit => "sigma0-audit",
            Preset::OracleCrosscheck => "oracle-crosscheck",
            Preset::Custom => "custom",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Preset::Counterexample => "sigma=0.2 Kuramoto: stationary mean field vs diffusing particle cluster",
            Preset::EntropyDecay => "supercritical Kuramoto relaxation of the one-particle marginal",
            Preset::L2Bounds => "Biot-Savart L2 bound ledger for k = 1, 2",
            Preset::ChaosRate => "distance to the mean-field limit across N",
            Preset::SobolevAudit => "sharp Sobolev constants, random inequality sweep and cutoff identities",
            Preset::Sigma0Audit => "H^-1 norm of the attractive log kernel",
            Preset::OracleCrosscheck => "N=2 Liouville vs particles, BBGKY residuals and the Gibbs state",
            Preset::Custom => "checkpointed particle run with marginal diagnostics",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelName {
    Zero,
    Kuramoto,
    BiotSavart,
    AttractiveLog,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Option<Preset>,
    pub kernel: Option<KernelName>,
    pub kernel_cutoff: Option<usize>,
    pub length: Option<f64>,
    pub dim: Option<usize>,
    pub n_particles: Option<usize>,
    pub sizes: Option<Vec<usize>>,
    pub replicas: Option<usize>,
    pub sigma: Option<f64>,
    pub sigma_factor: Option<f64>,
    pub amplitude: Option<f64>,
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
    pub snapshot_every: Option<f64>,
    pub seed: Option<u64>,
    pub grid_points: Option<usize>,
    pub bins: Option<usize>,
    pub samples: Option<usize>,
    pub workers: Option<usize>,
    pub tolerance: Option<f64>,
    pub meanfield_tolerance: Option<f64>,
    pub rate_fraction: Option<f64>,
    pub min_r2: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

/// A particle run outside the acceptance presets.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomParams {
    pub kernel: KernelName,
    pub kernel_cutoff: usize,
    pub length: f64,
    pub dim: usize,
    pub n_particles: usize,
    pub replicas: usize,
    pub sigma: f64,
    pub amplitude: f64,
    pub dt: f64,
    pub t_max: f64,
    pub snapshot_every: f64,
    pub seed: u64,
    pub bins: Option<usize>,
    pub workers: usize,
}

#[derive(Debug, Clone)]
pub enum Plan {
    Counterexample(CounterexampleParams),
    EntropyDecay(EntropyDecayParams),
    L2Bounds(L2BoundsParams),
    ChaosRate(ChaosRateParams),
    SobolevAudit(SobolevAuditParams, CutoffAuditParams),
    Sigma0Audit(Sigma0Params),
    OracleCrosscheck(OracleParams, GibbsParams),
    Custom(CustomParams),
}

/// Values echoed into output headers so series files are self-describing.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Tags {
    pub n_particles: Option<usize>,
    pub sigma: Option<f64>,
    pub seed: Option<u64>,
}

fn bad(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

fn positive(key: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(bad(key, format!("must be positive, got {x}"))),
        _ => Ok(()),
    }
}

fn nonzero(key: &str, v: Option<usize>) -> Result<()> {
    match v {
        Some(0) => Err(bad(key, "must be at least 1")),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(&self) -> Preset {
        self.preset.unwrap_or(Preset::Custom)
    }

    fn validate(&self) -> Result<()> {
        if self.preset.is_none() {
            return Err(bad("preset", "missing"));
        }
        for (key, v) in [
            ("length", self.length),
            ("sigma_factor", self.sigma_factor),
            ("dt", self.dt),
            ("snapshot_every", self.snapshot_every),
            ("tolerance", self.tolerance),
            ("meanfield_tolerance", self.meanfield_tolerance),
            ("rate_fraction", self.rate_fraction),
        ] {
            positive(key, v)?;
        }
        for (key, v) in [
            ("kernel_cutoff", self.kernel_cutoff),
            ("n_particles", self.n_particles),
            ("replicas", self.replicas),
            ("grid_points", self.grid_points),
            ("bins", self.bins),
            ("samples", self.samples),
        ] {
            nonzero(key, v)?;
        }
        if let Some(s) = self.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(bad("sigma", format!("must be non-negative, got {s}")));
            }
        }
        if let Some(t) = self.t_max {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(bad("t_max", format!("must be non-negative, got {t}")));
            }
        }
        if let Some(a) = self.amplitude {
            if !(0.0..1.0).contains(&a) {
                return Err(bad("amplitude", format!("must lie in [0, 1), got {a}")));
            }
        }
        if let Some(r2) = self.min_r2 {
            if !(0.0..=1.0).contains(&r2) {
                return Err(bad("min_r2", format!("must lie in [0, 1], got {r2}")));
            }
        }
        if let Some(d) = self.dim {
            if !(1..=2).contains(&d) {
                return Err(bad("dim", format!("must be 1 or 2, got {d}")));
            }
        }
        if self.sizes.as_ref().is_some_and(|s| s.is_empty() || s.contains(&0)) {
            return Err(bad("sizes", "must be a non-empty list of positive particle counts"));
        }
        let preset = self.preset();
        let kernel_ok = match preset {
            Preset::Custom => true,
            Preset::L2Bounds => matches!(self.kernel, None | Some(KernelName::BiotSavart)),
            Preset::Sigma0Audit => matches!(self.kernel, None | Some(KernelName::AttractiveLog)),
            Preset::SobolevAudit => self.kernel.is_none(),
            _ => matches!(self.kernel, None | Some(KernelName::Kuramoto)),
        };
        if !kernel_ok {
            return Err(bad("kernel", format!("not configurable for preset {}", preset.name())));
        }
        if preset == Preset::Custom {
            let dim = self.custom_dim();
            match (self.kernel.unwrap_or(KernelName::Kuramoto), dim) {
                (KernelName::Kuramoto, 1) | (KernelName::Zero, _) => {}
                (KernelName::BiotSavart | KernelName::AttractiveLog, 2) => {}
                (k, d) => return Err(bad("dim", format!("kernel {k:?} does not live in dimension {d}"))),
            }
            if self.kernel == Some(KernelName::AttractiveLog) {
                return Err(bad("kernel", "attractive-log is only available in sigma0-audit"));
            }
        }
        Ok(())
    }

    fn custom_dim(&self) -> usize {
        match (self.dim, self.kernel) {
            (Some(d), _) => d,
            (None, Some(KernelName::BiotSavart | KernelName::AttractiveLog)) => 2,
            _ => 1,
        }
    }

    /// Concrete parameters for the preset, with every unset key at its reference value.
    pub fn plan(&self) -> Plan {
        match self.preset() {
            Preset::Counterexample => {
                let mut p = CounterexampleParams::default();
                set(&mut p.sigma, self.sigma);
                set(&mut p.n_particles, self.n_particles);
                set(&mut p.replicas, self.replicas);
                set(&mut p.dt, self.dt);
                set(&mut p.t_max, self.t_max);
                set(&mut p.snapshot_every, self.snapshot_every);
                set(&mut p.bins, self.bins);
                set(&mut p.target, self.tolerance);
                set(&mut p.meanfield_tolerance, self.meanfield_tolerance);
                set(&mut p.seed, self.seed);
                set(&mut p.workers, self.workers);
                Plan::Counterexample(p)
            }
            Preset::EntropyDecay => {
                let mut p = EntropyDecayParams::default();
                set(&mut p.sigma, self.sigma);
                set(&mut p.n_particles, self.n_particles);
                set(&mut p.replicas, self.replicas);
                set(&mut p.amplitude, self.amplitude);
                set(&mut p.dt, self.dt);
                set(&mut p.t_max, self.t_max);
                set(&mut p.snapshot_every, self.snapshot_every);
                set(&mut p.bins, self.bins);
                set(&mut p.rate_fraction, self.rate_fraction);
                set(&mut p.seed, self.seed);
                set(&mut p.workers, self.workers);
                p.window.1 = p.window.1.min(p.t_max);
                Plan::EntropyDecay(p)
            }
            Preset::L2Bounds => {
                let mut p = L2BoundsParams::default();
                set(&mut p.n_particles, self.n_particles);
                set(&mut p.replicas, self.replicas);
                set(&mut p.kernel_cutoff, self.kernel_cutoff);
                set(&mut p.sigma_factor, self.sigma_factor);
                set(&mut p.amplitude, self.amplitude);
                set(&mut p.dt, self.dt);
                set(&mut p.t_max, self.t_max);
                set(&mut p.snapshot_every, self.snapshot_every);
                set(&mut p.bins_k1, self.bins);
                set(&mut p.seed, self.seed);
                set(&mut p.workers, self.workers);
                Plan::L2Bounds(p)
            }
            Preset::ChaosRate => {
                let mut p = ChaosRateParams::default();
                set(&mut p.sigma, self.sigma);
                set(&mut p.amplitude, self.amplitude);
                set(&mut p.t, self.t_max);
                set(&mut p.dt, self.dt);
                set(&mut p.sizes, self.sizes.clone());
                set(&mut p.replicas, self.replicas);
                set(&mut p.bins, self.bins);
                set(&mut p.min_r2, self.min_r2);
                set(&mut p.seed, self.seed);
                set(&mut p.workers, self.workers);
                Plan::ChaosRate(p)
            }
            Preset::SobolevAudit => {
                let mut s = SobolevAuditParams::default();
                let mut c = CutoffAuditParams::default();
                set(&mut s.samples, self.samples);
                set(&mut s.seed, self.seed);
                set(&mut c.seed, self.seed);
                Plan::SobolevAudit(s, c)
            }
            Preset::Sigma0Audit => {
                let mut p = Sigma0Params::default();
                set(&mut p.fine, self.kernel_cutoff);
                p.coarse = p.fine / 2;
                set(&mut p.agreement_tolerance, self.tolerance);
                Plan::Sigma0Audit(p)
            }
            Preset::OracleCrosscheck => {
                let mut p = OracleParams::default();
                let mut g = GibbsParams::default();
                set(&mut p.sigma, self.sigma);
                set(&mut g.sigma, self.sigma);
                set(&mut p.amplitude, self.amplitude);
                set(&mut p.t, self.t_max);
                set(&mut p.dt, self.dt);
                set(&mut p.replicas, self.replicas);
                set(&mut p.grid_points, self.grid_points);
                set(&mut p.bins, self.bins);
                set(&mut p.tolerance, self.tolerance);
                set(&mut p.seed, self.seed);
                set(&mut p.workers, self.workers);
                Plan::OracleCrosscheck(p, g)
            }
            Preset::Custom => {
                let kernel = self.kernel.unwrap_or(KernelName::Kuramoto);
                let dim = self.custom_dim();
                let default_length = if kernel == KernelName::Kuramoto { 2.0 * std::f64::consts::PI } else { 1.0 };
                Plan::Custom(CustomParams {
                    kernel,
                    kernel_cutoff: self.kernel_cutoff.unwrap_or(4),
                    length: self.length.unwrap_or(default_length),
                    dim,
                    n_particles: self.n_particles.unwrap_or(8),
                    replicas: self.replicas.unwrap_or(1000),
                    sigma: self.sigma.unwrap_or(1.0),
                    amplitude: self.amplitude.unwrap_or(0.5),
                    dt: self.dt.unwrap_or(0.01),
                    t_max: self.t_max.unwrap_or(1.0),
                    snapshot_every: self.snapshot_every.unwrap_or(0.25),
                    seed: self.seed.unwrap_or(1),
                    bins: self.bins,
                    workers: self.workers.unwrap_or(0),
                })
            }
        }
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl Plan {
    pub fn tags(&self) -> Tags {
        match self {
            Plan::Counterexample(p) => Tags { n_particles: Some(p.n_particles), sigma: Some(p.sigma), seed: Some(p.seed) },
            Plan::EntropyDecay(p) => Tags { n_particles: Some(p.n_particles), sigma: Some(p.sigma), seed: Some(p.seed) },
            Plan::L2Bounds(p) => Tags { n_particles: Some(p.n_particles), sigma: None, seed: Some(p.seed) },
            Plan::ChaosRate(p) => Tags { n_particles: None, sigma: Some(p.sigma), seed: Some(p.seed) },
            Plan::SobolevAudit(s, _) => Tags { seed: Some(s.seed), ..Tags::default() },
            Plan::Sigma0Audit(_) => Tags::default(),
            Plan::OracleCrosscheck(p, _) => Tags { n_particles: Some(2), sigma: Some(p.sigma), seed: Some(p.seed) },
            Plan::Custom(p) => Tags { n_particles: Some(p.n_particles), sigma: Some(p.sigma), seed: Some(p.seed) },
        }
    }
}
