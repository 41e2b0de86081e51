//! Preset execution, run manifests and resumption.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use chaoslab::diagnostics::{estimate_marginal, l1_distance, DiagnosticSeries, MAX_HISTOGRAM_DIMS};
use chaoslab::kernels::KernelSpec;
use chaoslab::particles::{advance, read_snapshot, sample_initial, write_snapshot, SimConfig};
use chaoslab::torus::{DensityField, GridSpec, TorusGeometry};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{CustomParams, ExperimentConfig, KernelName, Plan, Tags};
use crate::criteria::{self, Verdict};
use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const SERIES_FILE: &str = "series.csv";
pub const VERDICT_FILE: &str = "verdict.csv";
pub const LEDGER_FILE: &str = "ledger.csv";
const SNAPSHOT_DIR: &str = "snapshots";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Partial,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub time: f64,
    pub step: u64,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub preset: String,
    pub config_hash: String,
    pub code_version: String,
    pub started: u64,
    pub finished: Option<u64>,
    pub status: RunStatus,
    pub snapshots: Vec<SnapshotEntry>,
    pub outputs: Vec<FileEntry>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(CliError::io(&path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Manifest(format!("{}: {e}", path.display())))
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub verdicts: Vec<Verdict>,
    pub complete: bool,
}

impl RunOutcome {
    /// 0 when every required check passed (or the run was halted), 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.verdicts.iter().all(Verdict::hard_passed) {
            0
        } else {
            1
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(CliError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(CliError::io(path))
}

/// Output directory: explicit argument, then `CHAOSLAB_OUTPUT_DIR`, then the config, then `runs/<preset>`.
pub fn output_dir(cfg: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os("CHAOSLAB_OUTPUT_DIR") {
        return PathBuf::from(p);
    }
    cfg.output_dir.clone().unwrap_or_else(|| Path::new("runs").join(cfg.preset().name()))
}

/// Comment block written at the top of every CSV output.
pub fn header(config_text: &str, preset: &str, tags: Tags) -> String {
    let mut out = format!("# chaoslab {} preset={preset}\n# config:\n", env!("CARGO_PKG_VERSION"));
    for line in config_text.lines() {
        out.push_str("#   ");
        out.push_str(line);
        out.push('\n');
    }
    let show = |v: Option<String>| v.unwrap_or_default();
    out.push_str(&format!(
        "# tags: n_particles={} sigma={} seed={}\n",
        show(tags.n_particles.map(|v| v.to_string())),
        show(tags.sigma.map(|v| v.to_string())),
        show(tags.seed.map(|v| v.to_string())),
    ));
    out
}

/// Start a fresh run of `config_text` in `dir`.
///
/// `halt_after` stops a checkpointed run after that many new snapshots, leaving it resumable.
pub fn run(config_text: &str, dir: &Path, halt_after: Option<usize>) -> Result<RunOutcome> {
    let cfg = ExperimentConfig::parse(config_text)?;
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    if dir.join(SNAPSHOT_DIR).exists() {
        fs::remove_dir_all(dir.join(SNAPSHOT_DIR)).map_err(CliError::io(dir.join(SNAPSHOT_DIR)))?;
    }
    fs::write(dir.join(CONFIG_FILE), config_text).map_err(CliError::io(dir.join(CONFIG_FILE)))?;
    let manifest = RunManifest {
        preset: cfg.preset().name().to_string(),
        config_hash: sha256_hex(config_text.as_bytes()),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started: now(),
        finished: None,
        status: RunStatus::Partial,
        snapshots: Vec::new(),
        outputs: Vec::new(),
    };
    manifest.save(dir)?;
    execute(config_text, &cfg, dir, manifest, halt_after)
}

/// Continue a partial run in `dir`; a complete run is left untouched.
pub fn resume(dir: &Path, halt_after: Option<usize>) -> Result<RunOutcome> {
    let manifest = RunManifest::load(dir)?;
    if manifest.status == RunStatus::Complete {
        log::info!("{} is already complete", dir.display());
        return Ok(RunOutcome { dir: dir.to_path_buf(), verdicts: Vec::new(), complete: true });
    }
    let config_path = dir.join(CONFIG_FILE);
    let config_text = fs::read_to_string(&config_path).map_err(CliError::io(&config_path))?;
    if sha256_hex(config_text.as_bytes()) != manifest.config_hash {
        return Err(CliError::Checksum(config_path));
    }
    for s in &manifest.snapshots {
        let path = dir.join(&s.file);
        let bytes = fs::read(&path).map_err(CliError::io(&path))?;
        if sha256_hex(&bytes) != s.sha256 {
            return Err(CliError::Checksum(path));
        }
    }
    let cfg = ExperimentConfig::parse(&config_text)?;
    execute(&config_text, &cfg, dir, manifest, halt_after)
}

fn execute(
    config_text: &str,
    cfg: &ExperimentConfig,
    dir: &Path,
    mut manifest: RunManifest,
    halt_after: Option<usize>,
) -> Result<RunOutcome> {
    let plan = cfg.plan();
    let verdicts = match &plan {
        Plan::Counterexample(p) => vec![criteria::counterexample(p)?],
        Plan::EntropyDecay(p) => vec![criteria::entropy_decay(p)?],
        Plan::L2Bounds(p) => vec![criteria::l2_bounds(p)?],
        Plan::ChaosRate(p) => vec![criteria::chaos_rate(p)?],
        Plan::SobolevAudit(s, c) => vec![criteria::sobolev_audit(s)?, criteria::cutoff_audit(c)?],
        Plan::Sigma0Audit(p) => vec![criteria::sigma0_audit(p)?],
        Plan::OracleCrosscheck(p, g) => vec![criteria::gibbs_homogeneity(g)?, criteria::oracle_crosscheck(p)?],
        Plan::Custom(p) => match run_custom(p, dir, &mut manifest, halt_after)? {
            Some(v) => vec![v],
            None => return Ok(RunOutcome { dir: dir.to_path_buf(), verdicts: Vec::new(), complete: false }),
        },
    };

    let head = header(config_text, cfg.preset().name(), plan.tags());
    let mut outputs = Vec::new();
    let mut emit = |name: &str, body: Vec<u8>| -> Result<()> {
        let mut bytes = head.clone().into_bytes();
        bytes.extend(body);
        write_atomic(&dir.join(name), &bytes)?;
        outputs.push(FileEntry { file: name.to_string(), sha256: sha256_hex(&bytes) });
        Ok(())
    };
    emit(SERIES_FILE, series_csv(&verdicts)?)?;
    emit(VERDICT_FILE, verdict_csv(&verdicts))?;
    if let Some(ledger) = verdicts.iter().find_map(|v| v.ledger.as_ref()) {
        let mut body = Vec::new();
        ledger.write_csv(&mut body)?;
        emit(LEDGER_FILE, body)?;
    }
    manifest.outputs = outputs;
    manifest.status = RunStatus::Complete;
    manifest.finished = Some(now());
    manifest.save(dir)?;
    Ok(RunOutcome { dir: dir.to_path_buf(), verdicts, complete: true })
}

fn series_csv(verdicts: &[Verdict]) -> Result<Vec<u8>> {
    let mut out = b"t,metric,value,stderr\n".to_vec();
    for v in verdicts {
        let mut buf = Vec::new();
        v.series.write_csv(&mut buf)?;
        let body = buf.iter().position(|&b| b == b'\n').map_or(&buf[..0], |i| &buf[i + 1..]);
        out.extend_from_slice(body);
    }
    Ok(out)
}

fn verdict_csv(verdicts: &[Verdict]) -> Vec<u8> {
    let mut out = String::from("criterion,name,check,value,threshold,passed,required\n");
    for v in verdicts {
        for c in &v.checks {
            out.push_str(&format!(
                "{},{},{},{:.12e},{:.12e},{},{}\n",
                v.id, v.name, c.label, c.value, c.threshold, c.passed, c.required
            ));
        }
    }
    out.into_bytes()
}

fn custom_setup(p: &CustomParams) -> Result<(SimConfig, DensityField)> {
    let geometry = TorusGeometry::new(p.dim, p.length)?;
    let kernel = match p.kernel {
        KernelName::Zero => KernelSpec::zero(geometry),
        KernelName::Kuramoto => KernelSpec::kuramoto(p.length)?,
        KernelName::BiotSavart => KernelSpec::biot_savart(p.length, p.kernel_cutoff)?,
        KernelName::AttractiveLog => KernelSpec::attractive_log(p.length, p.kernel_cutoff)?,
    };
    let points = if p.dim == 1 { 256 } else { 64 };
    let w = 2.0 * std::f64::consts::PI / p.length;
    let a = p.amplitude;
    let raw = DensityField::from_fn(GridSpec::single(geometry, points)?, |x| {
        if x.len() == 1 {
            1.0 + a * (w * x[0]).cos()
        } else {
            1.0 + a * (w * x[0]).sin() * (w * x[1]).sin()
        }
    });
    let mass = raw.mass();
    let initial = raw.scaled(1.0 / mass);
    let count = if p.t_max == 0.0 { 0 } else { (p.t_max / p.snapshot_every).round() as usize };
    let times: Vec<f64> = (0..=count).map(|i| (i as f64 * p.snapshot_every).min(p.t_max)).collect();
    let sim = SimConfig {
        n_particles: p.n_particles,
        sigma: p.sigma,
        dt: p.dt,
        t_max: p.t_max,
        kernel,
        replicas: p.replicas,
        seed: p.seed,
        snapshot_times: times,
        workers: p.workers,
    };
    sim.validate()?;
    Ok((sim, initial))
}

fn load_snapshot(path: &Path) -> Result<chaoslab::particles::ParticleEnsemble> {
    let file = fs::File::open(path).map_err(CliError::io(path))?;
    Ok(read_snapshot(&mut BufReader::new(file))?.0)
}

fn run_custom(
    p: &CustomParams,
    dir: &Path,
    manifest: &mut RunManifest,
    halt_after: Option<usize>,
) -> Result<Option<Verdict>> {
    let (sim, initial) = custom_setup(p)?;
    let steps = sim.snapshot_steps();
    let snap_dir = dir.join(SNAPSHOT_DIR);
    fs::create_dir_all(&snap_dir).map_err(CliError::io(&snap_dir))?;
    let done = manifest.snapshots.len();
    let mut ensemble = match manifest.snapshots.last() {
        Some(last) => load_snapshot(&dir.join(&last.file))?,
        None => sample_initial(&initial, p.n_particles, p.replicas, p.seed)?,
    };
    let mut written = 0usize;
    for (i, &(t, step)) in steps.iter().enumerate().skip(done) {
        advance(&mut ensemble, &sim, step)?;
        let name = format!("{SNAPSHOT_DIR}/snap_{i:05}.bin");
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &ensemble, p.seed)?;
        write_atomic(&dir.join(&name), &bytes)?;
        manifest.snapshots.push(SnapshotEntry { time: t, step, file: name, sha256: sha256_hex(&bytes) });
        manifest.save(dir)?;
        written += 1;
        log::info!("snapshot {i} at t = {:.4}", ensemble.time);
        if halt_after == Some(written) && i + 1 < steps.len() {
            return Ok(None);
        }
    }

    let mut v = Verdict::new(0, "custom");
    let mut series = DiagnosticSeries::new();
    for entry in &manifest.snapshots {
        let ens = load_snapshot(&dir.join(&entry.file))?;
        let est = estimate_marginal(&ens, 1, p.bins)?;
        let t = ens.time;
        series.push(t, "l1_uniform_k1", l1_distance(&est.field, &DensityField::uniform(est.bin_spec))?, est.stderr_l1)?;
        series.push(t, "l2_k1", est.l2.corrected, est.l2.stderr)?;
        if p.n_particles >= 2 && 2 * p.dim <= MAX_HISTOGRAM_DIMS {
            let est2 = estimate_marginal(&ens, 2, None)?;
            series.push(t, "l2_k2", est2.l2.corrected, est2.l2.stderr)?;
        }
    }
    v.series = series;
    v.notes.push(format!("{} snapshots", manifest.snapshots.len()));
    Ok(Some(v))
}
