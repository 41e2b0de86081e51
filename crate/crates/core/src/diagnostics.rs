//! Marginal estimation from particle ensembles and the quantitative audits
//! built on it: L² bound ledgers, relative entropy, CKP, decay-rate fits,
//! chaos distances and the sigma_0 threshold.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{h_minus1_norm, KernelSpec};
use crate::particles::ParticleEnsemble;
use crate::torus::{lp_norm_of, DensityField, GridSpec};

/// Largest histogram dimension `k * d`.
pub const MAX_HISTOGRAM_DIMS: usize = 4;
/// `E|Bin(M,p)/M - p| ~ sqrt(2/pi) sqrt(p/M)`, summed over equiprobable bins.
pub const STDERR_CALIBRATION: f64 = 0.797_884_560_802_865_4;
/// Replica groups used for batch-means error bars.
pub const BATCHES: usize = 20;
/// Default burn-in before rate fits.
pub const T_BURN: f64 = 1.0;

/// Default bins per axis for a `dims`-dimensional histogram.
pub fn default_bins(dims: usize) -> usize {
    match dims {
        1 | 2 => 64,
        3 => 32,
        _ => 8,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2Estimate {
    /// `||f_hat||_{L^2}` of the raw histogram.
    pub raw: f64,
    /// Cross-replica U-statistic, unbiased for the squared norm of the binned marginal.
    pub corrected: f64,
    /// Batch-means standard error of `corrected`.
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct MarginalEstimate {
    pub k: usize,
    pub field: DensityField,
    pub sample_count: usize,
    pub bin_spec: GridSpec,
    pub stderr_l1: f64,
    pub l2: L2Estimate,
}

/// Histogram of the `k`-particle marginal, pooled over `N / k` disjoint blocks per replica.
///
/// Bins are centred on the grid nodes, so the estimate is comparable to cell
/// averages of a reference density around those nodes.
pub fn estimate_marginal(ensemble: &ParticleEnsemble, k: usize, bins: Option<usize>) -> Result<MarginalEstimate> {
    let d = ensemble.dim();
    let n = ensemble.n_particles;
    if k == 0 || k > n {
        return Err(Error::domain(format!("marginal order {k} outside 1..={n}")));
    }
    let dims = k * d;
    if dims > MAX_HISTOGRAM_DIMS {
        return Err(Error::Resource(format!(
            "a {dims}-dimensional histogram exceeds the cap of {MAX_HISTOGRAM_DIMS}"
        )));
    }
    if ensemble.replicas == 0 {
        return Err(Error::domain("empty ensemble"));
    }
    let per_axis = bins.unwrap_or_else(|| default_bins(dims));
    let bin_spec = GridSpec::new(ensemble.geometry, per_axis, dims)?;
    let h = bin_spec.spacing();
    let blocks = n / k;
    let width = n * d;
    let bin_of = |x: f64| (((x / h) + 0.5).floor() as usize) % per_axis;

    let per_replica: Vec<Vec<usize>> = ensemble
        .positions
        .par_chunks(width)
        .map(|rep| {
            let mut flats: Vec<usize> = (0..blocks)
                .map(|b| rep[b * k * d..(b + 1) * k * d].iter().fold(0, |acc, &x| acc * per_axis + bin_of(x)))
                .collect();
            flats.sort_unstable();
            flats
        })
        .collect();

    let m = ensemble.replicas;
    let groups = BATCHES.min(m);
    let mut counts = vec![0u64; bin_spec.len()];
    let mut group_counts = vec![vec![0u64; bin_spec.len()]; groups];
    let mut within = 0u64;
    let mut group_within = vec![0u64; groups];
    for (r, flats) in per_replica.iter().enumerate() {
        let g = r * groups / m;
        for &f in flats {
            counts[f] += 1;
            group_counts[g][f] += 1;
        }
        let w = same_bin_pairs(flats);
        within += w;
        group_within[g] += w;
    }

    let m_eff = m * blocks;
    let cell = bin_spec.cell_volume();
    let scale = 1.0 / (m_eff as f64 * cell);
    let values: Vec<f64> = counts.iter().map(|&c| c as f64 * scale).collect();
    let field = DensityField::new(bin_spec, values)?;
    let raw = field.lp_norm(2.0)?;

    let cross_pairs = |total: u64, within: u64, reps: u64| -> Option<f64> {
        let pairs = (reps * blocks as u64) as f64;
        let denom = pairs * pairs - reps as f64 * (blocks * blocks) as f64;
        (denom > 0.0).then(|| (total as f64 - within as f64) / denom / cell)
    };
    let sum_sq = |c: &[u64]| c.iter().map(|&v| v * v).sum::<u64>();
    let l2 = match cross_pairs(sum_sq(&counts), within, m as u64) {
        None => L2Estimate { raw, corrected: raw, stderr: f64::INFINITY },
        Some(sq) => {
            let corrected = sq.max(0.0).sqrt();
            let mut batch = Vec::with_capacity(groups);
            for g in 0..groups {
                let reps = ((g + 1) * m).div_ceil(groups) - (g * m).div_ceil(groups);
                if let Some(v) = cross_pairs(sum_sq(&group_counts[g]), group_within[g], reps as u64) {
                    batch.push(v.max(0.0).sqrt());
                }
            }
            let stderr = if batch.len() >= 2 {
                let mean = batch.iter().sum::<f64>() / batch.len() as f64;
                let var = batch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (batch.len() - 1) as f64;
                (var / batch.len() as f64).sqrt()
            } else {
                f64::INFINITY
            };
            L2Estimate { raw, corrected, stderr }
        }
    };

    Ok(MarginalEstimate {
        k,
        field,
        sample_count: m_eff,
        bin_spec,
        stderr_l1: STDERR_CALIBRATION * (bin_spec.len() as f64 / m_eff as f64).sqrt(),
        l2,
    })
}

/// Ordered pairs (including self-pairs) falling into the same bin, for sorted indices.
fn same_bin_pairs(sorted: &[usize]) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    for (i, &v) in sorted.iter().enumerate() {
        if i > 0 && sorted[i - 1] == v {
            run += 1;
        } else {
            total += run * run;
            run = 1;
        }
    }
    total + run * run
}

/// Cell averages of `field` over node-centred bins of a coarser grid with `bins` points per axis.
pub fn project_to_bins(field: &DensityField, bins: usize) -> Result<DensityField> {
    let grid = *field.grid();
    let n = grid.points_per_dim();
    if bins == 0 || n % bins != 0 || (n / bins) % 2 != 0 {
        return Err(Error::domain(format!("cannot project {n} points per axis onto {bins} bins")));
    }
    let target = GridSpec::new(grid.geometry(), bins, grid.total_dims())?;
    let r = n / bins;
    let half = r / 2;
    let dims = grid.total_dims();
    // each fine index feeds one bin with weight 1, or two with 1/2 on a bin boundary
    let contrib = |i: usize| -> Vec<(usize, f64)> {
        let shifted = (i + half) % n;
        if shifted % r == 0 {
            vec![(shifted / r % bins, 0.5), ((shifted / r + bins - 1) % bins, 0.5)]
        } else {
            vec![(shifted / r, 1.0)]
        }
    };
    let table: Vec<Vec<(usize, f64)>> = (0..n).map(contrib).collect();
    let mut out = vec![0.0; target.len()];
    let mut idx = vec![0usize; dims];
    for (flat, &v) in field.values().iter().enumerate() {
        grid.multi_index(flat, &mut idx);
        let mut stack: Vec<(usize, f64)> = vec![(0, 1.0)];
        for &i in &idx {
            stack = stack
                .iter()
                .flat_map(|&(acc, w)| table[i].iter().map(move |&(b, wb)| (acc * bins + b, w * wb)))
                .collect();
        }
        for (b, w) in stack {
            out[b] += w * v;
        }
    }
    let norm = 1.0 / (r as f64).powi(dims as i32);
    out.iter_mut().for_each(|v| *v *= norm);
    DensityField::new(target, out)
}

/// `fbar(x_1) ... fbar(x_k)` on the joint grid.
pub fn tensor_power(fbar: &DensityField, k: usize) -> Result<DensityField> {
    let grid = *fbar.grid();
    let d = grid.total_dims();
    if grid.blocks() != 1 {
        return Err(Error::domain("tensor factor must be a one-particle density"));
    }
    let joint = grid.with_blocks(k)?;
    let mut idx = vec![0usize; joint.total_dims()];
    let ppd = grid.points_per_dim();
    let vals = fbar.values();
    let values = (0..joint.len())
        .map(|flat| {
            joint.multi_index(flat, &mut idx);
            idx.chunks(d)
                .map(|block| vals[block.iter().fold(0, |acc, &i| acc * ppd + i)])
                .product()
        })
        .collect();
    DensityField::new(joint, values)
}

pub fn l1_distance(a: &DensityField, b: &DensityField) -> Result<f64> {
    a.difference(b)?.lp_norm(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LedgerMode {
    /// `||f_k|| <= C k^{alpha k}`.
    SuperExponential { alpha: f64 },
    /// `||f_k|| <= C R^k`.
    Exponential { r: f64 },
}

impl LedgerMode {
    pub fn shape(&self, k: usize) -> f64 {
        let kf = k as f64;
        match *self {
            LedgerMode::SuperExponential { alpha } => kf.powf(alpha * kf),
            LedgerMode::Exponential { r } => r.powi(k as i32),
        }
    }

    /// `max(beta, d/4) + 0.05`.
    pub fn default_alpha(beta: f64, d: usize) -> f64 {
        beta.max(d as f64 / 4.0) + 0.05
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerEntry {
    pub t: f64,
    pub k: usize,
    pub l2: f64,
    pub stderr: f64,
    pub bound: f64,
    pub violated: bool,
}

#[derive(Debug, Clone)]
pub struct BoundLedger {
    pub mode: LedgerMode,
    pub c: f64,
    pub series: Vec<LedgerEntry>,
    pub violations: Vec<(f64, usize)>,
}

/// Slack in standard errors before a later-time value counts as a violation.
pub const LEDGER_SLACK: f64 = 3.0;

/// Fit `C` at the earliest time and flag later `(t, k)` exceeding `C * shape(k)` beyond slack.
///
/// `measurements` are `(t, k, ||f_k(t)||_{L^2}, stderr)`.
pub fn l2_bound_check(mode: LedgerMode, measurements: &[(f64, usize, f64, f64)]) -> Result<BoundLedger> {
    let has = |k| measurements.iter().any(|m| m.1 == k);
    if !has(1) || !has(2) {
        return Err(Error::domain("the bound ledger needs k = 1 and k = 2"));
    }
    let t0 = measurements.iter().map(|m| m.0).fold(f64::INFINITY, f64::min);
    let c = measurements
        .iter()
        .filter(|m| m.0 == t0)
        .map(|&(_, k, v, _)| v / mode.shape(k))
        .fold(0.0, f64::max);
    let mut series = Vec::with_capacity(measurements.len());
    let mut violations = Vec::new();
    for &(t, k, l2, stderr) in measurements {
        let bound = c * mode.shape(k);
        let violated = l2 - LEDGER_SLACK * stderr > bound;
        if violated {
            violations.push((t, k));
        }
        series.push(LedgerEntry { t, k, l2, stderr, bound, violated });
    }
    Ok(BoundLedger { mode, c, series, violations })
}

impl BoundLedger {
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "t,k,metric,value,stderr,bound,violated")?;
        for e in &self.series {
            writeln!(w, "{},{},l2,{:.12e},{:.6e},{:.12e},{}", e.t, e.k, e.l2, e.stderr, e.bound, e.violated)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRecord {
    pub t: f64,
    pub metric: String,
    pub value: f64,
    pub error_bar: f64,
}

#[derive(Debug, Clone, Default)]
pub struct DiagnosticSeries {
    records: Vec<SeriesRecord>,
}

impl DiagnosticSeries {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a record; times must increase strictly per metric.
    pub fn push(&mut self, t: f64, metric: &str, value: f64, error_bar: f64) -> Result<()> {
        if let Some(last) = self.records.iter().rev().find(|r| r.metric == metric) {
            if t <= last.t {
                return Err(Error::domain(format!("{metric}: time {t} does not follow {}", last.t)));
            }
        }
        self.records.push(SeriesRecord { t, metric: metric.to_string(), value, error_bar });
        Ok(())
    }

    pub fn records(&self) -> &[SeriesRecord] {
        &self.records
    }

    pub fn metric(&self, metric: &str) -> impl Iterator<Item = &SeriesRecord> {
        let metric = metric.to_string();
        self.records.iter().filter(move |r| r.metric == metric)
    }

    pub fn metrics(&self) -> Vec<String> {
        let mut seen: BTreeMap<&str, ()> = BTreeMap::new();
        for r in &self.records {
            seen.insert(&r.metric, ());
        }
        seen.keys().map(|s| s.to_string()).collect()
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "t,metric,value,stderr")?;
        for r in &self.records {
            writeln!(w, "{},{},{:.12e},{:.6e}", r.t, r.metric, r.value, r.error_bar)?;
        }
        Ok(())
    }
}

/// `(1/k) int (f log(f/g) - f + g)`, which is the relative entropy for equal masses
/// and is pointwise non-negative.
pub fn relative_entropy(f: &DensityField, g: &DensityField, k: usize) -> Result<f64> {
    if f.grid() != g.grid() {
        return Err(Error::domain("fields live on different grids"));
    }
    if k == 0 {
        return Err(Error::domain("normalizer k must be positive"));
    }
    if g.values().iter().any(|&v| v <= 0.0) {
        return Err(Error::domain("reference density vanishes somewhere on the grid"));
    }
    if f.values().iter().any(|&v| v < 0.0) {
        return Err(Error::domain("density has negative values"));
    }
    let s: f64 = f
        .values()
        .iter()
        .zip(g.values())
        .map(|(&a, &b)| if a == 0.0 { b } else { a * (a / b).ln() - a + b })
        .sum();
    Ok(s * f.grid().cell_volume() / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Comparison {
    pub(crate) fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, holds: lhs <= rhs * (1.0 + 1e-12) + 1e-15 }
    }
}

/// `||f - g||_{L^1}^2 <= 2 k H_k(f|g)`.
pub fn ckp_check(f: &DensityField, g: &DensityField, k: usize) -> Result<Comparison> {
    let h = relative_entropy(f, g, k)?;
    let l1 = l1_distance(f, g)?;
    Ok(Comparison::new(l1 * l1, 2.0 * k as f64 * h))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub beta: f64,
    pub r2: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Least-squares slope of `log(value)` against `t` over `t in [t_min, t_max]`; returns `-slope`.
pub fn decay_rate_fit(series: &DiagnosticSeries, metric: &str, t_min: f64, t_max: f64) -> Result<RateFit> {
    let window: Vec<&SeriesRecord> = series.metric(metric).filter(|r| r.t >= t_min && r.t <= t_max).collect();
    let positive: Vec<(f64, f64)> = window.iter().filter(|r| r.value > 0.0).map(|r| (r.t, r.value.ln())).collect();
    if positive.len() < window.len() {
        log::warn!("{metric}: dropped {} non-positive values from the fit window", window.len() - positive.len());
    }
    if positive.len() < 5 {
        return Err(Error::domain(format!("{metric}: need at least 5 positive points, have {}", positive.len())));
    }
    let (slope, intercept, r2) = linear_fit(&positive);
    Ok(RateFit { beta: -slope, r2, intercept, points: positive.len() })
}

/// Ordinary least squares `y = a x + b`; returns `(a, b, r^2)`.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (a, b, r2)
}

/// `||f_{k,N} - fbar^{(x)k}||_{L^p}` on the grid of `f_kn`.
pub fn chaos_distance(f_kn: &DensityField, fbar: &DensityField, k: usize, p: f64) -> Result<f64> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::domain(format!("chaos distance needs 1 <= p <= 2, got {p}")));
    }
    if f_kn.grid().total_dims() > MAX_HISTOGRAM_DIMS {
        return Err(Error::Resource("chaos distance beyond the histogram dimension cap".into()));
    }
    let product = tensor_power(fbar, k)?;
    f_kn.difference(&product)?.lp_norm(p)
}

/// `||h||_{L^p} <= ||h||_{L^1}^{(2-p)/p} ||h||_{L^2}^{2(p-1)/p}`.
pub fn holder_interpolation_check(h: &DensityField, p: f64) -> Result<Comparison> {
    let cell = h.grid().cell_volume();
    let lp = lp_norm_of(h.values(), cell, p)?;
    let l1 = lp_norm_of(h.values(), cell, 1.0)?;
    let l2 = lp_norm_of(h.values(), cell, 2.0)?;
    Ok(Comparison::new(lp, l1.powf((2.0 - p) / p) * l2.powf(2.0 * (p - 1.0) / p)))
}

/// `sigma_0 = R ||K||_{H^-1}`.
pub fn sigma0(r: f64, kernel: &KernelSpec, cutoff: usize) -> Result<f64> {
    Ok(r * h_minus1_norm(kernel, cutoff)?)
}
