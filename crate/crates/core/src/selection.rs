//! Posterior decision rules, plug-in BIC, the (H, nu) grid search and the
//! simulation metrics.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BnmeError, Result};
use crate::model::{n_edges, Dataset, EffectMatrix, RotatedData, VarianceField};
use crate::sampler::{
    derive_seed, gelman_rubin, run_chains, ComponentDraws, PosteriorSamples, Rhat,
    SamplerConfig, MIN_DRAWS,
};
use crate::simgen::GroundTruth;

pub const DEFAULT_CUTOFF: f64 = 0.5;
pub const DEFAULT_LEVEL: f64 = 0.95;
/// Number of effect-matrix entries monitored by R-hat.
pub const MONITORED_ENTRIES: usize = 10;

const MONITOR_TAG: u64 = 0x5248_4154;
const GRID_TAG: u64 = 0x4752_4944;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantCall {
    Risk,
    Null,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub n_components: usize,
    pub n_nodes: usize,
    /// Subjects after covariate projection.
    pub n_subjects: usize,
    pub n_chains: usize,
    pub n_draws: usize,
    pub nu: f64,
    /// Component summaries are over relabeled slots (slot 0 is the largest
    /// component in every draw).
    pub eta_mean: Vec<f64>,
    pub eta_sd: Vec<f64>,
    pub tau_mean: Vec<f64>,
    /// Edge-indexed posterior mean of the assembled effect matrix.
    pub theta_mean: Vec<f64>,
    pub theta_lower: Vec<f64>,
    pub theta_upper: Vec<f64>,
    pub credible_level: f64,
    pub sigma_a_mean: Vec<f64>,
    pub sigma_e_mean: Vec<f64>,
    pub selected: Vec<usize>,
    pub significant: Vec<usize>,
    pub variant: VariantCall,
    pub bic: f64,
    pub rhat: Vec<Rhat>,
    pub acceptance_a: Vec<f64>,
    pub acceptance_e: Vec<f64>,
}

impl FitSummary {
    pub fn theta_mean_matrix(&self) -> EffectMatrix {
        EffectMatrix {
            n_nodes: self.n_nodes,
            values: self.theta_mean.clone(),
        }
    }

    pub fn check_invariants(&self) -> Result<()> {
        let e = n_edges(self.n_nodes);
        if self.significant.iter().any(|&s| s >= e) {
            return Err(BnmeError::Data("significant edge out of range".into()));
        }
        if self.selected.iter().any(|&h| h >= self.n_components) {
            return Err(BnmeError::Data("selected component out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub summary: FitSummary,
    pub samples: Vec<PosteriorSamples>,
}

/// Slots whose posterior inclusion probability is strictly above `cutoff`.
pub fn select_from_tau_means(tau_mean: &[f64], cutoff: f64) -> Vec<usize> {
    tau_mean
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > cutoff)
        .map(|(h, _)| h)
        .collect()
}

/// Mean of each relabeled indicator trace, pooled over chains.
pub fn tau_means(draws: &[ComponentDraws]) -> Vec<f64> {
    let h_count = draws.first().map_or(0, |d| d.n_components);
    let total: usize = draws.iter().map(|d| d.n_draws()).sum();
    (0..h_count)
        .map(|h| {
            let s: u64 = draws
                .iter()
                .flat_map(|d| d.tau_trace(h))
                .map(u64::from)
                .sum();
            s as f64 / total.max(1) as f64
        })
        .collect()
}

pub fn select_subnetworks(samples: &[PosteriorSamples], cutoff: f64) -> Vec<usize> {
    let draws: Vec<ComponentDraws> = samples.iter().map(|s| s.relabeled()).collect();
    select_from_tau_means(&tau_means(&draws), cutoff)
}

pub fn declare_variant(selected: &[usize]) -> VariantCall {
    if selected.is_empty() {
        VariantCall::Null
    } else {
        VariantCall::Risk
    }
}

/// Type-7 quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-edge mean and equal-tailed interval of the assembled effect matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeIntervals {
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl EdgeIntervals {
    /// Edges whose interval excludes zero.
    pub fn significant(&self) -> Vec<usize> {
        (0..self.mean.len())
            .filter(|&e| self.lower[e] > 0.0 || self.upper[e] < 0.0)
            .collect()
    }
}

pub fn edge_intervals(samples: &[PosteriorSamples], level: f64) -> Result<EdgeIntervals> {
    if !(level > 0.0 && level < 1.0) {
        return Err(BnmeError::InvalidParameter(format!(
            "credible level must lie in (0, 1), got {level}"
        )));
    }
    let total: usize = samples.iter().map(|s| s.n_draws).sum();
    if total == 0 {
        return Err(BnmeError::InvalidParameter("no posterior draws".into()));
    }
    let e_count = samples[0].n_edges();
    // edge-major buffer of assembled draws
    let mut buf = vec![0.0; e_count * total];
    let mut col = 0;
    for s in samples {
        for d in 0..s.n_draws {
            let theta = s.assembled_theta(d);
            for (e, &t) in theta.values.iter().enumerate() {
                buf[e * total + col] = t;
            }
            col += 1;
        }
    }
    let alpha = (1.0 - level) / 2.0;
    let rows: Vec<(f64, f64, f64)> = buf
        .par_chunks_mut(total)
        .map(|row| {
            let mean = row.iter().sum::<f64>() / total as f64;
            row.sort_unstable_by(f64::total_cmp);
            (
                mean,
                quantile_sorted(row, alpha),
                quantile_sorted(row, 1.0 - alpha),
            )
        })
        .collect();
    Ok(EdgeIntervals {
        mean: rows.iter().map(|r| r.0).collect(),
        lower: rows.iter().map(|r| r.1).collect(),
        upper: rows.iter().map(|r| r.2).collect(),
    })
}

pub fn significant_edges(samples: &[PosteriorSamples], level: f64) -> Result<Vec<usize>> {
    Ok(edge_intervals(samples, level)?.significant())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    /// Absent when the true support is empty.
    pub sensitivity: Option<f64>,
    /// Absent when every edge is in the true support.
    pub specificity: Option<f64>,
}

/// RMSE of the genetic signal `theta_kl z_i` over subjects and edges, and
/// edge-selection sensitivity and specificity against the true support.
pub fn compute_metrics(
    estimate: &[f64],
    significant: &[usize],
    truth: &GroundTruth,
    genotype: &[f64],
) -> Result<Metrics> {
    let e_count = truth.theta.values.len();
    if estimate.len() != e_count {
        return Err(BnmeError::DimensionMismatch(format!(
            "estimate has {} edges, truth {}",
            estimate.len(),
            e_count
        )));
    }
    let z2 = genotype.iter().map(|z| z * z).sum::<f64>() / genotype.len().max(1) as f64;
    let sq = estimate
        .iter()
        .zip(&truth.theta.values)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / e_count.max(1) as f64;
    let mut in_support = vec![false; e_count];
    for &e in &truth.support {
        in_support[e] = true;
    }
    let mut flagged = vec![false; e_count];
    for &e in significant {
        flagged[e] = true;
    }
    let positives = truth.support.len();
    let negatives = e_count - positives;
    let tp = (0..e_count).filter(|&e| in_support[e] && flagged[e]).count();
    let tn = (0..e_count).filter(|&e| !in_support[e] && !flagged[e]).count();
    Ok(Metrics {
        rmse: (sq * z2).sqrt(),
        sensitivity: (positives > 0).then(|| tp as f64 / positives as f64),
        specificity: (negatives > 0).then(|| tn as f64 / negatives as f64),
    })
}

/// `-2 loglik + d log(n_eff)` with `d = n_selected (V + 1)`.
pub fn bic_from_parts(log_likelihood: f64, n_selected: usize, n_nodes: usize, n_eff: f64) -> f64 {
    -2.0 * log_likelihood + (n_selected * (n_nodes + 1)) as f64 * n_eff.ln()
}

/// Posterior mean of the effect matrix restricted to the given relabeled slots.
pub fn selected_theta_mean(draws: &[ComponentDraws], selected: &[usize]) -> EffectMatrix {
    let v = draws.first().map_or(0, |d| d.n_nodes);
    let mut out = EffectMatrix::zeros(v);
    let total: usize = draws.iter().map(|d| d.n_draws()).sum();
    if total == 0 {
        return out;
    }
    for cd in draws {
        for d in 0..cd.n_draws() {
            for &h in selected {
                let eta = cd.eta[d * cd.n_components + h];
                let th = cd.theta_draw(d, h);
                let mut e = 0;
                for k in 0..v {
                    let w = eta * th[k];
                    for l in (k + 1)..v {
                        out.values[e] += w * th[l];
                        e += 1;
                    }
                }
            }
        }
    }
    for x in &mut out.values {
        *x /= total as f64;
    }
    out
}

/// Posterior mean variance field pooled over chains.
pub fn variance_mean(samples: &[PosteriorSamples]) -> VarianceField {
    let e_count = samples[0].n_edges();
    let mut a = vec![0.0; e_count];
    let mut b = vec![0.0; e_count];
    let mut total = 0usize;
    for s in samples {
        for d in 0..s.n_draws {
            for (x, y) in a.iter_mut().zip(s.sigma_a_draw(d)) {
                *x += y;
            }
            for (x, y) in b.iter_mut().zip(s.sigma_e_draw(d)) {
                *x += y;
            }
            total += 1;
        }
    }
    let t = total.max(1) as f64;
    VarianceField {
        sigma_a: a.into_iter().map(|x| x / t).collect(),
        sigma_e: b.into_iter().map(|x| x / t).collect(),
    }
}

/// Plug-in BIC at the selected-slot posterior mean and the mean variance field.
pub fn bic_score(
    data: &RotatedData,
    draws: &[ComponentDraws],
    variance: &VarianceField,
    selected: &[usize],
) -> f64 {
    let theta = selected_theta_mean(draws, selected);
    let ll = data.log_likelihood(&theta, variance);
    let n_eff = (data.n_subjects * data.n_edges()) as f64;
    bic_from_parts(ll, selected.len(), data.n_nodes, n_eff)
}

/// R-hat of the log-likelihood, every relabeled eta and a fixed random subset
/// of effect-matrix entries. Empty when there are fewer than two chains or
/// too few draws.
pub fn monitor_rhat(
    samples: &[PosteriorSamples],
    draws: &[ComponentDraws],
    seed: u64,
) -> Result<Vec<Rhat>> {
    if samples.len() < 2 || samples[0].n_draws < MIN_DRAWS {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let ll: Vec<&[f64]> = samples.iter().map(|s| s.log_likelihood.as_slice()).collect();
    out.push(gelman_rubin("log_likelihood", &ll)?);
    for h in 0..draws[0].n_components {
        let traces: Vec<Vec<f64>> = draws.iter().map(|d| d.eta_trace(h)).collect();
        let refs: Vec<&[f64]> = traces.iter().map(|t| t.as_slice()).collect();
        out.push(gelman_rubin(&format!("eta[{h}]"), &refs)?);
    }
    let e_count = samples[0].n_edges();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, MONITOR_TAG));
    let mut edges = sample(&mut rng, e_count, MONITORED_ENTRIES.min(e_count)).into_vec();
    edges.sort_unstable();
    let pairs = crate::model::edge_pairs(samples[0].n_nodes);
    let assembled: Vec<Vec<EffectMatrix>> = samples
        .iter()
        .map(|s| (0..s.n_draws).map(|d| s.assembled_theta(d)).collect())
        .collect();
    for e in edges {
        let traces: Vec<Vec<f64>> = assembled
            .iter()
            .map(|c| c.iter().map(|m| m.values[e]).collect())
            .collect();
        let refs: Vec<&[f64]> = traces.iter().map(|t| t.as_slice()).collect();
        let (k, l) = pairs[e];
        out.push(gelman_rubin(&format!("theta[{},{}]", k + 1, l + 1), &refs)?);
    }
    Ok(out)
}

/// Summarizes finished chains.
pub fn summarize(
    data: &RotatedData,
    samples: Vec<PosteriorSamples>,
    config: &SamplerConfig,
    level: f64,
) -> Result<FitOutput> {
    if samples.is_empty() || samples[0].n_draws == 0 {
        return Err(BnmeError::InvalidParameter("no posterior draws".into()));
    }
    let draws: Vec<ComponentDraws> = samples.iter().map(|s| s.relabeled()).collect();
    let h_count = config.n_components;
    let total: usize = draws.iter().map(|d| d.n_draws()).sum();
    let mut eta_mean = vec![0.0; h_count];
    let mut eta_sd = vec![0.0; h_count];
    for h in 0..h_count {
        let all: Vec<f64> = draws.iter().flat_map(|d| d.eta_trace(h)).collect();
        let m = all.iter().sum::<f64>() / total as f64;
        let var = if total > 1 {
            all.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (total - 1) as f64
        } else {
            0.0
        };
        eta_mean[h] = m;
        eta_sd[h] = var.sqrt();
    }
    let tau_mean = tau_means(&draws);
    let selected = select_from_tau_means(&tau_mean, DEFAULT_CUTOFF);
    let intervals = edge_intervals(&samples, level)?;
    let significant = intervals.significant();
    let variance = variance_mean(&samples);
    let bic = bic_score(data, &draws, &variance, &selected);
    let rhat = monitor_rhat(&samples, &draws, config.seed)?;
    let summary = FitSummary {
        n_components: h_count,
        n_nodes: data.n_nodes,
        n_subjects: data.n_subjects,
        n_chains: samples.len(),
        n_draws: total,
        nu: config.hyper.nu,
        eta_mean,
        eta_sd,
        tau_mean,
        theta_mean: intervals.mean,
        theta_lower: intervals.lower,
        theta_upper: intervals.upper,
        credible_level: level,
        sigma_a_mean: variance.sigma_a,
        sigma_e_mean: variance.sigma_e,
        variant: declare_variant(&selected),
        selected,
        significant,
        bic,
        rhat,
        acceptance_a: samples.iter().map(|s| s.acceptance_a).collect(),
        acceptance_e: samples.iter().map(|s| s.acceptance_e).collect(),
    };
    Ok(FitOutput { summary, samples })
}

/// Runs all chains on an already projected dataset and summarizes them.
pub fn fit(dataset: &Dataset, config: &SamplerConfig, level: f64) -> Result<FitOutput> {
    let data = RotatedData::new(dataset);
    fit_rotated(&data, config, level)
}

pub fn fit_rotated(data: &RotatedData, config: &SamplerConfig, level: f64) -> Result<FitOutput> {
    let samples = run_chains(data, config)?;
    summarize(data, samples, config, level)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub n_components: usize,
    pub nu: f64,
    pub seed: u64,
    pub bic: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best_components: usize,
    pub best_nu: f64,
    pub cells: Vec<GridCell>,
    pub fit: FitOutput,
}

/// One fit per `(H, nu)` cell with seeds derived from `config.seed`; the
/// lowest BIC wins, ties going to smaller H and then smaller nu.
pub fn grid_search(
    dataset: &Dataset,
    h_grid: &[usize],
    nu_grid: &[f64],
    config: &SamplerConfig,
    level: f64,
) -> Result<GridResult> {
    grid_search_rotated(&RotatedData::new(dataset), h_grid, nu_grid, config, level)
}

pub fn grid_search_rotated(
    data: &RotatedData,
    h_grid: &[usize],
    nu_grid: &[f64],
    config: &SamplerConfig,
    level: f64,
) -> Result<GridResult> {
    if h_grid.is_empty() || nu_grid.is_empty() {
        return Err(BnmeError::InvalidParameter("grids must be nonempty".into()));
    }
    let mut cells: Vec<(usize, f64, SamplerConfig)> = Vec::new();
    for &h in h_grid {
        for &nu in nu_grid {
            let mut cfg = config.clone();
            cfg.n_components = h;
            cfg.hyper.nu = nu;
            cfg.seed = derive_seed(config.seed, GRID_TAG ^ cells.len() as u64);
            cells.push((h, nu, cfg));
        }
    }
    let fits: Vec<Result<FitOutput>> = cells
        .par_iter()
        .map(|(_, _, cfg)| fit_rotated(data, cfg, level))
        .collect();
    let mut report = Vec::with_capacity(cells.len());
    let mut best: Option<(usize, FitOutput)> = None;
    for (i, ((h, nu, cfg), result)) in cells.iter().zip(fits).enumerate() {
        match result {
            Ok(out) => {
                report.push(GridCell {
                    n_components: *h,
                    nu: *nu,
                    seed: cfg.seed,
                    bic: Some(out.summary.bic),
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some((j, b)) => {
                        let (bh, bnu) = (cells[*j].0, cells[*j].1);
                        out.summary
                            .bic
                            .total_cmp(&b.summary.bic)
                            .then(h.cmp(&bh))
                            .then(nu.total_cmp(&bnu))
                            .is_lt()
                    }
                };
                if better {
                    best = Some((i, out));
                }
            }
            Err(err) => {
                log::warn!("grid cell H={h} nu={nu} failed: {err}");
                report.push(GridCell {
                    n_components: *h,
                    nu: *nu,
                    seed: cfg.seed,
                    bic: None,
                    error: Some(err.to_string()),
                });
            }
        }
    }
    let (i, fit) = best.ok_or_else(|| BnmeError::Data("every grid cell failed".into()))?;
    Ok(GridResult {
        best_components: cells[i].0,
        best_nu: cells[i].1,
        cells: report,
        fit,
    })
}
