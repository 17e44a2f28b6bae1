//! Per-edge linear mixed model with a kinship random effect, fitted by
//! maximum likelihood in the kinship eigenbasis, with Wald tests and a
//! Bonferroni threshold across edges.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::model::{Dataset, Kinship, RotatedData};

pub const LOG10_DELTA_MIN: f64 = -5.0;
pub const LOG10_DELTA_MAX: f64 = 5.0;
pub const GRID_POINTS: usize = 61;
pub const FAMILY_ALPHA: f64 = 0.05;

const GOLDEN_TOL: f64 = 1e-8;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeLmmFit {
    pub beta: f64,
    pub std_error: f64,
    pub p_value: f64,
    pub sigma_g: f64,
    pub sigma_e: f64,
    /// `sigma_e / sigma_g` at the optimum.
    pub delta: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineFit {
    /// One entry per edge; `None` for skipped edges.
    pub edges: Vec<Option<EdgeLmmFit>>,
    pub skipped: Vec<usize>,
    pub threshold: f64,
    pub significant: Vec<usize>,
}

impl BaselineFit {
    /// Effect estimates with skipped edges at zero.
    pub fn estimates(&self) -> Vec<f64> {
        self.edges.iter().map(|f| f.map_or(0.0, |f| f.beta)).collect()
    }
}

struct Profile<'a> {
    y: &'a [f64],
    x: &'a [f64],
    d: &'a [f64],
}

struct Gls {
    beta: f64,
    xwx: f64,
    sigma_g: f64,
    log_likelihood: f64,
}

impl Profile<'_> {
    fn gls(&self, delta: f64) -> Gls {
        let n = self.y.len() as f64;
        let mut xwx = 0.0;
        let mut xwy = 0.0;
        let mut ywy = 0.0;
        let mut log_det = 0.0;
        for ((&y, &x), &d) in self.y.iter().zip(self.x).zip(self.d) {
            let s = d + delta;
            let w = 1.0 / s;
            xwx += w * x * x;
            xwy += w * x * y;
            ywy += w * y * y;
            log_det += s.ln();
        }
        let beta = if xwx > 0.0 { xwy / xwx } else { 0.0 };
        let rss = (ywy - beta * xwy).max(0.0);
        let sigma_g = rss / n;
        let log_likelihood = -0.5 * (n * (LN_2PI + sigma_g.ln() + 1.0) + log_det);
        Gls {
            beta,
            xwx,
            sigma_g,
            log_likelihood,
        }
    }

    fn at_log10(&self, t: f64) -> f64 {
        self.gls(10f64.powf(t)).log_likelihood
    }
}

/// Maximizes `f` on `[a, b]` by golden-section search.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > GOLDEN_TOL {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Fits one rotated edge `y = Q^T a` against `x = Q^T z` with kinship
/// eigenvalues `d`. Returns `None` for an edge without variation.
pub fn fit_edge_lmm(y: &[f64], x: &[f64], d: &[f64]) -> Option<EdgeLmmFit> {
    if y.iter().all(|&v| v == 0.0) || x.iter().all(|&v| v == 0.0) {
        return None;
    }
    let profile = Profile { y, x, d };
    let step = (LOG10_DELTA_MAX - LOG10_DELTA_MIN) / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| LOG10_DELTA_MIN + i as f64 * step)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&t| profile.at_log10(t)).collect();
    let best = (0..GRID_POINTS)
        .max_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("nonempty grid");
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(GRID_POINTS - 1)];
    let refined = golden_max(|t| profile.at_log10(t), lo, hi);
    let t = if profile.at_log10(refined) >= values[best] {
        refined
    } else {
        grid[best]
    };
    let delta = 10f64.powf(t);
    let g = profile.gls(delta);
    if !(g.sigma_g > 0.0) || !(g.xwx > 0.0) {
        return None;
    }
    let std_error = (g.sigma_g / g.xwx).sqrt();
    let z = g.beta / std_error;
    let p_value = erfc(z.abs() / std::f64::consts::SQRT_2).clamp(f64::MIN_POSITIVE, 1.0);
    Some(EdgeLmmFit {
        beta: g.beta,
        std_error,
        p_value,
        sigma_g: g.sigma_g,
        sigma_e: delta * g.sigma_g,
        delta,
        log_likelihood: g.log_likelihood,
    })
}

/// Rotates `a` and `z` by the kinship eigenvectors, then fits.
pub fn fit_edge(a: &[f64], z: &[f64], kinship: &Kinship) -> Option<EdgeLmmFit> {
    fit_edge_lmm(&kinship.rotate(a), &kinship.rotate(z), kinship.eigenvalues())
}

/// Fits every edge of an already projected dataset; an edge is significant
/// when its p-value is below `0.05 / E`.
pub fn fit_all_edges(dataset: &Dataset) -> BaselineFit {
    fit_all_rotated(&RotatedData::new(dataset))
}

pub fn fit_all_rotated(data: &RotatedData) -> BaselineFit {
    let e_count = data.n_edges();
    let edges: Vec<Option<EdgeLmmFit>> = (0..e_count)
        .into_par_iter()
        .map(|e| fit_edge_lmm(data.edge(e), &data.genotype, &data.eigenvalues))
        .collect();
    let skipped: Vec<usize> = edges
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_none())
        .map(|(e, _)| e)
        .collect();
    for &e in &skipped {
        log::warn!("edge {e} has no variation; skipped");
    }
    let threshold = FAMILY_ALPHA / e_count.max(1) as f64;
    let significant = edges
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_some_and(|f| f.p_value < threshold))
        .map(|(e, _)| e)
        .collect();
    BaselineFit {
        edges,
        skipped,
        threshold,
        significant,
    }
}
