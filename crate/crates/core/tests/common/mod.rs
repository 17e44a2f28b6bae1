//! Independent oracles shared by the integration and acceptance tests.
//! Nothing here goes through the eigenbasis caches of the library.

#![allow(dead_code)]

use bnme::model::{edge_pairs, Dataset, GenotypeVector, Kinship, NetworkPhenotype};
use nalgebra::{DMatrix, DVector};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// N = 4, V = 3 instance with a two-family kinship.
pub fn tiny_dataset() -> Dataset {
    let kin = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, 0.5, 0.0, 0.0, //
            0.5, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.9, //
            0.0, 0.0, 0.9, 1.0,
        ],
    );
    let edges = [
        [0.9, -0.3, 1.4, 0.2],
        [-0.6, 0.8, -1.1, 0.5],
        [1.7, 0.1, 0.4, -0.9],
    ];
    let values: Vec<f64> = edges.iter().flatten().copied().collect();
    let phenotype = NetworkPhenotype::new(4, 3, values).unwrap();
    let genotype = GenotypeVector::standardize("g", &[0.0, 1.0, 2.0, 1.0]).unwrap();
    Dataset::new(phenotype, genotype, Kinship::new(kin).unwrap()).unwrap()
}

/// Gaussian log-density of `a ~ N(theta z, sa K + se I)` by dense Cholesky.
pub fn dense_edge_loglik(a: &[f64], z: &[f64], theta: f64, sa: f64, se: f64, k: &DMatrix<f64>) -> f64 {
    let n = a.len();
    let s = k * sa + DMatrix::identity(n, n) * se;
    let chol = s.cholesky().expect("covariance must be positive definite");
    let r = DVector::from_iterator(n, a.iter().zip(z).map(|(a, z)| a - theta * z));
    let sol = chol.solve(&r);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    -0.5 * (n as f64 * LN_2PI + log_det + r.dot(&sol))
}

/// Dense log-likelihood of a whole dataset at an edge-indexed effect matrix.
pub fn dense_loglik(ds: &Dataset, theta: &[f64], sa: &[f64], se: &[f64]) -> f64 {
    (0..ds.n_edges())
        .map(|e| {
            dense_edge_loglik(
                ds.phenotype.edge(e),
                &ds.genotype.values,
                theta[e],
                sa[e],
                se[e],
                ds.kinship.matrix(),
            )
        })
        .sum()
}

/// Edge-indexed `sum_h eta_h theta_hk theta_hl`, straight from the definition.
pub fn assemble(eta: &[f64], loadings: &[Vec<f64>], v: usize) -> Vec<f64> {
    edge_pairs(v)
        .into_iter()
        .map(|(k, l)| {
            eta.iter()
                .zip(loadings)
                .map(|(e, th)| e * th[k] * th[l])
                .sum()
        })
        .collect()
}

pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln() + (x - mean).powi(2) / var)
}

/// Inverse-gamma log-density with shape `alpha` and scale `beta`.
pub fn log_inv_gamma_pdf(x: f64, alpha: f64, beta: f64) -> f64 {
    alpha * beta.ln() - statrs::function::gamma::ln_gamma(alpha) - (alpha + 1.0) * x.ln() - beta / x
}

/// A normalized density tabulated on a uniform grid.
/// `ln ∫ exp(log_f)` over `[lo, hi]` by the trapezoid rule.
pub fn log_integral(log_f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let n = 200_001;
    let step = (hi - lo) / (n - 1) as f64;
    let lf: Vec<f64> = (0..n).map(|i| log_f(lo + i as f64 * step)).collect();
    let max = lf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = lf
        .iter()
        .enumerate()
        .map(|(i, l)| if i == 0 || i == n - 1 { 0.5 } else { 1.0 } * (l - max).exp())
        .sum();
    max + (sum * step).ln()
}

pub struct GridDensity {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

const GRID_POINTS: usize = 40_001;

impl GridDensity {
    /// Tabulates `exp(log_f)` on `[lo, hi]`, then zooms into the region within
    /// 40 log-units of the peak and tabulates again.
    pub fn new(log_f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Self {
        let coarse = Self::tabulate(&log_f, lo, hi);
        let max = coarse.1.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let live: Vec<usize> = (0..coarse.0.len()).filter(|&i| coarse.1[i] > max - 40.0).collect();
        let step = (hi - lo) / (GRID_POINTS - 1) as f64;
        let a = (coarse.0[live[0]] - step).max(lo);
        let b = (coarse.0[*live.last().unwrap()] + step).min(hi);
        let (x, lf) = Self::tabulate(&log_f, a, b);
        let max = lf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = lf.iter().map(|l| (l - max).exp()).collect();
        // trapezoid weights
        w[0] *= 0.5;
        *w.last_mut().unwrap() *= 0.5;
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        GridDensity { x, w }
    }

    fn tabulate(log_f: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
        let step = (hi - lo) / (GRID_POINTS - 1) as f64;
        let x: Vec<f64> = (0..GRID_POINTS).map(|i| lo + i as f64 * step).collect();
        let lf = x.iter().map(|&t| log_f(t)).collect();
        (x, lf)
    }

    pub fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.x.iter().zip(&self.w).map(|(&x, &w)| w * g(x)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|x| x)
    }

    pub fn var(&self) -> f64 {
        let m = self.mean();
        self.expect(|x| (x - m).powi(2))
    }

    /// One-sample Kolmogorov-Smirnov statistic of `draws` against this density.
    pub fn ks_statistic(&self, draws: &[f64]) -> f64 {
        let mut s = draws.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        let mut cum = Vec::with_capacity(self.w.len());
        let mut acc = 0.0;
        for w in &self.w {
            acc += w;
            cum.push(acc);
        }
        let step = self.x[1] - self.x[0];
        let cdf = |t: f64| {
            if t <= self.x[0] {
                return 0.0;
            }
            let pos = (t - self.x[0]) / step;
            let i = pos.floor() as usize;
            if i + 1 >= self.x.len() {
                return 1.0;
            }
            cum[i] + (pos - i as f64) * self.w[i + 1]
        };
        s.iter()
            .enumerate()
            .map(|(i, &t)| {
                let f = cdf(t);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Relative error `|got - want| / scale`.
pub fn rel(got: f64, want: f64, scale: f64) -> f64 {
    (got - want).abs() / scale
}

pub mod linear_checks;
pub mod sampler_checks;
