//! Domain types for the network-response mixed model and the per-edge
//! covariance algebra shared by the sampler, model selection and baseline.
//!
//! Every unordered node pair `(k, l)` with `k < l` is an *edge*; edges are
//! numbered row-major over the strict upper triangle. Phenotype values are
//! stored edge-major (one contiguous length-N vector per edge), which is also
//! the column-major layout of an `N x E` matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{BnmeError, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Number of unordered node pairs for `n_nodes` nodes.
pub fn n_edges(n_nodes: usize) -> usize {
    n_nodes * n_nodes.saturating_sub(1) / 2
}

/// Linear index of the unordered pair `{k, l}`; `k != l` required.
pub fn edge_index(n_nodes: usize, k: usize, l: usize) -> usize {
    debug_assert!(k != l && k < n_nodes && l < n_nodes);
    let (k, l) = if k < l { (k, l) } else { (l, k) };
    k * n_nodes - k * (k + 1) / 2 + (l - k - 1)
}

/// All node pairs `(k, l)`, `k < l`, in edge-index order.
pub fn edge_pairs(n_nodes: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(n_edges(n_nodes));
    for k in 0..n_nodes {
        for l in (k + 1)..n_nodes {
            pairs.push((k, l));
        }
    }
    pairs
}

/// N subjects by E unordered connections, stored edge-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkPhenotype {
    n_subjects: usize,
    n_nodes: usize,
    values: Vec<f64>,
}

impl NetworkPhenotype {
    /// `values` holds `n_edges(n_nodes)` blocks of `n_subjects` entries.
    pub fn new(n_subjects: usize, n_nodes: usize, values: Vec<f64>) -> Result<Self> {
        if n_nodes < 2 {
            return Err(BnmeError::InvalidParameter(format!(
                "a network needs at least 2 nodes, got {n_nodes}"
            )));
        }
        let expected = n_edges(n_nodes) * n_subjects;
        if values.len() != expected {
            return Err(BnmeError::DimensionMismatch(format!(
                "phenotype store has {} values, expected {} ({} edges x {} subjects)",
                values.len(),
                expected,
                n_edges(n_nodes),
                n_subjects
            )));
        }
        Ok(NetworkPhenotype {
            n_subjects,
            n_nodes,
            values,
        })
    }

    pub fn zeros(n_subjects: usize, n_nodes: usize) -> Self {
        NetworkPhenotype {
            n_subjects,
            n_nodes,
            values: vec![0.0; n_edges(n_nodes) * n_subjects],
        }
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        n_edges(self.n_nodes)
    }

    pub fn edge(&self, e: usize) -> &[f64] {
        &self.values[e * self.n_subjects..(e + 1) * self.n_subjects]
    }

    pub fn edge_mut(&mut self, e: usize) -> &mut [f64] {
        let n = self.n_subjects;
        &mut self.values[e * n..(e + 1) * n]
    }

    /// Connection `(k, l)` of subject `i`; `None` on the diagonal.
    pub fn value(&self, i: usize, k: usize, l: usize) -> Option<f64> {
        if k == l {
            None
        } else {
            Some(self.edge(edge_index(self.n_nodes, k, l))[i])
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// View as an `N x E` column-major matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n_subjects, self.n_edges(), &self.values)
    }

    pub fn from_matrix(n_nodes: usize, m: &DMatrix<f64>) -> Result<Self> {
        NetworkPhenotype::new(m.nrows(), n_nodes, m.as_slice().to_vec())
    }
}

/// Symmetric PSD relatedness matrix with its cached eigendecomposition.
#[derive(Debug, Clone)]
pub struct Kinship {
    matrix: DMatrix<f64>,
    eigenvectors: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

/// Relative asymmetry tolerated before a kinship matrix is rejected.
pub const KINSHIP_SYMMETRY_TOL: f64 = 1e-10;
/// Negative eigenvalues above `-KINSHIP_PSD_TOL * max(1, lambda_max)` are clamped to zero.
pub const KINSHIP_PSD_TOL: f64 = 1e-6;

impl Kinship {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(BnmeError::DimensionMismatch(format!(
                "kinship must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(BnmeError::Data("kinship contains non-finite entries".into()));
        }
        let scale = matrix.amax().max(1.0);
        let mut asym: f64 = 0.0;
        let n = matrix.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                asym = asym.max((matrix[(i, j)] - matrix[(j, i)]).abs());
            }
        }
        if asym > KINSHIP_SYMMETRY_TOL * scale {
            return Err(BnmeError::NotSymmetric(asym));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        Self::from_symmetric(sym)
    }

    /// Exact symmetrization is the caller's responsibility.
    fn from_symmetric(matrix: DMatrix<f64>) -> Result<Self> {
        let eig = SymmetricEigen::new(matrix.clone());
        let max = eig.eigenvalues.max().max(1.0);
        let min = eig.eigenvalues.min();
        if min < -KINSHIP_PSD_TOL * max {
            return Err(BnmeError::NotPsd(min));
        }
        let eigenvalues = eig.eigenvalues.iter().map(|&d| d.max(0.0)).collect();
        Ok(Kinship {
            matrix,
            eigenvectors: eig.eigenvectors,
            eigenvalues,
        })
    }

    /// Re-symmetrizes `matrix` before decomposing; used after projection.
    pub fn from_matrix_symmetrized(matrix: DMatrix<f64>) -> Result<Self> {
        let sym = (&matrix + matrix.transpose()) * 0.5;
        Self::from_symmetric(sym)
    }

    pub fn identity(n: usize) -> Self {
        Kinship {
            matrix: DMatrix::identity(n, n),
            eigenvectors: DMatrix::identity(n, n),
            eigenvalues: vec![1.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `Q^T v`
    pub fn rotate(&self, v: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(v);
        self.eigenvectors.tr_mul(&v).as_slice().to_vec()
    }

    /// `Q v`
    pub fn unrotate(&self, v: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(v);
        (&self.eigenvectors * v).as_slice().to_vec()
    }
}

/// One standardized SNP.
#[derive(Debug, Clone, PartialEq)]
pub struct GenotypeVector {
    pub snp_id: String,
    pub values: Vec<f64>,
}

impl GenotypeVector {
    /// Centers to mean 0 and scales to unit sample variance (n - 1 denominator).
    pub fn standardize(snp_id: impl Into<String>, raw: &[f64]) -> Result<Self> {
        let snp_id = snp_id.into();
        let n = raw.len();
        if n < 2 {
            return Err(BnmeError::InvalidParameter(format!(
                "genotype `{snp_id}` needs at least 2 subjects"
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(BnmeError::Data(format!("genotype `{snp_id}` has non-finite dosages")));
        }
        let mean = raw.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = raw.iter().map(|&v| v - mean).collect();
        let var = centered.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;
        if var <= 1e-12 {
            return Err(BnmeError::ConstantGenotype(snp_id));
        }
        let sd = var.sqrt();
        Ok(GenotypeVector {
            snp_id,
            values: centered.into_iter().map(|v| v / sd).collect(),
        })
    }

    /// Wraps already-transformed values (e.g. after projection).
    pub fn from_values(snp_id: impl Into<String>, values: Vec<f64>) -> Self {
        GenotypeVector {
            snp_id: snp_id.into(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Rank-one components `eta_h * theta_h theta_h^T` with their indicators and
/// the local scales of the Laplace scale-mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectComponents {
    pub n_nodes: usize,
    pub eta: Vec<f64>,
    pub tau: Vec<bool>,
    /// `H x V`, row h holds theta_h.
    pub theta: Vec<f64>,
    /// `H x V`, row h holds the diagonal of D_h.
    pub local_scales: Vec<f64>,
}

impl EffectComponents {
    pub fn zeros(n_components: usize, n_nodes: usize) -> Self {
        EffectComponents {
            n_nodes,
            eta: vec![0.0; n_components],
            tau: vec![false; n_components],
            theta: vec![0.0; n_components * n_nodes],
            local_scales: vec![1.0; n_components * n_nodes],
        }
    }

    /// Builds components with `tau_h = (eta_h != 0)` and unit local scales.
    pub fn from_parts(eta: Vec<f64>, thetas: &[Vec<f64>]) -> Result<Self> {
        if eta.len() != thetas.len() || eta.is_empty() {
            return Err(BnmeError::DimensionMismatch(format!(
                "{} weights for {} loading vectors",
                eta.len(),
                thetas.len()
            )));
        }
        let v = thetas[0].len();
        if thetas.iter().any(|t| t.len() != v) {
            return Err(BnmeError::DimensionMismatch(
                "loading vectors differ in length".into(),
            ));
        }
        let tau = eta.iter().map(|&e| e != 0.0).collect();
        Ok(EffectComponents {
            n_nodes: v,
            tau,
            theta: thetas.concat(),
            local_scales: vec![1.0; eta.len() * v],
            eta,
        })
    }

    pub fn n_components(&self) -> usize {
        self.eta.len()
    }

    pub fn theta_row(&self, h: usize) -> &[f64] {
        &self.theta[h * self.n_nodes..(h + 1) * self.n_nodes]
    }

    pub fn theta_row_mut(&mut self, h: usize) -> &mut [f64] {
        let v = self.n_nodes;
        &mut self.theta[h * v..(h + 1) * v]
    }

    pub fn local_scale_row(&self, h: usize) -> &[f64] {
        &self.local_scales[h * self.n_nodes..(h + 1) * self.n_nodes]
    }

    pub fn check_invariants(&self) -> Result<()> {
        let h = self.n_components();
        if self.tau.len() != h
            || self.theta.len() != h * self.n_nodes
            || self.local_scales.len() != h * self.n_nodes
        {
            return Err(BnmeError::DimensionMismatch(
                "effect component arrays disagree on H or V".into(),
            ));
        }
        for (c, (&t, &e)) in self.tau.iter().zip(&self.eta).enumerate() {
            if !t && e != 0.0 {
                return Err(BnmeError::InvalidParameter(format!(
                    "component {c} has tau = 0 but eta = {e}"
                )));
            }
        }
        if self.local_scales.iter().any(|&s| !(s > 0.0)) {
            return Err(BnmeError::InvalidParameter(
                "local scales must be strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-edge polygenic and environmental variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceField {
    pub sigma_a: Vec<f64>,
    pub sigma_e: Vec<f64>,
}

impl VarianceField {
    pub fn constant(n_edges: usize, sigma_a: f64, sigma_e: f64) -> Self {
        VarianceField {
            sigma_a: vec![sigma_a; n_edges],
            sigma_e: vec![sigma_e; n_edges],
        }
    }

    pub fn n_edges(&self) -> usize {
        self.sigma_a.len()
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.sigma_a.len() != self.sigma_e.len() {
            return Err(BnmeError::DimensionMismatch(
                "sigma_a and sigma_e lengths differ".into(),
            ));
        }
        if self
            .sigma_a
            .iter()
            .chain(&self.sigma_e)
            .any(|&s| !(s > 0.0) || !s.is_finite())
        {
            return Err(BnmeError::InvalidParameter(
                "edge variances must be finite and strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// Prior and proposal constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Slab variance of eta.
    pub omega: f64,
    /// Laplace rate of the loadings.
    pub nu: f64,
    /// Inverse-gamma shape for the edge variances.
    pub alpha: f64,
    /// Inverse-gamma scale for the edge variances.
    pub beta: f64,
    pub rho_a: f64,
    pub rho_e: f64,
    pub tau_prior: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            omega: 100.0,
            nu: 1.0,
            alpha: 0.01,
            beta: 0.01,
            rho_a: 0.1,
            rho_e: 0.1,
            tau_prior: 0.5,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("omega", self.omega),
            ("nu", self.nu),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("rho_a", self.rho_a),
            ("rho_e", self.rho_e),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(BnmeError::InvalidParameter(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        if !(self.tau_prior > 0.0 && self.tau_prior < 1.0) {
            return Err(BnmeError::InvalidParameter(format!(
                "tau prior must lie in (0, 1), got {}",
                self.tau_prior
            )));
        }
        Ok(())
    }
}

/// Symmetric hollow V x V matrix stored over edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectMatrix {
    pub n_nodes: usize,
    pub values: Vec<f64>,
}

impl EffectMatrix {
    pub fn zeros(n_nodes: usize) -> Self {
        EffectMatrix {
            n_nodes,
            values: vec![0.0; n_edges(n_nodes)],
        }
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        if k == l {
            0.0
        } else {
            self.values[edge_index(self.n_nodes, k, l)]
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let v = self.n_nodes;
        DMatrix::from_fn(v, v, |k, l| self.get(k, l))
    }
}

/// `sum_h eta_h theta_h theta_h^T` with the diagonal removed.
pub fn assemble_theta(effects: &EffectComponents) -> EffectMatrix {
    let v = effects.n_nodes;
    let mut out = EffectMatrix::zeros(v);
    for h in 0..effects.n_components() {
        let eta = effects.eta[h];
        if eta == 0.0 {
            continue;
        }
        let th = effects.theta_row(h);
        let mut e = 0;
        for k in 0..v {
            let w = eta * th[k];
            for l in (k + 1)..v {
                out.values[e] += w * th[l];
                e += 1;
            }
        }
    }
    out
}

/// `sigma_a * Lambda + sigma_e * I` for one edge, applied through the kinship eigenbasis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeCovariance {
    pub sigma_a: f64,
    pub sigma_e: f64,
}

impl EdgeCovariance {
    pub fn new(sigma_a: f64, sigma_e: f64) -> Result<Self> {
        if !(sigma_a > 0.0) || !(sigma_e > 0.0) {
            return Err(BnmeError::InvalidParameter(format!(
                "edge variances must be positive (sigma_a = {sigma_a}, sigma_e = {sigma_e})"
            )));
        }
        Ok(EdgeCovariance { sigma_a, sigma_e })
    }

    /// Eigenvalues of the covariance, one per kinship eigenvector.
    pub fn spectrum<'a>(&'a self, kinship: &'a Kinship) -> impl Iterator<Item = f64> + 'a {
        kinship
            .eigenvalues()
            .iter()
            .map(move |&d| self.sigma_a * d + self.sigma_e)
    }

    pub fn solve(&self, kinship: &Kinship, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != kinship.n() {
            return Err(BnmeError::DimensionMismatch(format!(
                "rhs has length {}, kinship is {}x{}",
                rhs.len(),
                kinship.n(),
                kinship.n()
            )));
        }
        let mut rot = kinship.rotate(rhs);
        for (r, s) in rot.iter_mut().zip(self.spectrum(kinship)) {
            *r /= s;
        }
        Ok(kinship.unrotate(&rot))
    }

    pub fn log_det(&self, kinship: &Kinship) -> f64 {
        self.spectrum(kinship).map(f64::ln).sum()
    }
}

/// `(sigma_a * Lambda + sigma_e * I)^{-1} rhs` together with the log-determinant.
pub fn edge_covariance_solve(
    variance: &VarianceField,
    edge: usize,
    kinship: &Kinship,
    rhs: &[f64],
) -> Result<(Vec<f64>, f64)> {
    if edge >= variance.n_edges() {
        return Err(BnmeError::IndexOutOfRange {
            what: "edge",
            index: edge,
            limit: variance.n_edges(),
        });
    }
    let cov = EdgeCovariance::new(variance.sigma_a[edge], variance.sigma_e[edge])?;
    let x = cov.solve(kinship, rhs)?;
    Ok((x, cov.log_det(kinship)))
}

fn check_dims(
    data: &NetworkPhenotype,
    genotype: &GenotypeVector,
    effects: &EffectComponents,
    variance: &VarianceField,
    kinship: &Kinship,
) -> Result<()> {
    let n = data.n_subjects();
    if genotype.len() != n || kinship.n() != n {
        return Err(BnmeError::DimensionMismatch(format!(
            "subjects: phenotype {n}, genotype {}, kinship {}",
            genotype.len(),
            kinship.n()
        )));
    }
    if effects.n_nodes != data.n_nodes() {
        return Err(BnmeError::DimensionMismatch(format!(
            "nodes: phenotype {}, effects {}",
            data.n_nodes(),
            effects.n_nodes
        )));
    }
    if variance.n_edges() != data.n_edges() {
        return Err(BnmeError::DimensionMismatch(format!(
            "edges: phenotype {}, variance field {}",
            data.n_edges(),
            variance.n_edges()
        )));
    }
    Ok(())
}

/// Marginal Gaussian log-likelihood summed over the given edges.
pub fn log_likelihood_edges(
    data: &NetworkPhenotype,
    genotype: &GenotypeVector,
    effects: &EffectComponents,
    variance: &VarianceField,
    kinship: &Kinship,
    edges: &[usize],
) -> Result<f64> {
    check_dims(data, genotype, effects, variance, kinship)?;
    let theta = assemble_theta(effects);
    let n = data.n_subjects();
    let mut total = 0.0;
    let mut resid = vec![0.0; n];
    for &e in edges {
        if e >= data.n_edges() {
            return Err(BnmeError::IndexOutOfRange {
                what: "edge",
                index: e,
                limit: data.n_edges(),
            });
        }
        let t = theta.values[e];
        for ((r, &a), &z) in resid.iter_mut().zip(data.edge(e)).zip(&genotype.values) {
            *r = a - t * z;
        }
        let (solved, log_det) = edge_covariance_solve(variance, e, kinship, &resid)?;
        let quad: f64 = resid.iter().zip(&solved).map(|(a, b)| a * b).sum();
        total += -0.5 * (n as f64 * LN_2PI + log_det + quad);
    }
    Ok(total)
}

/// Marginal Gaussian log-likelihood over all edges.
pub fn log_likelihood(
    data: &NetworkPhenotype,
    genotype: &GenotypeVector,
    effects: &EffectComponents,
    variance: &VarianceField,
    kinship: &Kinship,
) -> Result<f64> {
    let all: Vec<usize> = (0..data.n_edges()).collect();
    log_likelihood_edges(data, genotype, effects, variance, kinship, &all)
}

/// Observed edges minus the fixed-effect contribution of every component except `h`.
pub fn residual_for_component(
    data: &NetworkPhenotype,
    genotype: &GenotypeVector,
    effects: &EffectComponents,
    h: usize,
) -> Result<NetworkPhenotype> {
    if h >= effects.n_components() {
        return Err(BnmeError::IndexOutOfRange {
            what: "component",
            index: h,
            limit: effects.n_components(),
        });
    }
    if genotype.len() != data.n_subjects() || effects.n_nodes != data.n_nodes() {
        return Err(BnmeError::DimensionMismatch(
            "phenotype, genotype and effects disagree".into(),
        ));
    }
    let mut others = effects.clone();
    others.eta[h] = 0.0;
    let theta = assemble_theta(&others);
    let mut out = data.clone();
    for e in 0..data.n_edges() {
        let t = theta.values[e];
        if t == 0.0 {
            continue;
        }
        for (a, &z) in out.edge_mut(e).iter_mut().zip(&genotype.values) {
            *a -= t * z;
        }
    }
    Ok(out)
}

/// A phenotype, one genotype and the kinship for the same subjects.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub phenotype: NetworkPhenotype,
    pub genotype: GenotypeVector,
    pub kinship: Kinship,
}

impl Dataset {
    pub fn new(
        phenotype: NetworkPhenotype,
        genotype: GenotypeVector,
        kinship: Kinship,
    ) -> Result<Self> {
        let n = phenotype.n_subjects();
        if genotype.len() != n || kinship.n() != n {
            return Err(BnmeError::DimensionMismatch(format!(
                "subjects: phenotype {n}, genotype {}, kinship {}",
                genotype.len(),
                kinship.n()
            )));
        }
        Ok(Dataset {
            phenotype,
            genotype,
            kinship,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.phenotype.n_subjects()
    }

    pub fn n_nodes(&self) -> usize {
        self.phenotype.n_nodes()
    }

    pub fn n_edges(&self) -> usize {
        self.phenotype.n_edges()
    }
}

/// Dataset rotated into the kinship eigenbasis. Built once per fit; every
/// per-edge covariance operation is then diagonal.
#[derive(Debug, Clone)]
pub struct RotatedData {
    pub n_subjects: usize,
    pub n_nodes: usize,
    pub eigenvalues: Vec<f64>,
    /// `Q^T z`
    pub genotype: Vec<f64>,
    /// `Q^T a_e`, edge-major.
    pub edges: Vec<f64>,
}

impl RotatedData {
    pub fn new(dataset: &Dataset) -> Self {
        let q = dataset.kinship.eigenvectors();
        let a = dataset.phenotype.to_matrix();
        let rotated = q.tr_mul(&a);
        RotatedData {
            n_subjects: dataset.n_subjects(),
            n_nodes: dataset.n_nodes(),
            eigenvalues: dataset.kinship.eigenvalues().to_vec(),
            genotype: dataset.kinship.rotate(&dataset.genotype.values),
            edges: rotated.as_slice().to_vec(),
        }
    }

    pub fn n_edges(&self) -> usize {
        n_edges(self.n_nodes)
    }

    pub fn edge(&self, e: usize) -> &[f64] {
        &self.edges[e * self.n_subjects..(e + 1) * self.n_subjects]
    }

    /// Sufficient statistics of one edge under the given variances.
    pub fn edge_stats(&self, e: usize, sigma_a: f64, sigma_e: f64) -> EdgeStats {
        EdgeStats::compute(
            self.edge(e),
            &self.genotype,
            &self.eigenvalues,
            sigma_a,
            sigma_e,
        )
    }

    /// Log-likelihood for an assembled effect matrix and variance field.
    pub fn log_likelihood(&self, theta: &EffectMatrix, variance: &VarianceField) -> f64 {
        (0..self.n_edges())
            .map(|e| {
                self.edge_stats(e, variance.sigma_a[e], variance.sigma_e[e])
                    .log_density(theta.values[e])
            })
            .sum()
    }
}

/// Weighted cross products of one rotated edge `a` and rotated genotype `z`
/// with weights `w_i = 1 / (sigma_a d_i + sigma_e)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EdgeStats {
    pub n: usize,
    /// `a^T S^{-1} a`
    pub aa: f64,
    /// `a^T S^{-1} z`
    pub az: f64,
    /// `z^T S^{-1} z`
    pub zz: f64,
    pub log_det: f64,
}

impl EdgeStats {
    pub fn compute(a: &[f64], z: &[f64], d: &[f64], sigma_a: f64, sigma_e: f64) -> Self {
        let mut aa = 0.0;
        let mut az = 0.0;
        let mut zz = 0.0;
        let mut log_det = 0.0;
        // Logs are taken of products of eight spectrum entries at a time.
        let mut prod = 1.0;
        for (i, ((&ai, &zi), &di)) in a.iter().zip(z).zip(d).enumerate() {
            let s = sigma_a * di + sigma_e;
            let w = 1.0 / s;
            let wz = w * zi;
            aa += w * ai * ai;
            az += ai * wz;
            zz += zi * wz;
            prod *= s;
            if i % 8 == 7 {
                log_det += prod.ln();
                prod = 1.0;
            }
        }
        log_det += prod.ln();
        EdgeStats {
            n: a.len(),
            aa,
            az,
            zz,
            log_det,
        }
    }

    /// Log-density of the edge vector with mean `theta * z`.
    pub fn log_density(&self, theta: f64) -> f64 {
        let quad = self.aa - 2.0 * theta * self.az + theta * theta * self.zz;
        -0.5 * (self.n as f64 * LN_2PI + self.log_det + quad)
    }
}
