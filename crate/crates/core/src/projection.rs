//! Covariate adjustment by projecting every subject-indexed quantity onto the
//! orthogonal complement of the covariate column space.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{BnmeError, Result};
use crate::model::{Dataset, GenotypeVector, Kinship, NetworkPhenotype};

/// Smallest/largest singular value ratio below which X counts as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// N x P design of nuisance covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMatrix {
    pub matrix: DMatrix<f64>,
    pub labels: Vec<String>,
}

impl CovariateMatrix {
    pub fn new(matrix: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != matrix.ncols() {
            return Err(BnmeError::DimensionMismatch(format!(
                "{} covariate labels for {} columns",
                labels.len(),
                matrix.ncols()
            )));
        }
        let (n, p) = matrix.shape();
        if p > 0 && p >= n {
            return Err(BnmeError::InvalidParameter(format!(
                "need fewer covariates than subjects (P = {p}, N = {n})"
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(BnmeError::Data("covariates contain non-finite values".into()));
        }
        if p > 0 {
            let sv = matrix.clone().svd(false, false).singular_values;
            let max = sv.max();
            let min = sv.min();
            if !(max > 0.0) || min <= RANK_TOL * max {
                return Err(BnmeError::RankDeficient(if max > 0.0 { min / max } else { 0.0 }));
            }
        }
        Ok(CovariateMatrix { matrix, labels })
    }

    pub fn empty(n_subjects: usize) -> Self {
        CovariateMatrix {
            matrix: DMatrix::zeros(n_subjects, 0),
            labels: Vec::new(),
        }
    }

    pub fn n_subjects(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_covariates(&self) -> usize {
        self.matrix.ncols()
    }
}

/// `U` with orthonormal rows spanning the null space of `X^T`.
#[derive(Debug, Clone)]
pub struct ProjectionOperator {
    pub u: DMatrix<f64>,
}

impl ProjectionOperator {
    pub fn n_input(&self) -> usize {
        self.u.ncols()
    }

    pub fn n_output(&self) -> usize {
        self.u.nrows()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let v = nalgebra::DVector::from_column_slice(v);
        (&self.u * v).as_slice().to_vec()
    }
}

/// Eigendecomposes `W = I - X (X^T X)^{-1} X^T` and keeps the unit-eigenvalue eigenvectors.
pub fn build_projection(x: &CovariateMatrix) -> Result<ProjectionOperator> {
    let (n, p) = x.matrix.shape();
    if p == 0 {
        return Ok(ProjectionOperator {
            u: DMatrix::identity(n, n),
        });
    }
    if p >= n {
        return Err(BnmeError::InvalidParameter(format!(
            "need fewer covariates than subjects (P = {p}, N = {n})"
        )));
    }
    let xm = &x.matrix;
    let xtx = xm.tr_mul(xm);
    let xtx_inv = xtx
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(BnmeError::RankDeficient(0.0))?;
    let hat = xm * xtx_inv * xm.transpose();
    let mut w = DMatrix::identity(n, n) - hat;
    w = (&w + w.transpose()) * 0.5;
    let eig = SymmetricEigen::new(w);
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    if keep.len() != n - p {
        return Err(BnmeError::RankDeficient(0.0));
    }
    let mut u = DMatrix::zeros(keep.len(), n);
    for (row, &i) in keep.iter().enumerate() {
        u.row_mut(row).copy_from(&eig.eigenvectors.column(i).transpose());
    }
    Ok(ProjectionOperator { u })
}

/// Maps edges, genotype and kinship into the `N - P` dimensional residual space.
pub fn project_dataset(
    op: &ProjectionOperator,
    phenotype: &NetworkPhenotype,
    genotype: &GenotypeVector,
    kinship: &Kinship,
) -> Result<Dataset> {
    let n = op.n_input();
    if phenotype.n_subjects() != n || genotype.len() != n || kinship.n() != n {
        return Err(BnmeError::DimensionMismatch(format!(
            "projection expects {n} subjects; phenotype {}, genotype {}, kinship {}",
            phenotype.n_subjects(),
            genotype.len(),
            kinship.n()
        )));
    }
    let a = op.u.clone() * phenotype.to_matrix();
    let projected = NetworkPhenotype::from_matrix(phenotype.n_nodes(), &a)?;
    let z = GenotypeVector::from_values(genotype.snp_id.clone(), op.apply(&genotype.values));
    let lambda = &op.u * kinship.matrix() * op.u.transpose();
    let kin = Kinship::from_matrix_symmetrized(lambda)?;
    Dataset::new(projected, z, kin)
}

/// Convenience: build the operator from `covariates` and project.
pub fn adjust_for_covariates(
    covariates: &CovariateMatrix,
    phenotype: &NetworkPhenotype,
    genotype: &GenotypeVector,
    kinship: &Kinship,
) -> Result<Dataset> {
    let op = build_projection(covariates)?;
    project_dataset(&op, phenotype, genotype, kinship)
}
