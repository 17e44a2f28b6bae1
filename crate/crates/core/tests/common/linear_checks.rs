//! Projection identities and the eigenbasis covariance solve against dense algebra.

use bnme::model::{EdgeCovariance, Kinship};
use bnme::projection::{build_projection, CovariateMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::sampler_checks::Check;

pub fn random_matrix<R: Rng>(rows: usize, cols: usize, r: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(r))
}

/// Residual sizes of `U U^T = I`, `U X = 0` and `U^T U = I - X (X^T X)^{-1} X^T`,
/// the last computed from a QR factorization of X.
pub fn projection_residuals(x: &DMatrix<f64>) -> (f64, f64, f64) {
    let (n, p) = x.shape();
    let labels = (0..p).map(|j| format!("x{j}")).collect();
    let op = build_projection(&CovariateMatrix::new(x.clone(), labels).unwrap()).unwrap();
    let u = &op.u;
    let uut = u * u.transpose() - DMatrix::identity(n - p, n - p);
    let ux = u * x;
    let q = x.clone().qr().q();
    let w = DMatrix::identity(n, n) - &q * q.transpose();
    let utu = u.transpose() * u - w;
    (uut.amax(), ux.amax(), utu.amax())
}

/// Largest relative deviation of the eigen-route solve from a dense Cholesky solve.
pub fn solve_residual(kin: &DMatrix<f64>, sa: f64, se: f64, rhs: &[f64]) -> f64 {
    let n = rhs.len();
    let kinship = Kinship::new(kin.clone()).unwrap();
    let got = EdgeCovariance::new(sa, se).unwrap().solve(&kinship, rhs).unwrap();
    let dense = (kin * sa + DMatrix::identity(n, n) * se).cholesky().unwrap();
    let want = dense.solve(&DVector::from_column_slice(rhs));
    let scale = want.amax().max(1e-300);
    got.iter()
        .zip(want.iter())
        .map(|(g, w)| (g - w).abs() / scale)
        .fold(0.0, f64::max)
}

/// Random PSD kinship with unit diagonal: a correlation matrix of random factors.
pub fn random_kinship<R: Rng>(n: usize, r: &mut R) -> DMatrix<f64> {
    let f = random_matrix(n, n / 2 + 1, r);
    let g = &f * f.transpose();
    let d: Vec<f64> = (0..n).map(|i| g[(i, i)].sqrt()).collect();
    DMatrix::from_fn(n, n, |i, j| g[(i, j)] / (d[i] * d[j]))
}

/// Fixed-seed instances for the acceptance report.
pub fn linear_checks() -> Vec<Check> {
    let mut r = ChaCha8Rng::seed_from_u64(80);
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    let mut solve = 0.0f64;
    for (n, p) in [(5, 1), (12, 3), (40, 4), (100, 3)] {
        let mut x = random_matrix(n, p, &mut r);
        x.column_mut(0).fill(1.0);
        let (a, b, c) = projection_residuals(&x);
        worst = (worst.0.max(a), worst.1.max(b), worst.2.max(c));
        let kin = random_kinship(n, &mut r);
        let rhs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
        for (sa, se) in [(1.5, 1.0), (1e-3, 2.0), (10.0, 0.01)] {
            solve = solve.max(solve_residual(&kin, sa, se, &rhs));
        }
    }
    vec![
        Check::new("projection U U^T = I", worst.0, 1e-10),
        Check::new("projection U X = 0", worst.1, 1e-10),
        Check::new("projection U^T U = W", worst.2, 1e-10),
        Check::new("eigen solve vs dense solve", solve, 1e-8),
    ]
}
