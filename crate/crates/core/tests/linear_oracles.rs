mod common;

use bnme::model::{EdgeStats, Kinship};
use common::linear_checks::{projection_residuals, random_kinship, random_matrix, solve_residual};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn projection_identities(seed in any::<u64>(), n in 4usize..40, p in 1usize..4) {
        prop_assume!(p < n);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut x = random_matrix(n, p, &mut r);
        x.column_mut(0).fill(1.0);
        let (uut, ux, utu) = projection_residuals(&x);
        prop_assert!(uut < 1e-10, "U U^T - I = {uut}");
        prop_assert!(ux < 1e-10, "U X = {ux}");
        prop_assert!(utu < 1e-10, "U^T U - W = {utu}");
    }

    #[test]
    fn eigen_solve_matches_dense(
        seed in any::<u64>(),
        n in 2usize..30,
        sa in 1e-3f64..20.0,
        se in 1e-2f64..5.0,
    ) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let kin = random_kinship(n, &mut r);
        let rhs: Vec<f64> = random_matrix(n, 1, &mut r).as_slice().to_vec();
        let err = solve_residual(&kin, sa, se, &rhs);
        prop_assert!(err < 1e-8, "relative deviation {err}");
    }

    /// The cached quadratic forms equal their dense counterparts.
    #[test]
    fn edge_stats_match_dense(seed in any::<u64>(), n in 2usize..20, sa in 0.01f64..5.0, se in 0.01f64..5.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let kin = random_kinship(n, &mut r);
        let kinship = Kinship::new(kin.clone()).unwrap();
        let a: Vec<f64> = random_matrix(n, 1, &mut r).as_slice().to_vec();
        let z: Vec<f64> = random_matrix(n, 1, &mut r).as_slice().to_vec();
        let st = EdgeStats::compute(&kinship.rotate(&a), &kinship.rotate(&z), kinship.eigenvalues(), sa, se);
        let s = &kin * sa + DMatrix::identity(n, n) * se;
        let chol = s.clone().cholesky().unwrap();
        let av = DVector::from_column_slice(&a);
        let zv = DVector::from_column_slice(&z);
        let sa_inv = chol.solve(&av);
        let sz_inv = chol.solve(&zv);
        let tol = |x: f64| 1e-8 * x.abs().max(1.0);
        prop_assert!((st.aa - av.dot(&sa_inv)).abs() < tol(st.aa));
        prop_assert!((st.az - zv.dot(&sa_inv)).abs() < tol(st.az));
        prop_assert!((st.zz - zv.dot(&sz_inv)).abs() < tol(st.zz));
        let log_det: f64 = s.determinant().ln();
        prop_assert!((st.log_det - log_det).abs() < tol(log_det));
    }
}
