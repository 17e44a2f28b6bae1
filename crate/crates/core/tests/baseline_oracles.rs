mod common;

use bnme::baseline::{fit_all_edges, fit_edge, GRID_POINTS, LOG10_DELTA_MAX, LOG10_DELTA_MIN};
use bnme::model::{Dataset, GenotypeVector, Kinship};
use bnme::simgen::{generate_dataset, generate_kinship, sample_edge_noise, Scenario};
use common::linear_checks::random_kinship;
use common::LN_2PI;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense GLS at a fixed variance ratio: `(beta, se, profiled loglik)`.
fn dense_gls(a: &[f64], z: &[f64], k: &DMatrix<f64>, delta: f64) -> (f64, f64, f64) {
    let n = a.len();
    let v = k + DMatrix::identity(n, n) * delta;
    let chol = v.clone().cholesky().unwrap();
    let av = DVector::from_column_slice(a);
    let zv = DVector::from_column_slice(z);
    let vz = chol.solve(&zv);
    let zvz = zv.dot(&vz);
    let beta = av.dot(&vz) / zvz;
    let r = &av - &zv * beta;
    let sigma_g = r.dot(&chol.solve(&r)) / n as f64;
    let log_det = v.determinant().ln();
    let ll = -0.5 * (n as f64 * (LN_2PI + sigma_g.ln() + 1.0) + log_det);
    (beta, (sigma_g / zvz).sqrt(), ll)
}

fn genotype<R: Rng>(n: usize, r: &mut R) -> GenotypeVector {
    loop {
        let d: Vec<f64> = (0..n).map(|_| r.random_range(0..3u8) as f64).collect();
        if let Ok(g) = GenotypeVector::standardize("g", &d) {
            return g;
        }
    }
}

fn edge<R: Rng>(kin: &Kinship, z: &[f64], beta: f64, sg: f64, se: f64, r: &mut R) -> Vec<f64> {
    let noise = sample_edge_noise(kin, sg, se, r);
    z.iter().zip(noise).map(|(z, e)| beta * z + e).collect()
}

fn grid_deltas() -> Vec<f64> {
    let step = (LOG10_DELTA_MAX - LOG10_DELTA_MIN) / (GRID_POINTS - 1) as f64;
    (0..GRID_POINTS).map(|i| 10f64.powf(LOG10_DELTA_MIN + i as f64 * step)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 40, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn rotated_fit_equals_dense_gls(seed in any::<u64>(), n in 6usize..50, beta in -1.0f64..1.0, ratio in 0.05f64..20.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let kin = Kinship::new(random_kinship(n, &mut r)).unwrap();
        let z = genotype(n, &mut r);
        let a = edge(&kin, &z.values, beta, 1.0, ratio, &mut r);
        let fit = fit_edge(&a, &z.values, &kin).unwrap();
        let (b, se, ll) = dense_gls(&a, &z.values, kin.matrix(), fit.delta);
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-6 * y.abs().max(1e-3);
        prop_assert!(close(fit.beta, b), "beta {} vs {}", fit.beta, b);
        prop_assert!(close(fit.std_error, se), "se {} vs {}", fit.std_error, se);
        prop_assert!(close(fit.log_likelihood, ll), "loglik {} vs {}", fit.log_likelihood, ll);
        prop_assert!(fit.sigma_g >= 0.0 && fit.sigma_e >= 0.0);
        prop_assert!(fit.p_value > 0.0 && fit.p_value <= 1.0);
    }

    #[test]
    fn returned_ratio_beats_every_grid_point(seed in any::<u64>(), n in 6usize..40, ratio in 0.01f64..50.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let kin = Kinship::new(random_kinship(n, &mut r)).unwrap();
        let z = genotype(n, &mut r);
        let a = edge(&kin, &z.values, 0.3, 1.0, ratio, &mut r);
        let fit = fit_edge(&a, &z.values, &kin).unwrap();
        let best = dense_gls(&a, &z.values, kin.matrix(), fit.delta).2;
        for d in grid_deltas() {
            let ll = dense_gls(&a, &z.values, kin.matrix(), d).2;
            prop_assert!(best >= ll - 1e-9 * ll.abs().max(1.0), "delta {d}: {ll} > {best}");
        }
    }
}

/// The nominal 95% Wald interval covers a strong effect in
/// 95% of replicates up to two binomial standard errors (N = 500).
#[test]
fn wald_interval_coverage() {
    let n = 500;
    let kin = generate_kinship(n, 3).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(17);
    let z = genotype(n, &mut r);
    let reps = 2000;
    let mut covered = 0;
    for _ in 0..reps {
        let a = edge(&kin, &z.values, 0.8, 1.5, 1.0, &mut r);
        let f = fit_edge(&a, &z.values, &kin).unwrap();
        covered += ((f.beta - 0.8).abs() <= 1.959964 * f.std_error) as usize;
    }
    let rate = covered as f64 / reps as f64;
    println!("coverage {rate:.4}");
    let floor = 0.95 - 2.0 * (0.95 * 0.05 / reps as f64).sqrt();
    assert!(rate >= floor, "coverage {rate} below {floor}");
}

/// Median variance estimates over 200 edges within 20% of the truth.
#[test]
fn variance_components_recovered() {
    let n = 500;
    let kin = generate_kinship(n, 4).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(23);
    let z = genotype(n, &mut r);
    let (mut g, mut e): (Vec<f64>, Vec<f64>) = (0..200)
        .map(|_| {
            let a = edge(&kin, &z.values, 0.2, 1.5, 1.0, &mut r);
            let f = fit_edge(&a, &z.values, &kin).unwrap();
            (f.sigma_g, f.sigma_e)
        })
        .unzip();
    g.sort_by(f64::total_cmp);
    e.sort_by(f64::total_cmp);
    let (mg, me) = ((g[99] + g[100]) / 2.0, (e[99] + e[100]) / 2.0);
    println!("median sigma_g {mg:.3}, sigma_e {me:.3}");
    assert!((mg - 1.5).abs() < 0.2 * 1.5, "sigma_g {mg}");
    assert!((me - 1.0).abs() < 0.2, "sigma_e {me}");
}

/// Bonferroni at 0.05 / E keeps the false-positive count below one on null data.
#[test]
fn null_false_positives_below_one() {
    let mut total = 0;
    let reps = 10;
    for seed in 0..reps {
        let s = Scenario::single(100, 1.0, 900 + seed);
        let d = generate_dataset(&s).unwrap();
        let ds = bnme::projection::adjust_for_covariates(&d.covariates, &d.phenotype, &d.genotype, &d.kinship).unwrap();
        let fit = fit_all_edges(&ds);
        assert_eq!(fit.edges.len(), 1225);
        total += fit.significant.len();
    }
    let mean = total as f64 / reps as f64;
    println!("mean false positives {mean}");
    assert!(mean < 1.0);
}

#[test]
fn deterministic() {
    let s = Scenario::triple(40, 0.5, 8);
    let d = generate_dataset(&s).unwrap();
    let ds = Dataset::new(d.phenotype, d.genotype, d.kinship).unwrap();
    assert_eq!(fit_all_edges(&ds), fit_all_edges(&ds));
}
