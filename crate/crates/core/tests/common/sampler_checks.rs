//! Sampler correctness against grid integration, Monte Carlo moments and a
//! joint-distribution (Geweke) simulator. Each check reports a measured
//! discrepancy and its tolerance.

use bnme::model::{
    edge_pairs, n_edges, Dataset, EffectComponents, GenotypeVector, HyperParams, Kinship,
    NetworkPhenotype, RotatedData, VarianceField,
};
use bnme::sampler::{sample_inverse_gaussian, ChainState};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};

use super::*;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
        }
    }

    pub fn pass(&self) -> bool {
        self.value.is_finite() && self.value < self.tolerance
    }
}

pub fn report(checks: &[Check]) -> bool {
    let mut ok = true;
    for c in checks {
        println!(
            "    {} {:<48} {:.3e} (< {:.1e})",
            if c.pass() { "ok  " } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
        ok &= c.pass();
    }
    ok
}

pub const ETA: f64 = 0.8;
pub const LOADINGS: [f64; 3] = [0.7, -0.4, 0.9];
pub const SCALES: [f64; 3] = [1.3, 0.6, 2.0];
pub const SIGMA_A: [f64; 3] = [1.2, 0.7, 1.5];
pub const SIGMA_E: [f64; 3] = [0.8, 1.1, 0.5];

/// `tiny_dataset` with the kinship replaced by the identity.
pub fn tiny_identity() -> Dataset {
    let ds = tiny_dataset();
    Dataset::new(ds.phenotype, ds.genotype, Kinship::identity(4)).unwrap()
}

pub fn fixed_state(ds: &Dataset, hyper: &HyperParams) -> (RotatedData, ChainState) {
    let data = RotatedData::new(ds);
    let mut effects = EffectComponents::from_parts(vec![ETA], &[LOADINGS.to_vec()]).unwrap();
    effects.local_scales = SCALES.to_vec();
    let variance = VarianceField {
        sigma_a: SIGMA_A.to_vec(),
        sigma_e: SIGMA_E.to_vec(),
    };
    let state = ChainState::new(effects, variance, &data, hyper).unwrap();
    (data, state)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn moment_checks(label: &str, got: (f64, f64), want: (f64, f64), tol: f64) -> Vec<Check> {
    let sd = want.1.sqrt();
    vec![
        Check::new(format!("{label} mean"), rel(got.0, want.0, want.0.abs().max(sd)), tol),
        Check::new(format!("{label} variance"), rel(got.1, want.1, want.1), tol),
    ]
}

/// Loading conditionals: closed form and 10^5 draws against the grid.
pub fn theta_checks() -> Vec<Check> {
    let hyper = HyperParams::default();
    let mut out = Vec::new();
    for (tag, ds) in [("identity", tiny_identity()), ("family", tiny_dataset())] {
        let (data, state) = fixed_state(&ds, &hyper);
        for k in 0..3 {
            let log_f = |t: f64| {
                let mut th = LOADINGS.to_vec();
                th[k] = t;
                let theta = assemble(&[ETA], &[th], 3);
                dense_loglik(&ds, &theta, &SIGMA_A, &SIGMA_E) + log_normal_pdf(t, 0.0, SCALES[k])
            };
            let grid = GridDensity::new(log_f, -5.0, 5.0);
            let want = (grid.mean(), grid.var());
            let label = format!("theta[{k}] {tag}");
            out.extend(moment_checks(&format!("{label} closed form"), state.theta_conditional(0, k), want, 0.02));
            let mut r = rng(10 + k as u64);
            let draws: Vec<f64> = (0..100_000)
                .map(|_| state.clone().gibbs_update_theta(&data, 0, k, &mut r))
                .collect();
            out.extend(moment_checks(&format!("{label} draws"), mean_var(&draws), want, 0.02));
        }
    }
    out
}

/// Weight conditional under the slab.
pub fn eta_checks() -> Vec<Check> {
    let hyper = HyperParams::default();
    let mut out = Vec::new();
    for (tag, ds) in [("identity", tiny_identity()), ("family", tiny_dataset())] {
        let (_, state) = fixed_state(&ds, &hyper);
        let log_f = |eta: f64| {
            let theta = assemble(&[eta], &[LOADINGS.to_vec()], 3);
            dense_loglik(&ds, &theta, &SIGMA_A, &SIGMA_E) + log_normal_pdf(eta, 0.0, hyper.omega)
        };
        let grid = GridDensity::new(log_f, -60.0, 60.0);
        let want = (grid.mean(), grid.var());
        out.extend(moment_checks(&format!("eta {tag} closed form"), state.eta_conditional(&hyper, 0), want, 0.02));
        let mut r = rng(20);
        let mut s = state.clone();
        let draws: Vec<f64> = (0..100_000)
            .map(|_| {
                let x = s.gibbs_update_eta(&hyper, 0, &mut r);
                s = state.clone();
                x
            })
            .collect();
        out.extend(moment_checks(&format!("eta {tag} draws"), mean_var(&draws), want, 0.02));
    }
    out
}

/// Inclusion probability with the weight integrated over its slab: grid
/// marginal likelihood against the likelihood at `eta = 0`, and draw
/// frequencies of the joint indicator/weight update.
pub fn tau_checks() -> Vec<Check> {
    let mut out = Vec::new();
    for (tag, ds) in [("identity", tiny_identity()), ("family", tiny_dataset())] {
        for (shrink, tau_prior) in [(0.1, 0.5), (0.2, 0.5), (0.3, 0.2), (1.0, 0.5)] {
            let hyper = HyperParams { tau_prior, ..HyperParams::default() };
            let loadings: Vec<f64> = LOADINGS.iter().map(|x| shrink * x).collect();
            let data = RotatedData::new(&ds);
            let effects = EffectComponents::from_parts(vec![ETA], &[loadings.clone()]).unwrap();
            let variance = VarianceField { sigma_a: SIGMA_A.to_vec(), sigma_e: SIGMA_E.to_vec() };
            let state = ChainState::new(effects, variance, &data, &hyper).unwrap();
            let loglik = |eta: f64| dense_loglik(&ds, &assemble(&[eta], &[loadings.clone()], 3), &SIGMA_A, &SIGMA_E);
            let slab = log_integral(|eta| loglik(eta) + log_normal_pdf(eta, 0.0, hyper.omega), -80.0, 80.0);
            let want_odds = (tau_prior / (1.0 - tau_prior)).ln() + slab - loglik(0.0);
            let want = 1.0 / (1.0 + (-want_odds).exp());
            let got_odds = state.inclusion_log_odds(&hyper, 0);
            let label = format!("tau {tag} loadings x{shrink} prior {tau_prior}");
            out.push(Check::new(format!("{label} log odds"), (got_odds - want_odds).abs(), 0.02));
            if want > 0.05 && want < 0.95 {
                let mut r = rng(30);
                let n = 100_000;
                let mut s = state.clone();
                let mut hits = 0;
                for _ in 0..n {
                    hits += s.gibbs_update_tau(&hyper, 0, &mut r) as usize;
                    s = state.clone();
                }
                out.push(Check::new(format!("{label} frequency"), rel(hits as f64 / n as f64, want, want), 0.02));
            }
        }
    }
    out
}

/// Local-scale conditional `p(s | theta) ~ N(theta; 0, s) Exp(s; nu^2 / 2)`
/// integrated on a log grid, against 10^6 sampler draws.
pub fn local_scale_checks() -> Vec<Check> {
    let mut out = Vec::new();
    for (theta, nu) in [(1.0, 1.0), (0.7, 1.0), (0.05, 2.0)] {
        let hyper = HyperParams {
            nu,
            ..HyperParams::default()
        };
        let log_f = |u: f64| {
            let s = u.exp();
            log_normal_pdf(theta, 0.0, s) - 0.5 * nu * nu * s + u
        };
        let grid = GridDensity::new(log_f, -40.0, 15.0);
        let mean = grid.expect(|u| u.exp());
        let var = grid.expect(|u| (u.exp() - mean).powi(2));
        let inv_mean = grid.expect(|u| (-u).exp());
        out.push(Check::new(
            format!("local scale theta={theta} nu={nu} E[1/s] closed form"),
            rel(nu / theta, inv_mean, inv_mean),
            0.02,
        ));
        let ds = tiny_identity();
        let (_, mut state) = fixed_state(&ds, &hyper);
        state.effects.theta[0] = theta;
        let mut r = rng(40);
        let draws: Vec<f64> = (0..1_000_000)
            .map(|_| state.gibbs_update_local_scale(&hyper, 0, 0, &mut r))
            .collect();
        out.extend(moment_checks(
            &format!("local scale theta={theta} nu={nu} draws"),
            mean_var(&draws),
            (mean, var),
            0.02,
        ));
    }
    out
}

/// Inverse-Gaussian moments at 10^6 draws.
pub fn inverse_gaussian_checks() -> Vec<Check> {
    let mut out = Vec::new();
    for (mu, lambda, mean_tol, var_tol) in [(1.0, 1.0, 0.01, 0.03), (2.0, 0.5, 0.01, 0.05)] {
        let mut r = rng(50);
        let draws: Vec<f64> = (0..1_000_000)
            .map(|_| sample_inverse_gaussian(mu, lambda, &mut r))
            .collect();
        let (m, v) = mean_var(&draws);
        let want_v = mu * mu * mu / lambda;
        out.push(Check::new(format!("inverse gaussian mu={mu} lambda={lambda} mean"), rel(m, mu, mu), mean_tol));
        out.push(Check::new(format!("inverse gaussian mu={mu} lambda={lambda} variance"), rel(v, want_v, want_v), var_tol));
    }
    out
}

/// Long-run random-walk marginals of one edge's variances against the grid
/// posterior, other parameters fixed. Uses a proper IG(3, 2) prior.
pub fn mh_checks() -> Vec<Check> {
    let hyper = HyperParams {
        alpha: 3.0,
        beta: 2.0,
        rho_a: 1.0,
        rho_e: 0.8,
        ..HyperParams::default()
    };
    let ds = tiny_dataset();
    let theta = assemble(&[ETA], &[LOADINGS.to_vec()], 3);
    let mut out = Vec::new();
    let e = 1;
    let a = ds.phenotype.edge(e);
    let z = &ds.genotype.values;
    let k = ds.kinship.matrix();
    for which in ["sigma_a", "sigma_e"] {
        let log_f = |s: f64| {
            let (sa, se) = if which == "sigma_a" { (s, SIGMA_E[e]) } else { (SIGMA_A[e], s) };
            dense_edge_loglik(a, z, theta[e], sa, se, k) + log_inv_gamma_pdf(s, hyper.alpha, hyper.beta)
        };
        let grid = GridDensity::new(log_f, 1e-6, 80.0);
        let (data, mut state) = fixed_state(&ds, &hyper);
        let mut r = rng(60);
        let thin = 10;
        let mut draws = Vec::with_capacity(50_000);
        for i in 0..50_000 * thin {
            if which == "sigma_a" {
                state.mh_update_sigma_a(&data, &hyper, e, &mut r);
            } else {
                state.mh_update_sigma_e(&data, &hyper, e, &mut r);
            }
            if i % thin == thin - 1 {
                draws.push(if which == "sigma_a" {
                    state.variance.sigma_a[e]
                } else {
                    state.variance.sigma_e[e]
                });
            }
        }
        out.push(Check::new(format!("MH {which} KS vs grid"), grid.ks_statistic(&draws), 0.05));
    }
    out
}

/// Prior and simulator of the Geweke test, with proper variance priors.
struct GewekeModel {
    hyper: HyperParams,
    genotype: GenotypeVector,
    kinship: Kinship,
}

const GEWEKE_NAMES: [&str; 7] =
    ["tau", "eta", "theta[0]", "Theta[0,1]", "sigma_a[0]", "sigma_e[0]", "log local_scale[0]"];

impl GewekeModel {
    fn new() -> Self {
        let ds = tiny_dataset();
        GewekeModel {
            hyper: HyperParams {
                omega: 1.0,
                nu: 1.0,
                alpha: 3.0,
                beta: 2.0,
                rho_a: 1.0,
                rho_e: 1.0,
                ..HyperParams::default()
            },
            genotype: ds.genotype,
            kinship: ds.kinship,
        }
    }

    fn draw_params<R: Rng>(&self, r: &mut R) -> (EffectComponents, VarianceField) {
        let v = 3;
        let rate = 0.5 * self.hyper.nu * self.hyper.nu;
        let exp = Exp::new(rate).unwrap();
        let gamma = Gamma::new(self.hyper.alpha, 1.0 / self.hyper.beta).unwrap();
        let mut effects = EffectComponents::zeros(1, v);
        for k in 0..v {
            let s: f64 = exp.sample(r);
            effects.local_scales[k] = s;
            let g: f64 = StandardNormal.sample(r);
            effects.theta[k] = s.sqrt() * g;
        }
        effects.tau[0] = r.random::<f64>() < self.hyper.tau_prior;
        if effects.tau[0] {
            let g: f64 = StandardNormal.sample(r);
            effects.eta[0] = self.hyper.omega.sqrt() * g;
        }
        let e = n_edges(v);
        let variance = VarianceField {
            sigma_a: (0..e).map(|_| 1.0 / gamma.sample(r)).collect(),
            sigma_e: (0..e).map(|_| 1.0 / gamma.sample(r)).collect(),
        };
        (effects, variance)
    }

    fn draw_data<R: Rng>(&self, effects: &EffectComponents, variance: &VarianceField, r: &mut R) -> Dataset {
        let n = self.kinship.n();
        let v = effects.n_nodes;
        let theta = assemble(&effects.eta, &[effects.theta.clone()], v);
        let mut values = Vec::with_capacity(n * theta.len());
        for (e, &t) in theta.iter().enumerate() {
            let cov = self.kinship.matrix() * variance.sigma_a[e]
                + DMatrix::identity(n, n) * variance.sigma_e[e];
            let l = cov.cholesky().unwrap().l();
            let g = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(r)));
            let noise = l * g;
            values.extend((0..n).map(|i| t * self.genotype.values[i] + noise[i]));
        }
        let phenotype = NetworkPhenotype::new(n, v, values).unwrap();
        Dataset::new(phenotype, self.genotype.clone(), self.kinship.clone()).unwrap()
    }

    fn functionals(effects: &EffectComponents, variance: &VarianceField) -> [f64; 7] {
        let pairs = edge_pairs(3);
        let (k, l) = pairs[0];
        [
            effects.tau[0] as u8 as f64,
            effects.eta[0],
            effects.theta[0],
            effects.eta[0] * effects.theta[k] * effects.theta[l],
            variance.sigma_a[0],
            variance.sigma_e[0],
            effects.local_scales[0].ln(),
        ]
    }

}

/// Marginal-conditional draws against successive-conditional draws.
pub fn geweke_checks(rounds: usize, scans_per_round: usize) -> Vec<Check> {
    let model = GewekeModel::new();
    let mut r = rng(70);
    let mut prior: Vec<Vec<f64>> = vec![Vec::with_capacity(rounds); GEWEKE_NAMES.len()];
    for _ in 0..rounds {
        let (eff, var) = model.draw_params(&mut r);
        for (i, f) in GewekeModel::functionals(&eff, &var).into_iter().enumerate() {
            prior[i].push(f);
        }
    }
    let (eff, var) = model.draw_params(&mut r);
    let mut ds = model.draw_data(&eff, &var, &mut r);
    let mut data = RotatedData::new(&ds);
    let mut state = ChainState::new(eff, var, &data, &model.hyper).unwrap();
    let mut joint: Vec<Vec<f64>> = vec![Vec::with_capacity(rounds); GEWEKE_NAMES.len()];
    for _ in 0..rounds {
        for _ in 0..scans_per_round {
            state.sweep(&data, &model.hyper, None, &mut r);
        }
        ds = model.draw_data(&state.effects, &state.variance, &mut r);
        data = RotatedData::new(&ds);
        state.refresh(&data);
        for (i, f) in GewekeModel::functionals(&state.effects, &state.variance)
            .into_iter()
            .enumerate()
        {
            joint[i].push(f);
        }
    }
    GEWEKE_NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| Check::new(format!("Geweke {name} KS"), ks_two_sample(&prior[i], &joint[i]), 0.05))
        .collect()
}
