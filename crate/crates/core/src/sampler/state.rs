//! Mutable chain state and the individual Gibbs / Metropolis-Hastings moves.
//!
//! All per-edge inverses go through [`EdgeStats`]: with the data rotated into
//! the kinship eigenbasis, `a^T S^{-1} z`, `z^T S^{-1} z` and friends are cached
//! per edge and only recomputed when that edge's variances move. The Gibbs
//! conditionals for loadings and weights are then O(1) per edge.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::inverse_gaussian::sample_inverse_gaussian;
use crate::error::{BnmeError, Result};
use crate::model::{
    assemble_theta, edge_index, n_edges, EdgeStats, EffectComponents, HyperParams, RotatedData,
    VarianceField,
};

/// Floor on `|theta|` in the local-scale update.
pub const THETA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct ChainState {
    pub effects: EffectComponents,
    pub variance: VarianceField,
    /// Current assembled effect matrix, edge-indexed.
    theta: Vec<f64>,
    stats: Vec<EdgeStats>,
    /// Random-walk standard deviations, per edge.
    pub step_a: Vec<f64>,
    pub step_e: Vec<f64>,
    pub accepted_a: Vec<u64>,
    pub accepted_e: Vec<u64>,
    pub proposals: u64,
    pub iteration: usize,
}

impl ChainState {
    pub fn new(
        effects: EffectComponents,
        variance: VarianceField,
        data: &RotatedData,
        hyper: &HyperParams,
    ) -> Result<Self> {
        if effects.n_nodes != data.n_nodes || variance.n_edges() != data.n_edges() {
            return Err(BnmeError::DimensionMismatch(
                "chain state does not match the dataset".into(),
            ));
        }
        effects.check_invariants()?;
        variance.check_invariants()?;
        let e = data.n_edges();
        let mut state = ChainState {
            effects,
            variance,
            theta: Vec::new(),
            stats: Vec::new(),
            step_a: vec![hyper.rho_a; e],
            step_e: vec![hyper.rho_e; e],
            accepted_a: vec![0; e],
            accepted_e: vec![0; e],
            proposals: 0,
            iteration: 0,
        };
        state.refresh(data);
        Ok(state)
    }

    /// Random start: `theta_hv ~ N(0, 0.1)`, every indicator off, every
    /// variance and local scale at 1. Components are switched on by the
    /// birth move, one at a time against the residual of the others; starting
    /// them all on lets several components split one signal between them.
    pub fn initialize<R: Rng + ?Sized>(
        n_components: usize,
        data: &RotatedData,
        hyper: &HyperParams,
        rng: &mut R,
    ) -> Result<Self> {
        let v = data.n_nodes;
        let mut effects = EffectComponents::zeros(n_components, v);
        let sd = 0.1f64.sqrt();
        for t in effects.theta.iter_mut() {
            *t = sd * normal(rng);
        }
        let variance = VarianceField::constant(n_edges(v), 1.0, 1.0);
        ChainState::new(effects, variance, data, hyper)
    }

    /// Recomputes every cache from the current parameters.
    pub fn refresh(&mut self, data: &RotatedData) {
        self.refresh_theta();
        self.stats = (0..data.n_edges())
            .map(|e| data.edge_stats(e, self.variance.sigma_a[e], self.variance.sigma_e[e]))
            .collect();
    }

    fn refresh_theta(&mut self) {
        self.theta = assemble_theta(&self.effects).values;
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn edge_stats(&self) -> &[EdgeStats] {
        &self.stats
    }

    pub fn log_likelihood(&self) -> f64 {
        self.stats
            .iter()
            .zip(&self.theta)
            .map(|(s, &t)| s.log_density(t))
            .sum()
    }

    /// Mean and variance of `theta_hk` given everything else.
    pub fn theta_conditional(&self, h: usize, k: usize) -> (f64, f64) {
        let v = self.effects.n_nodes;
        let eta = self.effects.eta[h];
        let row = self.effects.theta_row(h);
        let theta_hk = row[k];
        let mut precision = 1.0 / self.effects.local_scale_row(h)[k];
        let mut linear = 0.0;
        if eta != 0.0 {
            for l in (0..v).filter(|&l| l != k) {
                let e = edge_index(v, k, l);
                let c = eta * row[l];
                let st = &self.stats[e];
                let others = self.theta[e] - c * theta_hk;
                precision += c * c * st.zz;
                linear += (st.az - others * st.zz) * c;
            }
        }
        let var = 1.0 / precision;
        (var * linear, var)
    }

    pub fn gibbs_update_theta<R: Rng + ?Sized>(
        &mut self,
        data: &RotatedData,
        h: usize,
        k: usize,
        rng: &mut R,
    ) -> f64 {
        let (mean, var) = self.theta_conditional(h, k);
        assert!(var > 0.0, "non-positive conditional variance for theta");
        let new = mean + var.sqrt() * normal(rng);
        let v = data.n_nodes;
        let old = self.effects.theta_row(h)[k];
        let eta = self.effects.eta[h];
        if eta != 0.0 {
            let delta = eta * (new - old);
            let row = self.effects.theta_row(h);
            for l in (0..v).filter(|&l| l != k) {
                self.theta[edge_index(v, k, l)] += delta * row[l];
            }
        }
        self.effects.theta_row_mut(h)[k] = new;
        new
    }

    /// Draws `1 / sigma_hk ~ InvGaussian(nu / |theta_hk|, nu^2)`.
    pub fn gibbs_update_local_scale<R: Rng + ?Sized>(
        &mut self,
        hyper: &HyperParams,
        h: usize,
        k: usize,
        rng: &mut R,
    ) -> f64 {
        let v = self.effects.n_nodes;
        let abs_theta = self.effects.theta[h * v + k].abs().max(THETA_FLOOR);
        let precision = sample_inverse_gaussian(hyper.nu / abs_theta, hyper.nu * hyper.nu, rng);
        let scale = 1.0 / precision;
        self.effects.local_scales[h * v + k] = scale;
        scale
    }

    /// Mean and variance of `eta_h` under the slab, given everything else.
    pub fn eta_conditional(&self, hyper: &HyperParams, h: usize) -> (f64, f64) {
        let v = self.effects.n_nodes;
        let eta = self.effects.eta[h];
        let row = self.effects.theta_row(h);
        let mut precision = 1.0 / hyper.omega;
        let mut linear = 0.0;
        let mut e = 0;
        for k in 0..v {
            for l in (k + 1)..v {
                let p = row[k] * row[l];
                if p != 0.0 {
                    let st = &self.stats[e];
                    let others = self.theta[e] - eta * p;
                    precision += p * p * st.zz;
                    linear += (st.az - others * st.zz) * p;
                }
                e += 1;
            }
        }
        let var = 1.0 / precision;
        (var * linear, var)
    }

    fn set_eta(&mut self, h: usize, new: f64) {
        let v = self.effects.n_nodes;
        let delta = new - self.effects.eta[h];
        if delta != 0.0 {
            let row = self.effects.theta_row(h);
            let mut e = 0;
            for k in 0..v {
                let w = delta * row[k];
                for l in (k + 1)..v {
                    self.theta[e] += w * row[l];
                    e += 1;
                }
            }
        }
        self.effects.eta[h] = new;
    }

    pub fn gibbs_update_eta<R: Rng + ?Sized>(
        &mut self,
        hyper: &HyperParams,
        h: usize,
        rng: &mut R,
    ) -> f64 {
        let new = if self.effects.tau[h] {
            let (mean, var) = self.eta_conditional(hyper, h);
            mean + var.sqrt() * normal(rng)
        } else {
            0.0
        };
        self.set_eta(h, new);
        new
    }

    /// Log posterior odds of `tau_h = 1` with `eta_h` integrated over its slab:
    /// `ln(pi / (1 - pi)) + b^2 / (2 P) - ln(omega P) / 2`, where `P` and `b / P`
    /// are the precision and mean of [`Self::eta_conditional`].
    pub fn inclusion_log_odds(&self, hyper: &HyperParams, h: usize) -> f64 {
        let (mean, var) = self.eta_conditional(hyper, h);
        let prior = (hyper.tau_prior / (1.0 - hyper.tau_prior)).ln();
        prior + 0.5 * mean * mean / var - 0.5 * (hyper.omega / var).ln()
    }

    /// Joint draw of `(tau_h, eta_h)`: the indicator from its conditional with
    /// `eta_h` integrated out, then `eta_h` given the indicator.
    pub fn gibbs_update_tau<R: Rng + ?Sized>(
        &mut self,
        hyper: &HyperParams,
        h: usize,
        rng: &mut R,
    ) -> bool {
        let odds = self.inclusion_log_odds(hyper, h);
        let p = 1.0 / (1.0 + (-odds).exp());
        let tau = rng.random::<f64>() < p;
        self.effects.tau[h] = tau;
        self.gibbs_update_eta(hyper, h, rng);
        tau
    }

    /// Rescales `eta_h -> c eta_h`, `theta_h -> theta_h / sqrt(c)`, which
    /// leaves the effect matrix unchanged, with `c` drawn from its conditional
    /// under the group move: density `c^(-V/2) exp(-S / 2c - c^2 eta^2 / 2 omega)`
    /// where `S = sum theta_hk^2 / sigma_hk`. Draws come from the inverse-gamma
    /// part by rejection. Without this move the weight drifts slowly along the
    /// ridge of equal likelihood.
    pub fn gibbs_rescale<R: Rng + ?Sized>(&mut self, hyper: &HyperParams, h: usize, rng: &mut R) -> f64 {
        let v = self.effects.n_nodes;
        let eta = self.effects.eta[h];
        let shape = 0.5 * v as f64 - 1.0;
        if !self.effects.tau[h] || eta == 0.0 || !(shape > 0.0) {
            return 1.0;
        }
        let row = self.effects.theta_row(h);
        let scales = self.effects.local_scale_row(h);
        let s: f64 = row.iter().zip(scales).map(|(t, sc)| t * t / sc).sum();
        let gamma = Gamma::new(shape, 1.0).expect("positive shape");
        let c = loop {
            let c = 0.5 * s / gamma.sample(rng);
            if rng.random::<f64>() < (-0.5 * c * c * eta * eta / hyper.omega).exp() {
                break c;
            }
        };
        self.effects.eta[h] = c * eta;
        let root = c.sqrt();
        self.effects.theta_row_mut(h).iter_mut().for_each(|t| *t /= root);
        c
    }

    /// Random-walk update of the polygenic variance of edge `e`.
    pub fn mh_update_sigma_a<R: Rng + ?Sized>(
        &mut self,
        data: &RotatedData,
        hyper: &HyperParams,
        e: usize,
        rng: &mut R,
    ) -> bool {
        let current = self.variance.sigma_a[e];
        let proposal = current + self.step_a[e] * normal(rng);
        // the uniform is consumed even for an immediate rejection so that the
        // stream position never depends on the proposal sign
        let u: f64 = rng.random();
        if !(proposal > 0.0) {
            return false;
        }
        let sigma_e = self.variance.sigma_e[e];
        let st = data.edge_stats(e, proposal, sigma_e);
        let log_r = st.log_density(self.theta[e]) - self.stats[e].log_density(self.theta[e])
            + log_ig_prior(proposal, hyper)
            - log_ig_prior(current, hyper);
        if u.ln() < log_r {
            self.variance.sigma_a[e] = proposal;
            self.stats[e] = st;
            true
        } else {
            false
        }
    }

    /// Random-walk update of the environmental variance of edge `e`.
    pub fn mh_update_sigma_e<R: Rng + ?Sized>(
        &mut self,
        data: &RotatedData,
        hyper: &HyperParams,
        e: usize,
        rng: &mut R,
    ) -> bool {
        let current = self.variance.sigma_e[e];
        let proposal = current + self.step_e[e] * normal(rng);
        let u: f64 = rng.random();
        if !(proposal > 0.0) {
            return false;
        }
        let sigma_a = self.variance.sigma_a[e];
        let st = data.edge_stats(e, sigma_a, proposal);
        let log_r = st.log_density(self.theta[e]) - self.stats[e].log_density(self.theta[e])
            + log_ig_prior(proposal, hyper)
            - log_ig_prior(current, hyper);
        if u.ln() < log_r {
            self.variance.sigma_e[e] = proposal;
            self.stats[e] = st;
            true
        } else {
            false
        }
    }

    /// One full scan in the fixed order: loadings, local scales, weights,
    /// indicators, polygenic variances, environmental variances.
    ///
    /// With `adapt = Some(gamma)` each edge's step size moves by
    /// `exp(gamma * (accepted - target))` after its proposal.
    pub fn sweep<R: Rng + ?Sized>(
        &mut self,
        data: &RotatedData,
        hyper: &HyperParams,
        adapt: Option<(f64, f64)>,
        rng: &mut R,
    ) {
        self.refresh_theta();
        let h_count = self.effects.n_components();
        let v = self.effects.n_nodes;
        for h in 0..h_count {
            for k in 0..v {
                self.gibbs_update_theta(data, h, k, rng);
            }
        }
        for h in 0..h_count {
            for k in 0..v {
                self.gibbs_update_local_scale(hyper, h, k, rng);
            }
        }
        for h in 0..h_count {
            self.gibbs_update_tau(hyper, h, rng);
            self.birth_death_move(hyper, h, rng);
            self.gibbs_rescale(hyper, h, rng);
        }
        let e_count = data.n_edges();
        for e in 0..e_count {
            let acc = self.mh_update_sigma_a(data, hyper, e, rng);
            self.accepted_a[e] += acc as u64;
            if let Some((gamma, target)) = adapt {
                self.step_a[e] *= (gamma * (acc as u8 as f64 - target)).exp();
            }
        }
        for e in 0..e_count {
            let acc = self.mh_update_sigma_e(data, hyper, e, rng);
            self.accepted_e[e] += acc as u64;
            if let Some((gamma, target)) = adapt {
                self.step_e[e] *= (gamma * (acc as u8 as f64 - target)).exp();
            }
        }
        self.proposals += 1;
        self.iteration += 1;
    }

    pub fn reset_acceptance(&mut self) {
        self.accepted_a.iter_mut().for_each(|a| *a = 0);
        self.accepted_e.iter_mut().for_each(|a| *a = 0);
        self.proposals = 0;
    }

    /// Names the first non-finite or out-of-support parameter, if any.
    pub fn check_finite(&self) -> Option<String> {
        let v = self.effects.n_nodes;
        for (h, &eta) in self.effects.eta.iter().enumerate() {
            if !eta.is_finite() {
                return Some(format!("eta[{h}]"));
            }
        }
        for (i, &t) in self.effects.theta.iter().enumerate() {
            if !t.is_finite() {
                return Some(format!("theta[{}][{}]", i / v, i % v));
            }
        }
        for (i, &s) in self.effects.local_scales.iter().enumerate() {
            if !(s > 0.0) || !s.is_finite() {
                return Some(format!("local_scale[{}][{}]", i / v, i % v));
            }
        }
        for (e, (&a, &b)) in self
            .variance
            .sigma_a
            .iter()
            .zip(&self.variance.sigma_e)
            .enumerate()
        {
            if !(a > 0.0) || !a.is_finite() {
                return Some(format!("sigma_a[{e}]"));
            }
            if !(b > 0.0) || !b.is_finite() {
                return Some(format!("sigma_e[{e}]"));
            }
        }
        if let Some(e) = self.theta.iter().position(|t| !t.is_finite()) {
            return Some(format!("Theta[edge {e}]"));
        }
        None
    }
}

/// Unnormalized inverse-gamma log-density `(-alpha - 1) ln s - beta / s`.
pub fn log_ig_prior(s: f64, hyper: &HyperParams) -> f64 {
    (-hyper.alpha - 1.0) * s.ln() - hyper.beta / s
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
