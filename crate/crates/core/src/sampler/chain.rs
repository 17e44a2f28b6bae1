use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::state::ChainState;
use crate::error::{BnmeError, Result};
use crate::model::{EffectMatrix, HyperParams, RotatedData};

/// Acceptance rate the step-size adaptation aims for.
pub const TARGET_ACCEPTANCE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Total sweeps, burn-in included.
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub n_chains: usize,
    pub n_components: usize,
    pub seed: u64,
    pub hyper: HyperParams,
    /// Robbins-Monro tuning of the random-walk steps during burn-in.
    pub adapt_mh: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_iterations: 3000,
            burn_in: 1000,
            thinning: 1,
            n_chains: 1,
            n_components: 3,
            seed: 1,
            hyper: HyperParams::default(),
            adapt_mh: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iterations {
            return Err(BnmeError::InvalidParameter(format!(
                "burn-in ({}) must be below the iteration count ({})",
                self.burn_in, self.n_iterations
            )));
        }
        if self.thinning == 0 || self.n_chains == 0 || self.n_components == 0 {
            return Err(BnmeError::InvalidParameter(
                "thinning, chain count and component count must be at least 1".into(),
            ));
        }
        self.hyper.validate()
    }

    pub fn n_kept(&self) -> usize {
        (self.n_iterations - self.burn_in) / self.thinning
    }
}

/// Kept draws of one chain. Component arrays are draw-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub n_components: usize,
    pub n_nodes: usize,
    pub n_draws: usize,
    /// `draws x H`
    pub eta: Vec<f64>,
    /// `draws x H`
    pub tau: Vec<u8>,
    /// `draws x H x V`
    pub theta: Vec<f64>,
    /// `draws x E`
    pub sigma_a: Vec<f64>,
    /// `draws x E`
    pub sigma_e: Vec<f64>,
    pub log_likelihood: Vec<f64>,
    /// Post-burn-in acceptance rates averaged over edges.
    pub acceptance_a: f64,
    pub acceptance_e: f64,
    pub chain_index: usize,
}

/// Component arrays of one chain after per-draw relabeling.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentDraws {
    pub n_components: usize,
    pub n_nodes: usize,
    pub eta: Vec<f64>,
    pub tau: Vec<u8>,
    pub theta: Vec<f64>,
}

impl PosteriorSamples {
    fn with_capacity(h: usize, v: usize, e: usize, draws: usize, chain_index: usize) -> Self {
        PosteriorSamples {
            n_components: h,
            n_nodes: v,
            n_draws: 0,
            eta: Vec::with_capacity(draws * h),
            tau: Vec::with_capacity(draws * h),
            theta: Vec::with_capacity(draws * h * v),
            sigma_a: Vec::with_capacity(draws * e),
            sigma_e: Vec::with_capacity(draws * e),
            log_likelihood: Vec::with_capacity(draws),
            acceptance_a: 0.0,
            acceptance_e: 0.0,
            chain_index,
        }
    }

    fn push(&mut self, state: &ChainState) {
        self.eta.extend_from_slice(&state.effects.eta);
        self.tau.extend(state.effects.tau.iter().map(|&t| t as u8));
        self.theta.extend_from_slice(&state.effects.theta);
        self.sigma_a.extend_from_slice(&state.variance.sigma_a);
        self.sigma_e.extend_from_slice(&state.variance.sigma_e);
        self.log_likelihood.push(state.log_likelihood());
        self.n_draws += 1;
    }

    pub fn n_edges(&self) -> usize {
        crate::model::n_edges(self.n_nodes)
    }

    pub fn eta_draw(&self, d: usize) -> &[f64] {
        &self.eta[d * self.n_components..(d + 1) * self.n_components]
    }

    pub fn tau_draw(&self, d: usize) -> &[u8] {
        &self.tau[d * self.n_components..(d + 1) * self.n_components]
    }

    pub fn theta_draw(&self, d: usize, h: usize) -> &[f64] {
        let v = self.n_nodes;
        let start = (d * self.n_components + h) * v;
        &self.theta[start..start + v]
    }

    pub fn sigma_a_draw(&self, d: usize) -> &[f64] {
        let e = self.n_edges();
        &self.sigma_a[d * e..(d + 1) * e]
    }

    pub fn sigma_e_draw(&self, d: usize) -> &[f64] {
        let e = self.n_edges();
        &self.sigma_e[d * e..(d + 1) * e]
    }

    /// Assembled effect matrix of draw `d`.
    pub fn assembled_theta(&self, d: usize) -> EffectMatrix {
        let v = self.n_nodes;
        let mut out = EffectMatrix::zeros(v);
        for h in 0..self.n_components {
            let eta = self.eta_draw(d)[h];
            if eta == 0.0 {
                continue;
            }
            let th = self.theta_draw(d, h);
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

    /// Per-draw component order by decreasing `|eta_h| * ||theta_h||^2`, the
    /// Frobenius norm of the component's contribution. Ties keep slot order.
    pub fn component_order(&self, d: usize) -> Vec<usize> {
        let mag: Vec<f64> = (0..self.n_components)
            .map(|h| {
                let th = self.theta_draw(d, h);
                self.eta_draw(d)[h].abs() * th.iter().map(|t| t * t).sum::<f64>()
            })
            .collect();
        let mut order: Vec<usize> = (0..self.n_components).collect();
        order.sort_by(|&a, &b| mag[b].total_cmp(&mag[a]));
        order
    }

    /// Component draws with slots relabeled per draw by [`Self::component_order`].
    pub fn relabeled(&self) -> ComponentDraws {
        let h_count = self.n_components;
        let v = self.n_nodes;
        let mut out = ComponentDraws {
            n_components: h_count,
            n_nodes: v,
            eta: Vec::with_capacity(self.eta.len()),
            tau: Vec::with_capacity(self.tau.len()),
            theta: Vec::with_capacity(self.theta.len()),
        };
        for d in 0..self.n_draws {
            for h in self.component_order(d) {
                out.eta.push(self.eta_draw(d)[h]);
                out.tau.push(self.tau_draw(d)[h]);
                out.theta.extend_from_slice(self.theta_draw(d, h));
            }
        }
        out
    }
}

impl ComponentDraws {
    pub fn n_draws(&self) -> usize {
        self.eta.len() / self.n_components.max(1)
    }

    pub fn eta_trace(&self, h: usize) -> Vec<f64> {
        self.eta.iter().skip(h).step_by(self.n_components).copied().collect()
    }

    pub fn tau_trace(&self, h: usize) -> Vec<u8> {
        self.tau.iter().skip(h).step_by(self.n_components).copied().collect()
    }

    pub fn theta_draw(&self, d: usize, h: usize) -> &[f64] {
        let v = self.n_nodes;
        let start = (d * self.n_components + h) * v;
        &self.theta[start..start + v]
    }

    /// `eta_h theta_hk theta_hl` in draw `d`.
    pub fn component_entry(&self, d: usize, h: usize, k: usize, l: usize) -> f64 {
        let th = self.theta_draw(d, h);
        self.eta[d * self.n_components + h] * th[k] * th[l]
    }
}

/// RNG of chain `chain_index`: the master seed selects the key, the chain the stream.
pub fn chain_rng(seed: u64, chain_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain_index as u64);
    rng
}

/// SplitMix64 finalizer; derives independent sub-seeds from a master seed.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs one chain from a random start. Deterministic in `(config.seed, chain_index, data)`.
pub fn run_chain(
    data: &RotatedData,
    config: &SamplerConfig,
    chain_index: usize,
) -> Result<PosteriorSamples> {
    config.validate()?;
    let mut rng = chain_rng(config.seed, chain_index);
    let mut state =
        ChainState::initialize(config.n_components, data, &config.hyper, &mut rng)?;
    let mut samples = PosteriorSamples::with_capacity(
        config.n_components,
        data.n_nodes,
        data.n_edges(),
        config.n_kept(),
        chain_index,
    );
    for t in 0..config.n_iterations {
        let adapt = if config.adapt_mh && t < config.burn_in {
            Some(((t as f64 + 1.0).powf(-0.6), TARGET_ACCEPTANCE))
        } else {
            None
        };
        if t == config.burn_in {
            state.reset_acceptance();
        }
        state.sweep(data, &config.hyper, adapt, &mut rng);
        if let Some(parameter) = state.check_finite() {
            return Err(BnmeError::NumericalAbort {
                parameter,
                iteration: t,
            });
        }
        if t >= config.burn_in && (t - config.burn_in + 1) % config.thinning == 0 {
            samples.push(&state);
        }
    }
    let e = data.n_edges().max(1) as f64;
    let sweeps = state.proposals.max(1) as f64;
    samples.acceptance_a = state.accepted_a.iter().sum::<u64>() as f64 / (e * sweeps);
    samples.acceptance_e = state.accepted_e.iter().sum::<u64>() as f64 / (e * sweeps);
    Ok(samples)
}

/// Runs `config.n_chains` independent chains in parallel.
pub fn run_chains(data: &RotatedData, config: &SamplerConfig) -> Result<Vec<PosteriorSamples>> {
    config.validate()?;
    (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(data, config, c))
        .collect()
}
