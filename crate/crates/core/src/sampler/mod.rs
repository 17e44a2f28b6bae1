//! MCMC engine: Gibbs updates for loadings, local scales, weights and
//! indicators, a birth/death move and a rescaling move per component, and
//! random-walk Metropolis-Hastings for the per-edge variances.

mod birth;
mod chain;
mod diagnostics;
mod inverse_gaussian;
mod state;

pub use birth::{BirthProposal, BIRTH_SCALES, BIRTH_SEEDS, MIN_NODE_SCORE};
pub use chain::{
    chain_rng, derive_seed, run_chain, run_chains, ComponentDraws, PosteriorSamples,
    SamplerConfig, TARGET_ACCEPTANCE,
};
pub use diagnostics::{gelman_rubin, Rhat, MIN_DRAWS};
pub use inverse_gaussian::sample_inverse_gaussian;
pub use state::{log_ig_prior, ChainState, THETA_FLOOR};
