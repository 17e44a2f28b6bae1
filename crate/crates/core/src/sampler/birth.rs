//! Birth/death move for a whole component.
//!
//! A switched-off component carries loadings drawn from their prior. Those
//! almost never line up with a signal, so the indicator update alone rarely
//! switches a component back on. This move proposes fresh loadings from a
//! mixture built on the residual edge scores (the data minus every other
//! component) and accepts with the Metropolis-Hastings ratio. The reverse move
//! draws the loadings and local scales from their prior.
//!
//! With `eta_h` integrated over its slab, the birth ratio reduces to
//! `exp(log_odds(theta')) * laplace(theta') / q(theta')`.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use super::state::ChainState;
use crate::model::{edge_index, edge_pairs, HyperParams};

/// Seed edges per proposal; each seeds one mixture component.
pub const BIRTH_SEEDS: usize = 4;
/// A node joins a clique only while its mean signed score against the
/// current members is at least this large.
pub const MIN_NODE_SCORE: f64 = 1.5;
/// Clique loading magnitudes, in units of `1 / nu`; one mixture component
/// per clique and scale.
pub const BIRTH_SCALES: [f64; 3] = [2.0, 4.0, 6.0];
/// Proposal standard deviation of clique members, relative to the magnitude.
const SPREAD: f64 = 0.3;
/// Proposal standard deviation of the other nodes, relative to the magnitude.
const NULL_SPREAD: f64 = 0.25;

/// One Gaussian mixture component over the whole loading vector.
#[derive(Debug, Clone)]
struct Clique {
    mean: Vec<f64>,
    sd: Vec<f64>,
}

/// Loading proposal for one component, built from the other components only.
#[derive(Debug, Clone)]
pub struct BirthProposal {
    cliques: Vec<Clique>,
    /// `a^T S^-1 z - others * z^T S^-1 z` per edge, excluding the component.
    residual: Vec<f64>,
    zz: Vec<f64>,
    n_nodes: usize,
}

impl BirthProposal {
    pub fn new(residual: Vec<f64>, zz: Vec<f64>, n_nodes: usize, nu: f64) -> Self {
        let v = n_nodes;
        let score: Vec<f64> = residual.iter().zip(&zz).map(|(r, q)| r / q.sqrt()).collect();
        let pairs = edge_pairs(v);
        let mut order: Vec<usize> = (0..score.len()).collect();
        order.sort_by(|&a, &b| score[b].abs().total_cmp(&score[a].abs()).then(a.cmp(&b)));
        let cliques = order
            .iter()
            .take(BIRTH_SEEDS)
            .flat_map(|&e| {
                let (nodes, sign) = grow_clique(&score, pairs[e], v);
                BIRTH_SCALES
                    .iter()
                    .map(|&m| {
                        let magnitude = m / nu;
                        let mut mean = vec![0.0; v];
                        let mut sd = vec![NULL_SPREAD * magnitude; v];
                        for &k in &nodes {
                            mean[k] = sign[k] * magnitude;
                            sd[k] = SPREAD * magnitude;
                        }
                        Clique { mean, sd }
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        BirthProposal { cliques, residual, zz, n_nodes }
    }

    /// Inclusion log-odds with `eta` integrated out, for loadings `row`.
    pub fn log_odds(&self, hyper: &HyperParams, row: &[f64]) -> f64 {
        let v = self.n_nodes;
        let mut precision = 1.0 / hyper.omega;
        let mut linear = 0.0;
        let mut e = 0;
        for k in 0..v {
            for l in (k + 1)..v {
                let p = row[k] * row[l];
                precision += p * p * self.zz[e];
                linear += self.residual[e] * p;
                e += 1;
            }
        }
        let prior = (hyper.tau_prior / (1.0 - hyper.tau_prior)).ln();
        prior + 0.5 * linear * linear / precision - 0.5 * (hyper.omega * precision).ln()
    }

    /// `ln q(row) - ln laplace(row)`.
    pub fn log_density_ratio(&self, nu: f64, row: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .cliques
            .iter()
            .map(|c| {
                row.iter()
                    .zip(c.mean.iter().zip(&c.sd))
                    .map(|(&x, (&m, &sd))| {
                        let u = (x - m) / sd;
                        let normal = -0.5 * u * u - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
                        normal - laplace_log_density(nu, x)
                    })
                    .sum()
            })
            .collect();
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
        max + sum.ln() - (terms.len() as f64).ln()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let c = &self.cliques[rng.random_range(0..self.cliques.len())];
        c.mean
            .iter()
            .zip(&c.sd)
            .map(|(&m, &sd)| {
                let g: f64 = StandardNormal.sample(rng);
                m + sd * g
            })
            .collect()
    }
}

/// Greedy signed clique from a seed edge: repeatedly adds the node whose
/// signed score sum with the current members is largest, while its mean score
/// stays above [`MIN_NODE_SCORE`]. Returns the members and their signs.
fn grow_clique(score: &[f64], seed: (usize, usize), v: usize) -> (Vec<usize>, Vec<f64>) {
    let mut sign = vec![0.0; v];
    let mut acc = vec![0.0; v];
    let mut nodes = Vec::new();
    let (k, l) = seed;
    for (j, s) in [(k, 1.0), (l, score[edge_index(v, k, l)].signum())] {
        add_node(j, s, score, &mut nodes, &mut sign, &mut acc);
    }
    while nodes.len() < v {
        let next = (0..v)
            .filter(|&j| sign[j] == 0.0)
            .max_by(|&a, &b| acc[a].abs().total_cmp(&acc[b].abs()).then(b.cmp(&a)));
        let Some(j) = next else { break };
        if acc[j].abs() < MIN_NODE_SCORE * nodes.len() as f64 {
            break;
        }
        add_node(j, acc[j].signum(), score, &mut nodes, &mut sign, &mut acc);
    }
    (nodes, sign)
}

fn add_node(j: usize, s: f64, score: &[f64], nodes: &mut Vec<usize>, sign: &mut [f64], acc: &mut [f64]) {
    let v = sign.len();
    nodes.push(j);
    sign[j] = s;
    for i in (0..v).filter(|&i| i != j) {
        acc[i] += s * score[edge_index(v, i, j)];
    }
}

fn laplace_log_density(nu: f64, x: f64) -> f64 {
    (0.5 * nu).ln() - nu * x.abs()
}

impl ChainState {
    /// Proposal for component `h`; depends on every other component but not
    /// on `h` itself.
    pub fn birth_proposal(&self, h: usize, nu: f64) -> BirthProposal {
        let v = self.effects.n_nodes;
        let eta = self.effects.eta[h];
        let row = self.effects.theta_row(h);
        let stats = self.edge_stats();
        let theta = self.theta();
        let mut residual = Vec::with_capacity(stats.len());
        let mut e = 0;
        for k in 0..v {
            for l in (k + 1)..v {
                let others = theta[e] - eta * row[k] * row[l];
                residual.push(stats[e].az - others * stats[e].zz);
                e += 1;
            }
        }
        BirthProposal::new(residual, stats.iter().map(|s| s.zz).collect(), v, nu)
    }

    /// One birth (when `tau_h = 0`) or death (when `tau_h = 1`) proposal.
    /// Returns whether the indicator changed.
    pub fn birth_death_move<R: Rng + ?Sized>(
        &mut self,
        hyper: &HyperParams,
        h: usize,
        rng: &mut R,
    ) -> bool {
        let proposal = self.birth_proposal(h, hyper.nu);
        let v = self.effects.n_nodes;
        let nu = hyper.nu;
        if !self.effects.tau[h] {
            let row = proposal.sample(rng);
            let log_ratio = proposal.log_odds(hyper, &row) - proposal.log_density_ratio(nu, &row);
            if !(rng.random::<f64>().ln() < log_ratio) {
                return false;
            }
            self.effects.theta_row_mut(h).copy_from_slice(&row);
            self.effects.tau[h] = true;
            for k in 0..v {
                self.gibbs_update_local_scale(hyper, h, k, rng);
            }
            self.gibbs_update_eta(hyper, h, rng);
        } else {
            let row = self.effects.theta_row(h).to_vec();
            let log_ratio = proposal.log_density_ratio(nu, &row) - proposal.log_odds(hyper, &row);
            if !(rng.random::<f64>().ln() < log_ratio) {
                return false;
            }
            self.effects.tau[h] = false;
            self.gibbs_update_eta(hyper, h, rng);
            let scale = Exp::new(0.5 * nu * nu).expect("positive rate");
            for k in 0..v {
                let s = scale.sample(rng);
                let g: f64 = StandardNormal.sample(rng);
                self.effects.local_scales[h * v + k] = s;
                self.effects.theta_row_mut(h)[k] = s.sqrt() * g;
            }
        }
        true
    }
}
