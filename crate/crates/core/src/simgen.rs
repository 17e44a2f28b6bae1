//! Synthetic datasets with known ground truth: family-block kinship,
//! genotypes, three nuisance covariates, sparse rank-one effect components and
//! edge-wise polygenic and environmental noise.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{BnmeError, Result};
use crate::model::{
    assemble_theta, edge_pairs, n_edges, EffectComponents, EffectMatrix, GenotypeVector, Kinship,
    NetworkPhenotype,
};
use crate::projection::CovariateMatrix;

/// Family size of the block kinship.
pub const FAMILY_SIZE: usize = 4;
/// Kinship coefficient of the twin-like pair in each family.
pub const TWIN_KINSHIP: f64 = 0.9;
/// Kinship coefficient of every other within-family pair.
pub const SIBLING_KINSHIP: f64 = 0.5;
/// Seed of the covariate coefficients, shared by every scenario and replicate.
pub const COEFFICIENT_SEED: u64 = 0x00C0_FFEE_5EED;
/// Mean and standard deviation of the covariate coefficients.
pub const COEFFICIENT_MEAN: f64 = 0.3;
pub const COEFFICIENT_SD: f64 = 0.5;
/// Magnitude range of nonzero loadings.
pub const LOADING_RANGE: (f64, f64) = (0.5, 1.0);
pub const COVARIATE_LABELS: [&str; 3] = ["bernoulli", "uniform", "normal"];

const STREAM_KINSHIP: u64 = 1;
const STREAM_GENOTYPE: u64 = 2;
const STREAM_COVARIATES: u64 = 3;
const STREAM_LOADINGS: u64 = 4;
const STREAM_NOISE: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n_subjects: usize,
    pub n_nodes: usize,
    /// Component weights; the length is the number of true components.
    pub weights: Vec<f64>,
    /// Fraction of zero loadings per component.
    pub sparsity: f64,
    pub sigma_a: f64,
    pub sigma_e: f64,
    pub seed: u64,
    /// Use `Lambda = I` instead of the family-block kinship.
    #[serde(default)]
    pub identity_kinship: bool,
    /// Add the covariate effects to the edges (covariates are always drawn).
    #[serde(default = "default_true")]
    pub covariate_effects: bool,
}

fn default_true() -> bool {
    true
}

impl Scenario {
    /// One signalling component with weight 1.
    pub fn single(n_subjects: usize, sparsity: f64, seed: u64) -> Self {
        Scenario {
            n_subjects,
            n_nodes: 50,
            weights: vec![1.0],
            sparsity,
            sigma_a: 1.5,
            sigma_e: 1.0,
            seed,
            identity_kinship: false,
            covariate_effects: true,
        }
    }

    /// Three components weighted 0.7, 0.3 and 0.
    pub fn triple(n_subjects: usize, sparsity: f64, seed: u64) -> Self {
        Scenario {
            weights: vec![0.7, 0.3, 0.0],
            ..Scenario::single(n_subjects, sparsity, seed)
        }
    }

    /// Scenario 1 or 2 by number.
    pub fn numbered(id: u8, n_subjects: usize, sparsity: f64, seed: u64) -> Result<Self> {
        match id {
            1 => Ok(Scenario::single(n_subjects, sparsity, seed)),
            2 => Ok(Scenario::triple(n_subjects, sparsity, seed)),
            other => Err(BnmeError::InvalidParameter(format!(
                "scenario must be 1 or 2, got {other}"
            ))),
        }
    }

    pub fn n_active(&self) -> usize {
        let zeros = (self.sparsity * self.n_nodes as f64 - 1e-9).ceil().max(0.0) as usize;
        self.n_nodes - zeros.min(self.n_nodes)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.sparsity) {
            return Err(BnmeError::InvalidParameter(format!(
                "sparsity must lie in [0, 1], got {}",
                self.sparsity
            )));
        }
        if self.weights.is_empty() {
            return Err(BnmeError::InvalidParameter("at least one component weight".into()));
        }
        if self.n_subjects < FAMILY_SIZE {
            return Err(BnmeError::InvalidParameter(format!(
                "need at least {FAMILY_SIZE} subjects, got {}",
                self.n_subjects
            )));
        }
        if self.n_nodes < 2 {
            return Err(BnmeError::InvalidParameter("need at least 2 nodes".into()));
        }
        if self.sparsity < 1.0 && self.n_active() < 2 {
            return Err(BnmeError::InvalidParameter(format!(
                "sparsity {} leaves {} active nodes; a component needs at least 2",
                self.sparsity,
                self.n_active()
            )));
        }
        if !(self.sigma_a > 0.0) || !(self.sigma_e > 0.0) {
            return Err(BnmeError::InvalidParameter("variances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub theta: EffectMatrix,
    /// Edge indices with a nonzero effect, ascending.
    pub support: Vec<usize>,
    /// Active nodes of each true component.
    pub component_supports: Vec<Vec<usize>>,
    pub components: EffectComponents,
    /// `E x P`, edge-major.
    pub covariate_coefficients: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub phenotype: NetworkPhenotype,
    /// Raw dosages in {0, 1, 2}.
    pub dosages: Vec<f64>,
    pub genotype: GenotypeVector,
    pub covariates: CovariateMatrix,
    pub kinship: Kinship,
    pub truth: GroundTruth,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Block-diagonal family kinship: blocks of four with one 0.9 pair, 0.5 elsewhere.
/// A trailing partial family keeps the same rule.
pub fn generate_kinship(n_subjects: usize, seed: u64) -> Result<Kinship> {
    if n_subjects < FAMILY_SIZE {
        return Err(BnmeError::InvalidParameter(format!(
            "need at least {FAMILY_SIZE} subjects, got {n_subjects}"
        )));
    }
    let mut rng = stream(seed, STREAM_KINSHIP);
    let mut m = DMatrix::identity(n_subjects, n_subjects);
    let mut start = 0;
    while start < n_subjects {
        let size = FAMILY_SIZE.min(n_subjects - start);
        let mut members: Vec<usize> = (start..start + size).collect();
        members.shuffle(&mut rng);
        for a in 0..size {
            for b in (a + 1)..size {
                let (i, j) = (members[a], members[b]);
                let c = if a == 0 && b == 1 {
                    TWIN_KINSHIP
                } else {
                    SIBLING_KINSHIP
                };
                m[(i, j)] = c;
                m[(j, i)] = c;
            }
        }
        start += size;
    }
    Kinship::new(m)
}

/// `b + e` for one edge: `b ~ N(0, sigma_a Lambda)`, `e ~ N(0, sigma_e I)`.
pub fn sample_edge_noise<R: Rng + ?Sized>(
    kinship: &Kinship,
    sigma_a: f64,
    sigma_e: f64,
    rng: &mut R,
) -> Vec<f64> {
    let n = kinship.n();
    let g: Vec<f64> = kinship
        .eigenvalues()
        .iter()
        .map(|&d| {
            let g: f64 = StandardNormal.sample(rng);
            (sigma_a * d).sqrt() * g
        })
        .collect();
    let mut out = kinship.unrotate(&g);
    let se = sigma_e.sqrt();
    for x in out.iter_mut().take(n) {
        let g: f64 = StandardNormal.sample(rng);
        *x += se * g;
    }
    out
}

/// Loadings of each component: contiguous (wrapping) blocks of active nodes,
/// random signs, magnitudes uniform on [0.5, 1].
fn generate_loadings<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
    let v = scenario.n_nodes;
    let m = if scenario.sparsity >= 1.0 { 0 } else { scenario.n_active() };
    let mut thetas = Vec::new();
    let mut supports = Vec::new();
    for h in 0..scenario.weights.len() {
        let mut theta = vec![0.0; v];
        let mut support: Vec<usize> = (0..m).map(|j| (h * m + j) % v).collect();
        support.sort_unstable();
        for &node in &support {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let mag = rng.random_range(LOADING_RANGE.0..LOADING_RANGE.1);
            theta[node] = sign * mag;
        }
        thetas.push(theta);
        supports.push(support);
    }
    (thetas, supports)
}

/// Coefficients of the three covariates for every edge, from the fixed seed.
pub fn covariate_coefficients(n_nodes: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(COEFFICIENT_SEED);
    let law = Normal::new(COEFFICIENT_MEAN, COEFFICIENT_SD).expect("valid normal");
    (0..n_edges(n_nodes) * COVARIATE_LABELS.len())
        .map(|_| law.sample(&mut rng))
        .collect()
}

pub fn generate_dataset(scenario: &Scenario) -> Result<SimulatedData> {
    scenario.validate()?;
    let n = scenario.n_subjects;
    let v = scenario.n_nodes;
    let e_count = n_edges(v);

    let kinship = if scenario.identity_kinship {
        Kinship::identity(n)
    } else {
        generate_kinship(n, scenario.seed)?
    };

    let mut rng = stream(scenario.seed, STREAM_GENOTYPE);
    let dosages = loop {
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(0..3u8) as f64).collect();
        if d.iter().any(|&x| x != d[0]) {
            break d;
        }
    };
    let genotype = GenotypeVector::standardize("sim_snp", &dosages)?;

    let mut rng = stream(scenario.seed, STREAM_COVARIATES);
    let normal = Normal::new(-0.5, 0.5).expect("valid normal");
    // redrawn until full column rank, which small N can miss
    let covariates = loop {
        let mut x = DMatrix::zeros(n, COVARIATE_LABELS.len());
        for i in 0..n {
            x[(i, 0)] = if rng.random::<bool>() { 1.0 } else { 0.0 };
            x[(i, 1)] = rng.random_range(-0.5..0.5);
            x[(i, 2)] = normal.sample(&mut rng);
        }
        let labels = COVARIATE_LABELS.iter().map(|s| s.to_string()).collect();
        match CovariateMatrix::new(x, labels) {
            Err(BnmeError::RankDeficient(_)) => continue,
            other => break other?,
        }
    };

    let mut rng = stream(scenario.seed, STREAM_LOADINGS);
    let (thetas, component_supports) = generate_loadings(scenario, &mut rng);
    let mut components = EffectComponents::from_parts(scenario.weights.clone(), &thetas)?;
    // a zero-weight component still has a nonzero loading pattern
    components.tau = scenario.weights.iter().map(|&w| w != 0.0).collect();
    let theta = assemble_theta(&components);
    let support = true_support(v, &scenario.weights, &component_supports);

    let coefficients = covariate_coefficients(v);
    let mut rng = stream(scenario.seed, STREAM_NOISE);
    let mut values = Vec::with_capacity(e_count * n);
    for e in 0..e_count {
        let noise = sample_edge_noise(&kinship, scenario.sigma_a, scenario.sigma_e, &mut rng);
        let t = theta.values[e];
        let beta = &coefficients[e * 3..e * 3 + 3];
        for i in 0..n {
            let mut a = t * genotype.values[i] + noise[i];
            if scenario.covariate_effects {
                for (p, b) in beta.iter().enumerate() {
                    a += b * covariates.matrix[(i, p)];
                }
            }
            values.push(a);
        }
    }
    let phenotype = NetworkPhenotype::new(n, v, values)?;
    Ok(SimulatedData {
        phenotype,
        dosages,
        genotype,
        covariates,
        kinship,
        truth: GroundTruth {
            theta,
            support,
            component_supports,
            components,
            covariate_coefficients: if scenario.covariate_effects {
                coefficients
            } else {
                vec![0.0; e_count * 3]
            },
        },
    })
}

/// Edges whose endpoints are both active in some nonzero-weight component.
fn true_support(n_nodes: usize, weights: &[f64], supports: &[Vec<usize>]) -> Vec<usize> {
    edge_pairs(n_nodes)
        .into_iter()
        .enumerate()
        .filter(|(_, (k, l))| {
            weights
                .iter()
                .zip(supports)
                .any(|(&w, s)| w != 0.0 && s.binary_search(k).is_ok() && s.binary_search(l).is_ok())
        })
        .map(|(e, _)| e)
        .collect()
}
