use serde::{Deserialize, Serialize};

use crate::error::{BnmeError, Result};

/// Minimum kept draws per chain for a potential scale reduction.
pub const MIN_DRAWS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rhat {
    pub name: String,
    pub value: f64,
    /// Set when the within-chain variance is zero and the value was forced to 1.
    pub constant: bool,
}

/// Classic potential scale reduction over equal-length chains,
/// `sqrt(((n - 1) / n * W + B / n) / W)`, floored at 1.
pub fn gelman_rubin(name: &str, chains: &[&[f64]]) -> Result<Rhat> {
    let m = chains.len();
    if m < 2 {
        return Err(BnmeError::InvalidParameter(format!(
            "R-hat needs at least 2 chains, got {m}"
        )));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(BnmeError::DimensionMismatch(
            "R-hat chains differ in length".into(),
        ));
    }
    if n < MIN_DRAWS {
        return Err(BnmeError::InvalidParameter(format!(
            "R-hat needs at least {MIN_DRAWS} draws per chain, got {n}"
        )));
    }
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let within: f64 = chains
        .iter()
        .zip(&means)
        .map(|(c, &mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m as f64;
    if !(within > 0.0) {
        return Ok(Rhat {
            name: name.to_string(),
            value: 1.0,
            constant: true,
        });
    }
    let grand = means.iter().sum::<f64>() / m as f64;
    let between = nf * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0);
    let pooled = (nf - 1.0) / nf * within + between / nf;
    Ok(Rhat {
        name: name.to_string(),
        value: (pooled / within).sqrt().max(1.0),
        constant: false,
    })
}
