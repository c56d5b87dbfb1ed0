//! Synthetic marginals and cost matrices on a uniform grid over `[0, 1]`.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, Discrete, Normal, Poisson};

use crate::error::{OtError, Result};
use crate::model::{histogram_from_samples, CostMatrix, Histogram};

/// Shape of a marginal before discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarginalKind {
    /// Normal density evaluated at `k/(n−1)`.
    GaussianGrid { mean: f64, std: f64 },
    /// Mixture of Poisson pmfs evaluated at the grid indices `0..n`.
    MixedPoissonGrid { rates: Vec<f64>, mix_weights: Vec<f64> },
    UniformGrid,
    /// Independent `U(0, 1)` weights drawn from the seed.
    RandomUniform,
    /// Whitespace or comma separated weights.
    FromFile { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalFamily {
    pub kind: MarginalKind,
    pub n: usize,
}

impl MarginalFamily {
    pub fn gaussian(mean: f64, std: f64, n: usize) -> Self {
        Self {
            kind: MarginalKind::GaussianGrid { mean, std },
            n,
        }
    }

    pub fn mixed_poisson(rates: Vec<f64>, mix_weights: Vec<f64>, n: usize) -> Self {
        Self {
            kind: MarginalKind::MixedPoissonGrid { rates, mix_weights },
            n,
        }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            kind: MarginalKind::UniformGrid,
            n,
        }
    }

    pub fn random(n: usize) -> Self {
        Self {
            kind: MarginalKind::RandomUniform,
            n,
        }
    }

    /// Default Gaussian pair: means 0.35 and 0.65, standard deviation 0.1.
    pub fn default_gaussian_pair(n: usize) -> (Self, Self) {
        (Self::gaussian(0.35, 0.1, n), Self::gaussian(0.65, 0.1, n))
    }

    /// Default mixed-Poisson pair: rates `{0.3n, 0.7n}` with equal weights
    /// against rates `{0.1n, 0.5n}` weighted `(0.7, 0.3)`.
    pub fn default_poisson_pair(n: usize) -> (Self, Self) {
        let n_f = n as f64;
        (
            Self::mixed_poisson(vec![0.3 * n_f, 0.7 * n_f], vec![0.5, 0.5], n),
            Self::mixed_poisson(vec![0.1 * n_f, 0.5 * n_f], vec![0.7, 0.3], n),
        )
    }
}

/// Discretizes a marginal family and normalizes it. Grid families ignore
/// the seed.
pub fn generate_marginal(fam: &MarginalFamily, seed: u64) -> Result<Histogram> {
    let n = fam.n;
    if n < 2 && !matches!(fam.kind, MarginalKind::FromFile { .. }) {
        return Err(OtError::InvalidConfig(format!("grid size must be at least 2, got {n}")));
    }
    let grid = |k: usize| k as f64 / (n - 1) as f64;
    let raw: Vec<f64> = match &fam.kind {
        MarginalKind::GaussianGrid { mean, std } => {
            let normal = Normal::new(*mean, *std).map_err(|e| OtError::InvalidConfig(e.to_string()))?;
            (0..n).map(|k| normal.pdf(grid(k))).collect()
        }
        MarginalKind::MixedPoissonGrid { rates, mix_weights } => {
            if rates.is_empty() || rates.len() != mix_weights.len() {
                return Err(OtError::InvalidConfig("rates and mixture weights must have equal nonzero length".into()));
            }
            let weights = Histogram::new(mix_weights.clone())?;
            let pmfs = rates
                .iter()
                .map(|&rate| Poisson::new(rate).map_err(|e| OtError::InvalidConfig(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            (0..n)
                .map(|k| pmfs.iter().zip(weights.as_slice()).map(|(p, w)| w * p.pmf(k as u64)).sum())
                .collect()
        }
        MarginalKind::UniformGrid => vec![1.0; n],
        MarginalKind::RandomUniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| rng.random::<f64>()).collect()
        }
        MarginalKind::FromFile { path } => read_weights(path)?,
    };
    if raw.iter().all(|&w| w == 0.0) {
        return Err(OtError::DegenerateFamily);
    }
    histogram_from_samples(&raw)
}

fn read_weights(path: &std::path::Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| OtError::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    text.split(|ch: char| ch == ',' || ch.is_whitespace())
        .filter(|tok| !tok.is_empty())
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| OtError::InvalidConfig(format!("not a number in {}: {tok:?}", path.display())))
        })
        .collect()
}

/// The map `φ` applied to distances between similarity vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phi", rename_all = "snake_case")]
pub enum VoterMetric {
    Eucl,
    SqEucl,
    Riesz,
    Rbf { gamma: f64 },
    Res { gamma: f64 },
}

impl VoterMetric {
    pub fn apply(&self, r: f64) -> f64 {
        match *self {
            Self::Eucl => r,
            Self::SqEucl => r * r,
            Self::Riesz => (2.0 * r).sqrt(),
            Self::Rbf { gamma } => (2.0 * -(-gamma * r * r).exp_m1()).sqrt(),
            Self::Res { gamma } => (2.0 * (1.0 / gamma - 1.0 / (gamma * gamma + r * r).sqrt())).max(0.0).sqrt(),
        }
    }

    fn check(&self) -> Result<()> {
        match *self {
            Self::Rbf { gamma } | Self::Res { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(OtError::InvalidConfig(format!("gamma must be positive, got {gamma}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostFamily {
    /// `((i − j)/(n − 1))²`.
    SqEuclidUnscaled,
    /// The unscaled matrix times `(n − 1)²/n`.
    SqEuclidScaled,
    /// `|i − j|/(n − 1)`.
    EuclidGrid,
    VoterPhi {
        metric: VoterMetric,
        similarity_vectors: Vec<Vec<f64>>,
    },
}

/// Builds the `n × n` cost matrix of a family.
pub fn build_cost_matrix(fam: &CostFamily, n: usize) -> Result<CostMatrix> {
    if n < 2 {
        return Err(OtError::InvalidConfig(format!("grid size must be at least 2, got {n}")));
    }
    let step = |i: usize, j: usize| (i as f64 - j as f64).abs() / (n - 1) as f64;
    match fam {
        CostFamily::SqEuclidUnscaled => CostMatrix::from_fn(n, |i, j| step(i, j).powi(2)),
        CostFamily::SqEuclidScaled => {
            let scale = ((n - 1) * (n - 1)) as f64 / n as f64;
            CostMatrix::from_fn(n, |i, j| scale * step(i, j).powi(2))
        }
        CostFamily::EuclidGrid => CostMatrix::from_fn(n, step),
        CostFamily::VoterPhi {
            metric,
            similarity_vectors,
        } => {
            metric.check()?;
            if similarity_vectors.len() != n {
                return Err(OtError::DimensionMismatch(format!(
                    "{} similarity vectors for a {n}-point cost matrix",
                    similarity_vectors.len()
                )));
            }
            let dim = similarity_vectors[0].len();
            if similarity_vectors.iter().any(|v| v.len() != dim) {
                return Err(OtError::DimensionMismatch("similarity vectors differ in length".into()));
            }
            let dist = |i: usize, j: usize| -> f64 {
                similarity_vectors[i]
                    .iter()
                    .zip(&similarity_vectors[j])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            };
            CostMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { metric.apply(dist(i, j)) })
        }
    }
}
