//! Parameter initialisation schemes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal};

use crate::error::{Error, Result};
use crate::models::{param_shapes, Dims, Family, Model, ModelKind};
use crate::numeric::DenseMatrix;

use super::InitScheme;

/// Mean of the log-normal so that `N` products of `f` factors sum to about one:
/// `μ = −ln(N)/f − σ²/2`.
pub fn lognormal_mu(family: Family, dims: &Dims, sigma: f64) -> f64 {
    let d = dims.rank as f64;
    let (n, f) = match family {
        Family::Cp => (d, 3.0),
        Family::Complex => (2.0 * d, 3.0),
        Family::Rescal => (d * d, 3.0),
        Family::Tucker => (d * d * dims.relation_rank as f64, 4.0),
    };
    -n.ln() / f - sigma * sigma / 2.0
}

/// Fresh model drawn from `scheme`; reproducible given `seed`.
pub fn init_params(family: Family, kind: ModelKind, dims: Dims, scheme: &InitScheme, seed: u64) -> Result<Model> {
    scheme.validate(kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = param_shapes(family, kind, &dims);
    let params: Vec<DenseMatrix> = match scheme {
        InitScheme::Gaussian { sigma } => {
            let normal = Normal::new(0.0, *sigma).map_err(|e| Error::Config(e.to_string()))?;
            shapes
                .iter()
                .map(|(_, r, c)| DenseMatrix::from_fn(*r, *c, |_, _| normal.sample(&mut rng)))
                .collect()
        }
        InitScheme::LogNormal { sigma } => {
            let mu = lognormal_mu(family, &dims, *sigma);
            let ln = LogNormal::new(mu, *sigma).map_err(|e| Error::Config(e.to_string()))?;
            shapes
                .iter()
                .map(|(_, r, c)| DenseMatrix::from_fn(*r, *c, |_, _| ln.sample(&mut rng)))
                .collect()
        }
        InitScheme::Dirichlet { alpha } => {
            let gamma = Gamma::new(*alpha, 1.0).map_err(|e| Error::Config(e.to_string()))?;
            let logit = Normal::new(0.0, 1e-2).expect("valid");
            shapes
                .iter()
                .map(|(name, r, c)| match *name {
                    "theta" | "gamma" => DenseMatrix::from_fn(*r, *c, |_, _| logit.sample(&mut rng)),
                    "T" => log_dirichlet_all(*r, *c, &gamma, &mut rng),
                    _ => log_dirichlet_columns(*r, *c, &gamma, &mut rng),
                })
                .collect()
        }
        InitScheme::Distilled(path) => {
            let squared = super::distill_from_checkpoint(path)?;
            if squared.family() != family || *squared.dims() != dims {
                return Err(Error::Checkpoint(format!(
                    "checkpoint holds a {} model with {:?}, expected {family} with {dims:?}",
                    squared.family(),
                    squared.dims()
                )));
            }
            return Ok(squared);
        }
    };
    Model::new(family, kind, dims, params)
}

/// Each column is the log of a categorical drawn from `Dirichlet(α·1)`.
fn log_dirichlet_columns(rows: usize, cols: usize, gamma: &Gamma<f64>, rng: &mut impl Rng) -> DenseMatrix {
    let mut m = DenseMatrix::from_fn(rows, cols, |_, _| gamma.sample(rng));
    for j in 0..cols {
        let total: f64 = (0..rows).map(|i| m.get(i, j)).sum();
        for i in 0..rows {
            m.set(i, j, (m.get(i, j) / total).ln());
        }
    }
    m
}

/// One Dirichlet draw over every entry, in log-space.
fn log_dirichlet_all(rows: usize, cols: usize, gamma: &Gamma<f64>, rng: &mut impl Rng) -> DenseMatrix {
    let m = DenseMatrix::from_fn(rows, cols, |_, _| gamma.sample(rng));
    let total: f64 = m.data().iter().sum();
    m.map(|v| (v / total).ln())
}
