//! Objectives, initialisation, optimisation and distillation.

mod adam;
mod distill;
mod fit;
mod init;
mod objectives;

#[cfg(test)]
mod tests;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::models::ModelKind;

pub use adam::{AdamParams, OptimizerState};
pub use distill::{distill, distill_from_checkpoint, distill_report, DistillQuery, DistillReport};
pub use fit::{fit, EarlyStopping, EpochRecord, StopDecision, TrainingLog};
pub use init::{init_params, lognormal_mu};
pub use objectives::{mean_log_likelihood, mle_loss, pll_loss, Loss, PllOptions, PllWeights, DEFAULT_LOGITS_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Objective {
    Pll,
    Mle,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Pll => "pll",
            Objective::Mle => "mle",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pll" => Ok(Objective::Pll),
            "mle" => Ok(Objective::Mle),
            other => Err(Error::Config(format!(
                "unknown objective '{other}' (expected pll or mle)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Precision {
    Double,
    Single,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::Double => "double",
            Precision::Single => "single",
        })
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "double" | "f64" => Ok(Precision::Double),
            "single" | "f32" => Ok(Precision::Single),
            other => Err(Error::Config(format!("unknown precision '{other}'"))),
        }
    }
}

/// Parameter initialisation.
#[derive(Clone, Debug, PartialEq)]
pub enum InitScheme {
    /// `N(0, σ²)` on every stored parameter.
    Gaussian { sigma: f64 },
    /// Log of per-column Dirichlet draws with concentration `alpha`.
    Dirichlet { alpha: f64 },
    /// Log-normal with the mean chosen so a score is close to one.
    LogNormal { sigma: f64 },
    /// Parameters of an energy-based checkpoint.
    Distilled(PathBuf),
}

impl InitScheme {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::EnergyBased => InitScheme::Gaussian { sigma: 1e-3 },
            ModelKind::NonNegative => InitScheme::Dirichlet { alpha: 1e3 },
            ModelKind::Squared => InitScheme::LogNormal { sigma: 1e-3 },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InitScheme::Gaussian { .. } => "gaussian",
            InitScheme::Dirichlet { .. } => "dirichlet",
            InitScheme::LogNormal { .. } => "lognormal",
            InitScheme::Distilled(_) => "distilled",
        }
    }

    /// Rejects schemes that do not fit `kind`.
    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        let ok = match self {
            InitScheme::Gaussian { sigma } => *sigma > 0.0,
            InitScheme::Dirichlet { alpha } => *alpha > 0.0 && kind == ModelKind::NonNegative,
            InitScheme::LogNormal { sigma } => *sigma > 0.0 && kind == ModelKind::Squared,
            InitScheme::Distilled(_) => kind == ModelKind::Squared,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{self} initialisation does not apply to {kind} models"
            )))
        }
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitScheme::Gaussian { sigma } => write!(f, "gaussian({sigma})"),
            InitScheme::Dirichlet { alpha } => write!(f, "dirichlet({alpha})"),
            InitScheme::LogNormal { sigma } => write!(f, "lognormal({sigma})"),
            InitScheme::Distilled(p) => write!(f, "distilled({})", p.display()),
        }
    }
}

/// Default learning rate of a model kind.
pub fn default_learning_rate(kind: ModelKind) -> f64 {
    match kind {
        ModelKind::NonNegative => 1e-2,
        _ => 1e-3,
    }
}

/// Everything `fit` needs besides the model and data.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    pub weights: PllWeights,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam: AdamParams,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub init: InitScheme,
    pub precision: Precision,
    /// Validation queries used by the per-epoch MRR; `None` uses all.
    pub valid_subsample: Option<usize>,
    pub logits_cap: usize,
}

impl TrainConfig {
    /// Defaults for a model kind.
    pub fn new(kind: ModelKind) -> Self {
        TrainConfig {
            objective: Objective::Pll,
            weights: PllWeights::default(),
            batch_size: 1000,
            learning_rate: default_learning_rate(kind),
            adam: AdamParams::default(),
            patience: 3,
            max_epochs: 100,
            seed: 0,
            init: InitScheme::default_for(kind),
            precision: Precision::Double,
            valid_subsample: Some(1000),
            logits_cap: DEFAULT_LOGITS_CAP,
        }
    }

    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        if self.objective == Objective::Pll {
            self.weights.validate()?;
        }
        if self.objective == Objective::Mle && !kind.is_circuit() {
            return Err(Error::Unsupported(
                "exact maximum likelihood is infeasible for energy-based models".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be positive".into()));
        }
        if self.precision == Precision::Single {
            return Err(Error::Config("single precision is not supported; use double".into()));
        }
        self.adam.validate()?;
        self.init.validate(kind)
    }

    pub fn pll_options(&self) -> PllOptions {
        PllOptions {
            weights: self.weights,
            logits_cap: self.logits_cap,
        }
    }
}
