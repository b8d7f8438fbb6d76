//! Epoch loop with early stopping on validation MRR.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bench;
use crate::constraints::ConstraintCircuit;
use crate::error::{Error, Result};
use crate::evaluation::{mrr_hits, Masked};
use crate::kg_data::{KnowledgeGraph, Triple};
use crate::models::Model;

use super::{mle_loss, pll_loss, Objective, OptimizerState, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub objective_value: f64,
    pub valid_mrr: f64,
    pub seconds: f64,
    pub peak_bytes: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) of the returned snapshot.
    pub best_epoch: usize,
    pub best_mrr: f64,
    pub stopped_early: bool,
}

impl TrainingLog {
    /// Tab-separated, one line per epoch.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for r in &self.epochs {
            writeln!(
                s,
                "{}\t{}\t{}\t{:.6}\t{}",
                r.epoch, r.objective_value, r.valid_mrr, r.seconds, r.peak_bytes
            )
            .unwrap();
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    /// New best score: keep a snapshot.
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without a strict improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
    epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            stale: 0,
            epoch: 0,
        }
    }

    pub fn observe(&mut self, score: f64) -> StopDecision {
        self.epoch += 1;
        if score > self.best {
            self.best = score;
            self.best_epoch = self.epoch;
            self.stale = 0;
            return StopDecision::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

fn validation_queries(kg: &KnowledgeGraph, config: &TrainConfig) -> Vec<Triple> {
    let mut v = kg.valid.clone();
    if let Some(n) = config.valid_subsample {
        if n < v.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5e_ed0f_7a11);
            v.shuffle(&mut rng);
            v.truncate(n);
        }
    }
    v
}

/// Trains `model` on `kg.train`; returns the best-validation snapshot.
///
/// Without validation triples every epoch counts as an improvement and the
/// final parameters are returned.
pub fn fit(
    mut model: Model,
    kg: &KnowledgeGraph,
    config: &TrainConfig,
    constraints: Option<&ConstraintCircuit>,
) -> Result<(Model, TrainingLog)> {
    config.validate(model.kind())?;
    let (e, r) = (kg.num_entities(), kg.num_predicates());
    if model.dims().entities != e || model.dims().relations != r {
        return Err(Error::Vocab(format!(
            "model has |E|={}, |R|={} but the graph has |E|={e}, |R|={r}",
            model.dims().entities,
            model.dims().relations
        )));
    }
    if kg.train.is_empty() {
        return Err(Error::Argument("empty training split".into()));
    }
    if let Some(c) = constraints {
        if c.num_entities() != e || c.num_predicates() != r {
            return Err(Error::Constraint(
                "constraints were compiled for a different vocabulary".into(),
            ));
        }
    }
    model.set_reciprocal(kg.reciprocal);
    let valid = validation_queries(kg, config);
    let pll = config.pll_options();
    let mut adam = OptimizerState::new(model.params(), config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..kg.train.len()).collect();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut log = TrainingLog::default();
    let mut best = model.clone();
    let mut step = 0u64;
    let mut batch = Vec::with_capacity(config.batch_size);
    for epoch in 1..=config.max_epochs {
        let t0 = Instant::now();
        let base = bench::reset_peak();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(config.batch_size) {
            step += 1;
            batch.clear();
            batch.extend(chunk.iter().map(|&i| kg.train[i]));
            let loss = match config.objective {
                Objective::Pll => pll_loss(&model, &batch, &pll, constraints),
                Objective::Mle => mle_loss(&model, &batch, constraints),
            }
            .map_err(|err| annotate(err, step, epoch, &model))?;
            if !loss.value.is_finite() || loss.grad.iter().any(|g| g.has_non_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite loss {} at step {step} (epoch {epoch}); parameter norm {:.6e}",
                    loss.value,
                    model.parameter_norm()
                )));
            }
            total += loss.value * batch.len() as f64;
            count += batch.len();
            adam.step(model.params_mut(), &loss.grad, config.learning_rate)?;
        }
        let objective_value = total / count as f64;
        let valid_mrr = if valid.is_empty() {
            f64::NAN
        } else {
            let report = match constraints {
                Some(c) => mrr_hits(
                    &Masked {
                        model: &model,
                        circuit: c,
                    },
                    &valid,
                    &kg.filter,
                    &[],
                )?,
                None => mrr_hits(&model, &valid, &kg.filter, &[])?,
            };
            report.mrr
        };
        let rec = EpochRecord {
            epoch,
            objective_value,
            valid_mrr,
            seconds: t0.elapsed().as_secs_f64(),
            peak_bytes: bench::peak_bytes().saturating_sub(base),
        };
        log::info!(
            "epoch {epoch}: objective {objective_value:.6} valid_mrr {valid_mrr:.4} ({:.2}s)",
            rec.seconds
        );
        log.epochs.push(rec);
        if valid.is_empty() {
            best = model.clone();
            log.best_epoch = epoch;
            continue;
        }
        match stopper.observe(valid_mrr) {
            StopDecision::Improved => best = model.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                log.stopped_early = true;
                break;
            }
        }
        log.best_epoch = stopper.best_epoch();
    }
    log.best_epoch = if valid.is_empty() {
        log.best_epoch
    } else {
        stopper.best_epoch()
    };
    log.best_mrr = if valid.is_empty() { f64::NAN } else { stopper.best() };
    Ok((best, log))
}

fn annotate(err: Error, step: u64, epoch: usize, model: &Model) -> Error {
    if err.is_numerical() {
        Error::Numerical(format!(
            "{err} at step {step} (epoch {epoch}); parameter norm {:.6e}",
            model.parameter_norm()
        ))
    } else {
        err
    }
}
