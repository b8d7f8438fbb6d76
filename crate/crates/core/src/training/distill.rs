//! Initialising squared models from energy-based ones.

use std::path::Path;

use crate::error::{Error, Result};
use crate::evaluation::kendall_tau_b;
use crate::kg_data::Triple;
use crate::models::{load_checkpoint, Family, Model, ModelKind, Slot};

/// Squared model with the parameters of an energy-based CP or ComplEx model.
pub fn distill(ebm: &Model) -> Result<Model> {
    if ebm.kind() != ModelKind::EnergyBased {
        return Err(Error::Checkpoint(format!(
            "distillation starts from an energy-based model, got {}",
            ebm.kind()
        )));
    }
    if !matches!(ebm.family(), Family::Cp | Family::Complex) {
        return Err(Error::Checkpoint(format!(
            "distillation supports cp and complex, got {}",
            ebm.family()
        )));
    }
    ebm.with_kind(ModelKind::Squared)
}

/// Loads an energy-based checkpoint and distils it.
pub fn distill_from_checkpoint(path: &Path) -> Result<Model> {
    let (m, _) = load_checkpoint(path)?;
    distill(&m)
}

/// One ranking query: the other two slots of `context` are fixed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistillQuery {
    pub target: Slot,
    pub context: Triple,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistillReport {
    /// Share of the supplied triples with a non-negative energy-based score.
    pub nonneg_fraction: f64,
    pub checked: usize,
    /// Indices of queries skipped because a candidate score was negative.
    pub skipped: Vec<usize>,
    /// Smallest Kendall tau-b over the checked queries.
    pub min_tau: Option<f64>,
    /// Indices of checked queries whose tau is not exactly one.
    pub disagreements: Vec<usize>,
}

impl DistillReport {
    pub fn agreement(&self) -> bool {
        self.disagreements.is_empty()
    }
}

/// Ranking agreement between `ebm` and `squared` on every query whose
/// energy-based candidate scores are all non-negative.
pub fn distill_report(
    ebm: &Model,
    squared: &Model,
    triples: &[Triple],
    queries: &[DistillQuery],
) -> Result<DistillReport> {
    if ebm.family() != squared.family() || ebm.dims() != squared.dims() {
        return Err(Error::Checkpoint("models differ in family or dimensions".into()));
    }
    let nonneg_fraction = ebm.nonneg_score_fraction(triples)?;
    let mut skipped = Vec::new();
    let mut disagreements = Vec::new();
    let mut min_tau: Option<f64> = None;
    let mut checked = 0;
    for (i, q) in queries.iter().enumerate() {
        let a = ebm.candidate_scores(q.target, &q.context)?;
        if a.iter().any(|&v| v < 0.0) {
            skipped.push(i);
            continue;
        }
        let b = squared.candidate_scores(q.target, &q.context)?;
        let tau = kendall_tau_b(&a, &b)?;
        checked += 1;
        min_tau = Some(min_tau.map_or(tau, |m| m.min(tau)));
        if tau != 1.0 {
            disagreements.push(i);
        }
    }
    if !skipped.is_empty() {
        log::info!(
            "{} distillation queries skipped: negative energy-based scores",
            skipped.len()
        );
    }
    Ok(DistillReport {
        nonneg_fraction,
        checked,
        skipped,
        min_tau,
        disagreements,
    })
}
