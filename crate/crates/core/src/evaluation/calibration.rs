//! Calibration of triple classification against hard negatives.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg_data::{KnowledgeGraph, Triple};
use crate::models::{Model, ModelKind};
use crate::numeric::sigmoid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Normalization {
    Logistic,
    MinMax,
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::Logistic => "logistic",
            Normalization::MinMax => "minmax",
        })
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logistic" => Ok(Normalization::Logistic),
            "minmax" => Ok(Normalization::MinMax),
            other => Err(Error::Config(format!("unknown normalization '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationBin {
    pub mean_probability: f64,
    pub empirical_frequency: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationReport {
    pub ece: f64,
    pub bins: Vec<CalibrationBin>,
    pub normalization: Normalization,
    /// Scored triples (positives plus negatives).
    pub scored: usize,
    /// Test triples without a usable negative.
    pub skipped: usize,
}

/// Bins `[0, 1]` into `b` equal bins (`p = 1` joins the last) and averages
/// `|p_j − f_j|` over the non-empty ones.
pub fn expected_calibration_error(probs: &[f64], labels: &[bool], b: usize) -> Result<(f64, Vec<CalibrationBin>)> {
    if b < 2 {
        return Err(Error::Argument(format!("need at least 2 bins, got {b}")));
    }
    if probs.len() != labels.len() {
        return Err(Error::Argument("probabilities and labels differ in length".into()));
    }
    if probs.is_empty() {
        return Err(Error::Argument("no predictions to calibrate".into()));
    }
    let mut sum_p = vec![0.0; b];
    let mut pos = vec![0usize; b];
    let mut count = vec![0usize; b];
    for (&p, &y) in probs.iter().zip(labels) {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Numerical(format!("probability {p} outside [0, 1]")));
        }
        let j = ((p * b as f64) as usize).min(b - 1);
        sum_p[j] += p;
        pos[j] += y as usize;
        count[j] += 1;
    }
    let bins: Vec<CalibrationBin> = (0..b)
        .map(|j| {
            let n = count[j].max(1) as f64;
            CalibrationBin {
                mean_probability: sum_p[j] / n,
                empirical_frequency: pos[j] as f64 / n,
                count: count[j],
            }
        })
        .collect();
    let filled: Vec<&CalibrationBin> = bins.iter().filter(|x| x.count > 0).collect();
    let ece = filled
        .iter()
        .map(|x| (x.mean_probability - x.empirical_frequency).abs())
        .sum::<f64>()
        / filled.len() as f64;
    Ok((ece, bins))
}

/// Log-score for circuit kinds, raw score for energy-based models.
fn logit(model: &Model, t: &Triple) -> Result<f64> {
    match model.kind() {
        ModelKind::EnergyBased => model.raw_score(t),
        _ => Ok(model.score(t)?.ln()),
    }
}

/// One hard negative per test triple: the object is replaced by an entity
/// seen with the same predicate in training, not known in any split.
pub fn hard_negatives(kg: &KnowledgeGraph, test: &[Triple], seed: u64) -> (Vec<(Triple, Triple)>, usize) {
    let mut objects: HashMap<usize, BTreeSet<usize>> = HashMap::new();
    for t in &kg.train {
        objects.entry(t.predicate).or_default().insert(t.object);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(test.len());
    let mut skipped = 0;
    for t in test {
        let pool: Vec<usize> = objects
            .get(&t.predicate)
            .map(|s| s.iter().copied().filter(|&o| o != t.object).collect())
            .unwrap_or_default();
        let mut order = pool;
        order.shuffle(&mut rng);
        match order
            .into_iter()
            .map(|o| Triple::new(t.subject, t.predicate, o))
            .find(|n| !kg.filter.contains(n))
        {
            Some(n) => pairs.push((*t, n)),
            None => skipped += 1,
        }
    }
    (pairs, skipped)
}

/// ECE of the model's triple-classification probabilities on test
/// positives paired with hard negatives.
pub fn calibration(
    model: &Model,
    test: &[Triple],
    kg: &KnowledgeGraph,
    normalization: Normalization,
    b: usize,
    seed: u64,
) -> Result<CalibrationReport> {
    if b < 2 {
        return Err(Error::Argument(format!("need at least 2 bins, got {b}")));
    }
    let (pairs, skipped) = hard_negatives(kg, test, seed);
    if pairs.is_empty() {
        return Err(Error::Argument("no test triple admits a hard negative".into()));
    }
    let to_prob: Box<dyn Fn(f64) -> f64> = match normalization {
        Normalization::Logistic => Box::new(sigmoid),
        Normalization::MinMax => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for t in &kg.train {
                let v = logit(model, t)?;
                if v.is_finite() {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            if !(hi > lo) {
                return Err(Error::Numerical("training scores have no spread for min-max".into()));
            }
            Box::new(move |v: f64| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
        }
    };
    let mut probs = Vec::with_capacity(2 * pairs.len());
    let mut labels = Vec::with_capacity(2 * pairs.len());
    for (p, n) in &pairs {
        for (t, y) in [(p, true), (n, false)] {
            let v = logit(model, t)?;
            if v.is_nan() {
                return Err(Error::Numerical(format!("NaN score for {t:?}")));
            }
            probs.push(to_prob(v));
            labels.push(y);
        }
    }
    let (ece, bins) = expected_calibration_error(&probs, &labels, b)?;
    Ok(CalibrationReport {
        ece,
        bins,
        normalization,
        scored: probs.len(),
        skipped,
    })
}
