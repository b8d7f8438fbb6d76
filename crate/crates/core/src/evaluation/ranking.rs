//! Filtered link-prediction ranking and semantic consistency.

use crate::constraints::{ConstrainedModel, ConstraintCircuit};
use crate::error::{Error, Result};
use crate::kg_data::{FilterIndex, Triple};
use crate::models::{Model, Slot};

/// Anything that scores all completions of a query.
pub trait Ranker {
    fn num_entities(&self) -> usize;

    /// Scores of every entity along `target` (`Subject` or `Object`).
    /// Candidates that must never be predicted score `−∞`.
    fn candidate_scores(&self, target: Slot, context: &Triple) -> Result<Vec<f64>>;
}

impl Ranker for Model {
    fn num_entities(&self) -> usize {
        self.dims().entities
    }

    fn candidate_scores(&self, target: Slot, context: &Triple) -> Result<Vec<f64>> {
        Model::candidate_scores(self, target, context)
    }
}

/// A model whose constraint violators are ranked last.
#[derive(Clone, Copy)]
pub struct Masked<'a> {
    pub model: &'a Model,
    pub circuit: &'a ConstraintCircuit,
}

impl Ranker for Masked<'_> {
    fn num_entities(&self) -> usize {
        self.model.dims().entities
    }

    fn candidate_scores(&self, target: Slot, context: &Triple) -> Result<Vec<f64>> {
        let mut s = self.model.candidate_scores(target, context)?;
        for (u, v) in s.iter_mut().enumerate() {
            if !self.circuit.allows(target, context, u) {
                *v = f64::NEG_INFINITY;
            }
        }
        Ok(s)
    }
}

impl Ranker for ConstrainedModel {
    fn num_entities(&self) -> usize {
        self.base().dims().entities
    }

    fn candidate_scores(&self, target: Slot, context: &Triple) -> Result<Vec<f64>> {
        Masked {
            model: self.base(),
            circuit: self.circuit(),
        }
        .candidate_scores(target, context)
    }
}

/// `1 + #greater + #ties/2` over candidates not in `filtered` (the truth
/// itself is never filtered).
pub fn fractional_rank(scores: &[f64], truth: usize, filtered: &[usize]) -> f64 {
    let st = scores[truth];
    let mut greater = 0usize;
    let mut ties = 0usize;
    for (u, &v) in scores.iter().enumerate() {
        if u == truth {
            continue;
        }
        if v >= st {
            if filtered.binary_search(&u).is_ok() {
                continue;
            }
            if v > st {
                greater += 1;
            } else {
                ties += 1;
            }
        }
    }
    1.0 + greater as f64 + ties as f64 / 2.0
}

fn known<'f>(filter: &'f FilterIndex, target: Slot, t: &Triple) -> &'f [usize] {
    match target {
        Slot::Object => filter.objects(t.subject, t.predicate),
        Slot::Subject => filter.subjects(t.predicate, t.object),
        Slot::Predicate => &[],
    }
}

fn check_target(target: Slot) -> Result<()> {
    if target == Slot::Predicate {
        return Err(Error::Argument("ranking queries target subjects or objects".into()));
    }
    Ok(())
}

fn checked_scores<R: Ranker + ?Sized>(ranker: &R, target: Slot, t: &Triple) -> Result<Vec<f64>> {
    let scores = ranker.candidate_scores(target, t)?;
    if scores.iter().any(|v| v.is_nan()) {
        return Err(Error::Numerical(format!("NaN score while ranking {t:?}")));
    }
    Ok(scores)
}

/// Filtered fractional rank of `triple`'s true `target` completion.
pub fn rank_query<R: Ranker + ?Sized>(ranker: &R, target: Slot, triple: &Triple, filter: &FilterIndex) -> Result<f64> {
    check_target(target)?;
    let scores = checked_scores(ranker, target, triple)?;
    Ok(fractional_rank(
        &scores,
        target.of(triple),
        known(filter, target, triple),
    ))
}

/// Both ranks of one test triple.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueryRanks {
    pub triple: Triple,
    pub object_rank: f64,
    pub subject_rank: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankingReport {
    pub mrr: f64,
    pub hits: Vec<(usize, f64)>,
    pub sem: Vec<(usize, f64)>,
    /// Number of ranked queries (two per test triple).
    pub query_count: usize,
    pub ranks: Vec<QueryRanks>,
}

impl RankingReport {
    pub fn hits_at(&self, k: usize) -> Option<f64> {
        self.hits.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v)
    }

    pub fn sem_at(&self, k: usize) -> Option<f64> {
        self.sem.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v)
    }
}

fn check_ks(ks: &[usize]) -> Result<()> {
    if ks.contains(&0) {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    Ok(())
}

/// Filtered MRR and Hits@k averaged over both query directions.
pub fn mrr_hits<R: Ranker + ?Sized>(
    ranker: &R,
    test: &[Triple],
    filter: &FilterIndex,
    ks: &[usize],
) -> Result<RankingReport> {
    if test.is_empty() {
        return Err(Error::Argument("empty test set".into()));
    }
    check_ks(ks)?;
    let mut ranks = Vec::with_capacity(test.len());
    for t in test {
        ranks.push(QueryRanks {
            triple: *t,
            object_rank: rank_query(ranker, Slot::Object, t, filter)?,
            subject_rank: rank_query(ranker, Slot::Subject, t, filter)?,
        });
    }
    let q = 2.0 * test.len() as f64;
    let mrr = ranks
        .iter()
        .map(|r| 1.0 / r.object_rank + 1.0 / r.subject_rank)
        .sum::<f64>()
        / q;
    let hits = ks
        .iter()
        .map(|&k| {
            let kf = k as f64;
            let n = ranks
                .iter()
                .map(|r| (r.object_rank <= kf) as usize + (r.subject_rank <= kf) as usize)
                .sum::<usize>();
            (k, n as f64 / q)
        })
        .collect();
    Ok(RankingReport {
        mrr,
        hits,
        sem: Vec::new(),
        query_count: 2 * test.len(),
        ranks,
    })
}

/// Filtered candidates with finite scores, best first (ties by id).
pub fn ranked_candidates(scores: &[f64], truth: usize, filtered: &[usize]) -> Vec<usize> {
    let mut c: Vec<usize> = (0..scores.len())
        .filter(|&u| scores[u].is_finite() && (u == truth || filtered.binary_search(&u).is_err()))
        .collect();
    c.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    c
}

/// Average fraction of the top-k candidates (both directions) whose
/// completed triple satisfies `circuit`. A query with fewer than `k` finite
/// candidates is judged on the ones it has.
pub fn sem_at_k<R: Ranker + ?Sized>(
    ranker: &R,
    test: &[Triple],
    filter: &FilterIndex,
    circuit: &ConstraintCircuit,
    ks: &[usize],
) -> Result<Vec<(usize, f64)>> {
    if test.is_empty() {
        return Err(Error::Argument("empty test set".into()));
    }
    check_ks(ks)?;
    let mut sums = vec![0.0; ks.len()];
    for t in test {
        for target in [Slot::Object, Slot::Subject] {
            let scores = checked_scores(ranker, target, t)?;
            let list = ranked_candidates(&scores, target.of(t), known(filter, target, t));
            for (acc, &k) in sums.iter_mut().zip(ks) {
                let top = &list[..k.min(list.len())];
                if top.is_empty() {
                    continue;
                }
                let ok = top.iter().filter(|&&u| circuit.allows(target, t, u)).count();
                *acc += ok as f64 / top.len() as f64;
            }
        }
    }
    let q = 2.0 * test.len() as f64;
    Ok(ks.iter().zip(sums).map(|(&k, s)| (k, s / q)).collect())
}

/// MRR, Hits@k and (with a circuit) Sem@k in one pass over the rankings.
pub fn evaluate<R: Ranker + ?Sized>(
    ranker: &R,
    test: &[Triple],
    filter: &FilterIndex,
    ks: &[usize],
    circuit: Option<&ConstraintCircuit>,
) -> Result<RankingReport> {
    let mut report = mrr_hits(ranker, test, filter, ks)?;
    if let Some(c) = circuit {
        report.sem = sem_at_k(ranker, test, filter, c, ks)?;
    }
    Ok(report)
}
