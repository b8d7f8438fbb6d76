//! Ranking metrics, kernel triple distance and calibration.

mod calibration;
mod ktd;
mod ranking;


use std::fmt::Write as _;

pub use calibration::{
    calibration, expected_calibration_error, hard_negatives, CalibrationBin, CalibrationReport, Normalization,
};
pub use ktd::{embed_triples, ktd, mmd_unbiased, polynomial_kernel, KtdReport};
pub use ranking::{
    evaluate, fractional_rank, mrr_hits, rank_query, ranked_candidates, sem_at_k, Masked, QueryRanks, Ranker,
    RankingReport,
};

use crate::error::{Error, Result};

/// Kendall's tau-b between two equally long score lists.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Argument("score lists differ in length".into()));
    }
    let n = x.len();
    let (mut concordant, mut discordant, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let a = (x[i] - x[j]).partial_cmp(&0.0).map(|o| o as i64);
            let b = (y[i] - y[j]).partial_cmp(&0.0).map(|o| o as i64);
            let (Some(a), Some(b)) = (a, b) else {
                return Err(Error::Numerical("NaN in Kendall tau input".into()));
            };
            match (a, b) {
                (0, 0) => {}
                (0, _) => tx += 1,
                (_, 0) => ty += 1,
                _ if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n1 = (concordant + discordant + tx) as f64;
    let n2 = (concordant + discordant + ty) as f64;
    if n1 == 0.0 || n2 == 0.0 {
        // Both lists constant on every pair: identical orderings.
        return Ok(if n1 == n2 { 1.0 } else { 0.0 });
    }
    Ok((concordant - discordant) as f64 / (n1 * n2).sqrt())
}

impl RankingReport {
    /// `key = value` block.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "mrr = {}", self.mrr).unwrap();
        for (k, v) in &self.hits {
            writeln!(s, "hits@{k} = {v}").unwrap();
        }
        for (k, v) in &self.sem {
            writeln!(s, "sem@{k} = {v}").unwrap();
        }
        writeln!(s, "query_count = {}", self.query_count).unwrap();
        s
    }

    /// One header line and one value line, tab-separated.
    pub fn to_tsv(&self) -> String {
        let mut head = vec!["mrr".to_string()];
        let mut vals = vec![self.mrr.to_string()];
        for (k, v) in &self.hits {
            head.push(format!("hits@{k}"));
            vals.push(v.to_string());
        }
        for (k, v) in &self.sem {
            head.push(format!("sem@{k}"));
            vals.push(v.to_string());
        }
        head.push("query_count".into());
        vals.push(self.query_count.to_string());
        format!("{}\n{}\n", head.join("\t"), vals.join("\t"))
    }

    /// Per-triple ranks as TSV (`subject predicate object object_rank subject_rank`).
    pub fn ranks_tsv(&self) -> String {
        let mut s = String::from("subject\tpredicate\tobject\tobject_rank\tsubject_rank\n");
        for r in &self.ranks {
            let t = r.triple;
            writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}",
                t.subject, t.predicate, t.object, r.object_rank, r.subject_rank
            )
            .unwrap();
        }
        s
    }
}

impl KtdReport {
    pub fn to_kv(&self) -> String {
        format!(
            "mean = {}\nstd = {}\nbatch_size = {}\nrepeats = {}\n",
            self.mean, self.std, self.batch_size, self.repeats
        )
    }
}

impl CalibrationReport {
    pub fn to_kv(&self) -> String {
        let mut s = format!(
            "ece = {}\nnormalization = {}\nscored = {}\nskipped = {}\nbins = {}\n",
            self.ece,
            self.normalization,
            self.scored,
            self.skipped,
            self.bins.len()
        );
        for (j, b) in self.bins.iter().enumerate() {
            writeln!(
                s,
                "bin{j} = {} {} {}",
                b.mean_probability, b.empirical_frequency, b.count
            )
            .unwrap();
        }
        s
    }
}
