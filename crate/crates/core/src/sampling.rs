//! Exact triple sampling from circuit models.
//!
//! Every sample `i` draws from its own ChaCha8 stream (`set_stream(i)` on a
//! generator seeded with the batch seed), so a batch is reproducible
//! independently of how samples are scheduled.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::ConstrainedModel;
use crate::error::{Error, Result};
use crate::kg_data::{Triple, Vocabulary};
use crate::models::circuit::Members;
use crate::models::view::View;
use crate::models::{Family, Model, ModelKind, Slot};
use crate::numeric::CompensatedSum;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SampleMethod {
    Ancestral,
    Autoregressive,
}

impl fmt::Display for SampleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleMethod::Ancestral => "ancestral",
            SampleMethod::Autoregressive => "autoregressive",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub triples: Vec<Triple>,
    pub seed: u64,
    pub method: SampleMethod,
}

/// Inverse-transform sampler over a finite support.
#[derive(Clone, Debug)]
pub struct Categorical {
    cdf: Vec<f64>,
}

impl Categorical {
    /// Builds the normalised cumulative sum of non-negative `weights`.
    pub fn new(weights: &[f64]) -> Result<Self> {
        let mut acc = CompensatedSum::default();
        let mut cdf = Vec::with_capacity(weights.len());
        let mut last = None;
        for (i, &w) in weights.iter().enumerate() {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Numerical(format!("invalid categorical weight {w} at {i}")));
            }
            acc.add(w);
            cdf.push(acc.value());
            if w > 0.0 {
                last = Some(i);
            }
        }
        let total = acc.value();
        let Some(last) = last else {
            return Err(Error::DegenerateContext("categorical with zero total mass".into()));
        };
        for c in &mut cdf {
            *c /= total;
        }
        cdf[last..].iter_mut().for_each(|c| *c = 1.0);
        Ok(Categorical { cdf })
    }

    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }

    /// Probability of outcome `i`.
    pub fn probability(&self, i: usize) -> f64 {
        self.cdf[i] - if i == 0 { 0.0 } else { self.cdf[i - 1] }
    }

    /// First index whose cumulative mass exceeds `u ∈ [0, 1)`.
    pub fn invert(&self, u: f64) -> usize {
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        self.invert(rng.random::<f64>())
    }
}

fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Branch of the latent mixture: weight and one column per slot.
struct Branch {
    columns: [usize; 3],
}

/// Samples by first drawing the latent branch of a monotone circuit.
pub fn ancestral_sample(model: &Model, n: usize, seed: u64) -> Result<SampleBatch> {
    if model.kind() != ModelKind::NonNegative {
        return Err(Error::Unsupported(format!(
            "ancestral sampling needs a monotone (nonneg) model, got {}",
            model.kind()
        )));
    }
    if model.family() == Family::Complex {
        return Err(Error::Unsupported(
            "ancestral sampling does not apply to complex: its circuit has negative weights".into(),
        ));
    }
    let view = model.view();
    let factors = [Slot::Subject, Slot::Predicate, Slot::Object].map(|s| view.factor(s));
    let sums: Vec<Vec<f64>> = factors.iter().map(|f| f.column_sums()).collect();
    let mut branches = Vec::new();
    let mut weights = Vec::new();
    let mut push = |cols: [usize; 3], extra: f64| {
        let w = extra * sums[0][cols[0]] * sums[1][cols[1]] * sums[2][cols[2]];
        if w > 0.0 {
            branches.push(Branch { columns: cols });
            weights.push(w);
        }
    };
    match &view {
        View::Diagonal { a, .. } => (0..a.cols()).for_each(|i| push([i, i, i], 1.0)),
        View::Bilinear { p, .. } => {
            for i in 0..*p {
                for j in 0..*p {
                    push([i, i * p + j, j], 1.0);
                }
            }
        }
        View::Tucker { slices, .. } => {
            for (j, t) in slices.iter().enumerate() {
                for i in 0..t.rows() {
                    for k in 0..t.cols() {
                        push([i, j, k], t.get(i, k));
                    }
                }
            }
        }
    }
    let mixture =
        Categorical::new(&weights).map_err(|_| Error::DegenerateModel("partition function is zero".into()))?;
    let mut columns: [HashMap<usize, Categorical>; 3] = Default::default();
    for b in &branches {
        for (s, &c) in b.columns.iter().enumerate() {
            if !columns[s].contains_key(&c) {
                let col: Vec<f64> = (0..factors[s].rows()).map(|u| factors[s].get(u, c)).collect();
                columns[s].insert(c, Categorical::new(&col)?);
            }
        }
    }
    let triples = (0..n as u64)
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let b = &branches[mixture.sample(&mut rng)];
            let v = [0, 1, 2].map(|s| columns[s][&b.columns[s]].sample(&mut rng));
            Triple::new(v[0], v[1], v[2])
        })
        .collect();
    Ok(SampleBatch {
        triples,
        seed,
        method: SampleMethod::Ancestral,
    })
}

/// Exact marginals needed for `S → R → O` sampling.
pub trait TripleDistribution {
    fn num_entities(&self) -> usize;
    fn num_predicates(&self) -> usize;
    /// Unnormalised `p(S = s)`.
    fn subject_masses(&self) -> Result<Vec<f64>>;
    /// Unnormalised `p(R = r | S = s)`.
    fn predicate_masses(&self, subject: usize) -> Result<Vec<f64>>;
    /// Unnormalised `p(O = o | S = s, R = r)`.
    fn object_masses(&self, subject: usize, predicate: usize) -> Result<Vec<f64>>;
}

fn require_circuit(model: &Model) -> Result<()> {
    if !model.kind().is_circuit() {
        return Err(Error::Unsupported(
            "sampling needs a non-negative or squared model".into(),
        ));
    }
    Ok(())
}

impl TripleDistribution for Model {
    fn num_entities(&self) -> usize {
        self.dims().entities
    }

    fn num_predicates(&self) -> usize {
        self.dims().relations
    }

    fn subject_masses(&self) -> Result<Vec<f64>> {
        require_circuit(self)?;
        Ok(self.masses_over(Slot::Subject, [Members::All; 3], Members::All))
    }

    fn predicate_masses(&self, subject: usize) -> Result<Vec<f64>> {
        let one = [subject];
        Ok(self.masses_over(
            Slot::Predicate,
            [Members::Some(&one), Members::All, Members::All],
            Members::All,
        ))
    }

    fn object_masses(&self, subject: usize, predicate: usize) -> Result<Vec<f64>> {
        Ok(self.context_masses(Slot::Object, &Triple::new(subject, predicate, 0)))
    }
}

impl TripleDistribution for ConstrainedModel {
    fn num_entities(&self) -> usize {
        self.base().dims().entities
    }

    fn num_predicates(&self) -> usize {
        self.base().dims().relations
    }

    fn subject_masses(&self) -> Result<Vec<f64>> {
        Ok(ConstrainedModel::subject_masses(self))
    }

    fn predicate_masses(&self, subject: usize) -> Result<Vec<f64>> {
        Ok(ConstrainedModel::predicate_masses(self, subject))
    }

    fn object_masses(&self, subject: usize, predicate: usize) -> Result<Vec<f64>> {
        Ok(self.context_masses(Slot::Object, &Triple::new(subject, predicate, 0)))
    }
}

/// Upper bound on cached conditional entries (floats) during one batch.
const CACHE_LIMIT: usize = 1 << 24;

/// Samples `s ∼ p(S)`, then `r ∼ p(R | s)`, then `o ∼ p(O | s, r)`.
pub fn autoregressive_sample<D: TripleDistribution + ?Sized>(dist: &D, n: usize, seed: u64) -> Result<SampleBatch> {
    let ps = Categorical::new(&dist.subject_masses()?)
        .map_err(|_| Error::DegenerateModel("partition function is zero".into()))?;
    let (ne, nr) = (dist.num_entities(), dist.num_predicates());
    let mut pr: HashMap<usize, Categorical> = HashMap::new();
    let mut po: HashMap<(usize, usize), Categorical> = HashMap::new();
    let mut cached = 0usize;
    let conditional = |m: Vec<f64>, what: String| {
        Categorical::new(&m).map_err(|e| match e {
            Error::DegenerateContext(_) => {
                Error::Numerical(format!("{what} has zero mass although its marginal is positive"))
            }
            e => e,
        })
    };
    let mut triples = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let mut rng = stream_rng(seed, i);
        let s = ps.sample(&mut rng);
        let r_dist = if let Some(c) = pr.get(&s) {
            c.clone()
        } else {
            let c = conditional(dist.predicate_masses(s)?, format!("subject {s}"))?;
            if cached + nr <= CACHE_LIMIT {
                cached += nr;
                pr.insert(s, c.clone());
            }
            c
        };
        let r = r_dist.sample(&mut rng);
        let o = if let Some(c) = po.get(&(s, r)) {
            c.sample(&mut rng)
        } else {
            let c = conditional(dist.object_masses(s, r)?, format!("context ({s}, {r})"))?;
            let o = c.sample(&mut rng);
            if cached + ne <= CACHE_LIMIT {
                cached += ne;
                po.insert((s, r), c);
            }
            o
        };
        triples.push(Triple::new(s, r, o));
    }
    Ok(SampleBatch {
        triples,
        seed,
        method: SampleMethod::Autoregressive,
    })
}

/// Writes samples as named TSV triples after one `#` header line.
pub fn write_samples<W: Write>(
    mut w: W,
    batch: &SampleBatch,
    vocab: &Vocabulary,
    model_hash: &str,
) -> std::io::Result<()> {
    writeln!(
        w,
        "# model={model_hash} method={} seed={} n={}",
        batch.method,
        batch.seed,
        batch.triples.len()
    )?;
    crate::kg_data::write_triples(w, &batch.triples, vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Dims;

    fn empirical(triples: &[Triple], e: usize, r: usize) -> Vec<f64> {
        let mut c = vec![0.0; e * e * r];
        for t in triples {
            c[(t.subject * r + t.predicate) * e + t.object] += 1.0;
        }
        let n = triples.len() as f64;
        c.iter_mut().for_each(|v| *v /= n);
        c
    }

    fn exact(model: &Model) -> Vec<f64> {
        let d = model.dims();
        let z = model.brute_force_partition().unwrap();
        let mut p = Vec::new();
        for s in 0..d.entities {
            for r in 0..d.relations {
                for o in 0..d.entities {
                    p.push(model.score(&Triple::new(s, r, o)).unwrap() / z);
                }
            }
        }
        p
    }

    fn tv(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0
    }

    #[test]
    fn categorical_ends_at_one_and_skips_zeros() {
        let c = Categorical::new(&[0.0, 1.0, 3.0, 0.0]).unwrap();
        assert_eq!(c.invert(0.0), 1);
        assert_eq!(c.invert(0.2499), 1);
        assert_eq!(c.invert(0.25), 2);
        assert_eq!(c.invert(0.999_999_999), 2);
        assert!((c.probability(2) - 0.75).abs() < 1e-15);
        assert!(Categorical::new(&[0.0, 0.0]).is_err());
        assert!(Categorical::new(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn single_branch_subject_marginal() {
        // U = [1, 3] at rank 1: p(s) = [0.25, 0.75]
        let dims = Dims::new(2, 1, 1);
        let p = vec![
            crate::numeric::DenseMatrix::from_vec(2, 1, vec![0.0, 3f64.ln()]).unwrap(),
            crate::numeric::DenseMatrix::from_vec(1, 1, vec![0.0]).unwrap(),
            crate::numeric::DenseMatrix::from_vec(2, 1, vec![0.0, 0.0]).unwrap(),
        ];
        let m = Model::new(Family::Cp, ModelKind::NonNegative, dims, p).unwrap();
        let b = ancestral_sample(&m, 40_000, 3).unwrap();
        let f = b.triples.iter().filter(|t| t.subject == 1).count() as f64 / 40_000.0;
        assert!((f - 0.75).abs() < 0.01, "{f}");
        let sm = m.subject_masses().unwrap();
        assert!((sm[1] / (sm[0] + sm[1]) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn samplers_are_exact_on_small_models() {
        for family in [Family::Cp, Family::Rescal, Family::Tucker] {
            let dims = if family == Family::Tucker {
                Dims::tucker(3, 2, 2, 2)
            } else {
                Dims::new(3, 2, 2)
            };
            let m = Model::random_uniform(family, ModelKind::NonNegative, dims, 5, -1.0, 1.0).unwrap();
            let p = exact(&m);
            let a = ancestral_sample(&m, 100_000, 1).unwrap();
            let b = autoregressive_sample(&m, 100_000, 2).unwrap();
            assert!(tv(&empirical(&a.triples, 3, 2), &p) < 0.02, "{family}");
            assert!(tv(&empirical(&b.triples, 3, 2), &p) < 0.02, "{family}");
        }
        let m = Model::random_uniform(Family::Complex, ModelKind::Squared, Dims::new(3, 2, 2), 9, -1.0, 1.0).unwrap();
        let b = autoregressive_sample(&m, 100_000, 4).unwrap();
        assert!(tv(&empirical(&b.triples, 3, 2), &exact(&m)) < 0.02);
    }

    #[test]
    fn uniform_model_samples_uniformly() {
        let m = Model::constant(Family::Cp, ModelKind::Squared, Dims::new(3, 2, 2), 1.0).unwrap();
        let b = autoregressive_sample(&m, 90_000, 0).unwrap();
        let emp = empirical(&b.triples, 3, 2);
        assert!(emp.iter().all(|p| (p - 1.0 / 18.0).abs() < 0.01));
    }

    #[test]
    fn determinism_and_guards() {
        let m = Model::random_uniform(Family::Cp, ModelKind::NonNegative, Dims::new(4, 2, 2), 1, -1.0, 1.0).unwrap();
        assert_eq!(
            ancestral_sample(&m, 100, 7).unwrap(),
            ancestral_sample(&m, 100, 7).unwrap()
        );
        assert_eq!(
            autoregressive_sample(&m, 100, 7).unwrap(),
            autoregressive_sample(&m, 100, 7).unwrap()
        );
        let sq = m.with_kind(ModelKind::Squared).unwrap();
        assert!(matches!(ancestral_sample(&sq, 1, 0), Err(Error::Unsupported(_))));
        let cx = Model::random_uniform(
            Family::Complex,
            ModelKind::NonNegative,
            Dims::new(4, 2, 2),
            1,
            -1.0,
            1.0,
        )
        .unwrap();
        assert!(matches!(ancestral_sample(&cx, 1, 0), Err(Error::Unsupported(_))));
        let ebm = m.with_kind(ModelKind::EnergyBased).unwrap();
        assert!(matches!(autoregressive_sample(&ebm, 1, 0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn header_line_and_round_trip() {
        let m = Model::constant(Family::Cp, ModelKind::NonNegative, Dims::new(2, 1, 1), 1.0).unwrap();
        let b = ancestral_sample(&m, 5, 1).unwrap();
        let vocab = Vocabulary::from_names(vec!["a".into(), "b".into()], vec!["r".into()]).unwrap();
        let mut buf = Vec::new();
        write_samples(&mut buf, &b, &vocab, "abc").unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# model=abc method=ancestral seed=1 n=5\n"));
        let mut v = vocab.clone();
        let back =
            crate::kg_data::parse_triples(text.as_bytes(), "s", &mut v, crate::kg_data::VocabMode::Frozen).unwrap();
        assert_eq!(back, b.triples);
    }
}
