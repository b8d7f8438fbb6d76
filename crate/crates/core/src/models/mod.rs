//! Score functions of CP, ComplEx, RESCAL and TuckER and their circuit
//! variants.
//!
//! A [`Model`] pairs a family with a [`ModelKind`]:
//!
//! * `EnergyBased`: the plain multilinear score, any sign.
//! * `NonNegative`: the same score over parameters stored as logarithms
//!   (ComplEx additionally bounds imaginary parts by real parts through a
//!   sigmoid), so every score is `≥ 0`.
//! * `Squared`: the plain score squared.
//!
//! The last two are unnormalised distributions over triples whose partition
//! function, marginals and conditionals are computed in closed form.

mod checkpoint;
pub(crate) mod circuit;
mod size;
pub(crate) mod view;

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::kg_data::Triple;
use crate::numeric::{dot, sigmoid, CompensatedSum, DenseMatrix};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointInfo};
pub use size::circuit_size;

use circuit::{Members, Stat};
use view::{View, ViewGrad};

/// Largest `|E|²·|R|` accepted by [`Model::brute_force_partition`].
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Cp,
    Complex,
    Rescal,
    Tucker,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Cp, Family::Complex, Family::Rescal, Family::Tucker];

    pub fn name(self) -> &'static str {
        match self {
            Family::Cp => "cp",
            Family::Complex => "complex",
            Family::Rescal => "rescal",
            Family::Tucker => "tucker",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Family::Cp => 0,
            Family::Complex => 1,
            Family::Rescal => 2,
            Family::Tucker => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Family::ALL.into_iter().find(|f| f.tag() == tag)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Argument(format!("unknown model family {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    EnergyBased,
    NonNegative,
    Squared,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::EnergyBased, ModelKind::NonNegative, ModelKind::Squared];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::EnergyBased => "ebm",
            ModelKind::NonNegative => "nonneg",
            ModelKind::Squared => "squared",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            ModelKind::EnergyBased => 0,
            ModelKind::NonNegative => 1,
            ModelKind::Squared => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        ModelKind::ALL.into_iter().find(|k| k.tag() == tag)
    }

    /// True for the kinds that define a distribution.
    pub fn is_circuit(self) -> bool {
        self != ModelKind::EnergyBased
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Argument(format!("unknown model kind {s:?}")))
    }
}

/// One of the three positions of a triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    Subject,
    Predicate,
    Object,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Subject, Slot::Predicate, Slot::Object];

    pub fn index(self) -> usize {
        match self {
            Slot::Subject => 0,
            Slot::Predicate => 1,
            Slot::Object => 2,
        }
    }

    pub fn of(self, t: &Triple) -> usize {
        match self {
            Slot::Subject => t.subject,
            Slot::Predicate => t.predicate,
            Slot::Object => t.object,
        }
    }

    /// Copy of `t` with this slot replaced.
    pub fn with(self, t: &Triple, value: usize) -> Triple {
        let mut out = *t;
        match self {
            Slot::Subject => out.subject = value,
            Slot::Predicate => out.predicate = value,
            Slot::Object => out.object = value,
        }
        out
    }
}

/// Vocabulary sizes and embedding ranks.
///
/// `rank` is `d` (or `d_e` for TuckER); `relation_rank` is `d_r` for TuckER
/// and equals `rank` elsewhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub entities: usize,
    pub relations: usize,
    pub rank: usize,
    pub relation_rank: usize,
}

impl Dims {
    pub fn new(entities: usize, relations: usize, rank: usize) -> Self {
        Dims {
            entities,
            relations,
            rank,
            relation_rank: rank,
        }
    }

    pub fn tucker(entities: usize, relations: usize, entity_rank: usize, relation_rank: usize) -> Self {
        Dims {
            entities,
            relations,
            rank: entity_rank,
            relation_rank,
        }
    }

    pub fn size_of(&self, slot: Slot) -> usize {
        match slot {
            Slot::Predicate => self.relations,
            _ => self.entities,
        }
    }
}

/// Names and shapes of a family's parameter tensors, in storage order.
pub fn param_shapes(family: Family, kind: ModelKind, dims: &Dims) -> Vec<(&'static str, usize, usize)> {
    let (e, r, d) = (dims.entities, dims.relations, dims.rank);
    match family {
        Family::Cp => vec![("U", e, d), ("W", r, d), ("V", e, d)],
        Family::Complex if kind == ModelKind::NonNegative => {
            vec![("E_re", e, d), ("theta", e, d), ("W_re", r, d), ("gamma", r, d)]
        }
        Family::Complex => vec![("E_re", e, d), ("E_im", e, d), ("W_re", r, d), ("W_im", r, d)],
        Family::Rescal => vec![("E", e, d), ("W", r, d * d)],
        Family::Tucker => vec![
            ("E", e, d),
            ("W", r, dims.relation_rank),
            ("T", d, dims.relation_rank * d),
        ],
    }
}

/// Wildcard pattern for [`Model::marginal`]; `None` sums over the slot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Pattern {
    pub subject: Option<usize>,
    pub predicate: Option<usize>,
    pub object: Option<usize>,
}

impl Pattern {
    pub fn new(subject: Option<usize>, predicate: Option<usize>, object: Option<usize>) -> Self {
        Pattern {
            subject,
            predicate,
            object,
        }
    }

    pub fn get(&self, slot: Slot) -> Option<usize> {
        match slot {
            Slot::Subject => self.subject,
            Slot::Predicate => self.predicate,
            Slot::Object => self.object,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    family: Family,
    kind: ModelKind,
    dims: Dims,
    params: Vec<DenseMatrix>,
    reciprocal: bool,
    version: u64,
    view: OnceLock<View<'static>>,
    slices: OnceLock<Vec<DenseMatrix>>,
    stats: OnceLock<[Stat; 3]>,
    normalizer: OnceLock<f64>,
}

impl Model {
    pub fn new(family: Family, kind: ModelKind, dims: Dims, params: Vec<DenseMatrix>) -> Result<Self> {
        let shapes = param_shapes(family, kind, &dims);
        if params.len() != shapes.len() {
            return Err(Error::Argument(format!(
                "{family} expects {} parameter tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for ((name, r, c), p) in shapes.iter().zip(&params) {
            if (p.rows(), p.cols()) != (*r, *c) {
                return Err(Error::Argument(format!(
                    "{family} tensor {name} must be {r}x{c}, got {}x{}",
                    p.rows(),
                    p.cols()
                )));
            }
        }
        if dims.rank == 0 || dims.relation_rank == 0 {
            return Err(Error::Argument("embedding rank must be positive".into()));
        }
        if kind == ModelKind::NonNegative && params.iter().any(|p| p.has_non_finite()) {
            return Err(Error::Argument(
                "non-negative models store finite log-parameters".into(),
            ));
        }
        Ok(Model {
            family,
            kind,
            dims,
            params,
            reciprocal: false,
            version: 0,
            view: OnceLock::new(),
            slices: OnceLock::new(),
            stats: OnceLock::new(),
            normalizer: OnceLock::new(),
        })
    }

    /// Model whose linear-space entries all equal `value` (> 0 for the
    /// non-negative kind). ComplEx imaginary parts are set to zero, except for
    /// the non-negative kind where they follow from `θ = γ = 0`.
    pub fn constant(family: Family, kind: ModelKind, dims: Dims, value: f64) -> Result<Self> {
        let shapes = param_shapes(family, kind, &dims);
        let params = shapes
            .iter()
            .enumerate()
            .map(|(i, (_, r, c))| {
                let v = match (family, kind) {
                    (Family::Complex, ModelKind::NonNegative) if i % 2 == 1 => 0.0,
                    (_, ModelKind::NonNegative) => value.ln(),
                    (Family::Complex, _) if i % 2 == 1 => 0.0,
                    _ => value,
                };
                DenseMatrix::filled(*r, *c, v)
            })
            .collect();
        Model::new(family, kind, dims, params)
    }

    /// Stored parameters drawn uniformly from `[low, high)`; intended for
    /// tests and oracles.
    pub fn random_uniform(family: Family, kind: ModelKind, dims: Dims, seed: u64, low: f64, high: f64) -> Result<Self> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let params = param_shapes(family, kind, &dims)
            .iter()
            .map(|(_, r, c)| DenseMatrix::from_fn(*r, *c, |_, _| rng.random_range(low..high)))
            .collect();
        Model::new(family, kind, dims, params)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn params(&self) -> &[DenseMatrix] {
        &self.params
    }

    /// Mutable access to the stored parameters; invalidates every cache.
    pub fn params_mut(&mut self) -> &mut [DenseMatrix] {
        self.invalidate();
        &mut self.params
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn reciprocal(&self) -> bool {
        self.reciprocal
    }

    pub fn set_reciprocal(&mut self, reciprocal: bool) {
        self.reciprocal = reciprocal;
    }

    /// Same parameters reinterpreted under another kind.
    ///
    /// Only meaningful between kinds that share a parameterization
    /// (energy-based and squared).
    pub fn with_kind(&self, kind: ModelKind) -> Result<Model> {
        let mut m = Model::new(self.family, kind, self.dims, self.params.clone())?;
        m.reciprocal = self.reciprocal;
        Ok(m)
    }

    fn invalidate(&mut self) {
        self.version += 1;
        self.view = OnceLock::new();
        self.slices = OnceLock::new();
        self.stats = OnceLock::new();
        self.normalizer = OnceLock::new();
    }

    pub(crate) fn squared(&self) -> bool {
        self.kind == ModelKind::Squared
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.data().len()).sum()
    }

    pub fn parameter_norm(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.data().iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    fn needs_decoded_view(&self) -> bool {
        self.kind == ModelKind::NonNegative || self.family == Family::Complex
    }

    pub(crate) fn view(&self) -> View<'_> {
        if self.needs_decoded_view() {
            return self.view.get_or_init(|| self.decode_view()).borrowed();
        }
        let p = &self.params;
        match self.family {
            Family::Cp => View::Diagonal {
                a: Cow::Borrowed(&p[0]),
                b: Cow::Borrowed(&p[1]),
                c: Cow::Borrowed(&p[2]),
            },
            Family::Rescal => View::Bilinear {
                e: Cow::Borrowed(&p[0]),
                m: Cow::Borrowed(&p[1]),
                p: self.dims.rank,
            },
            Family::Tucker => {
                let slices = self
                    .slices
                    .get_or_init(|| view::core_slices(&p[2], self.dims.rank, self.dims.relation_rank));
                View::Tucker {
                    e: Cow::Borrowed(&p[0]),
                    w: Cow::Borrowed(&p[1]),
                    slices: Cow::Borrowed(slices.as_slice()),
                }
            }
            Family::Complex => unreachable!("ComplEx always uses a decoded view"),
        }
    }

    /// Linear-space parameter tensors (exp of log-parameters for the
    /// non-negative kind; ComplEx⁺ imaginary parts derived from θ, γ).
    pub fn linear_params(&self) -> Vec<DenseMatrix> {
        if self.kind != ModelKind::NonNegative {
            return self.params.clone();
        }
        match self.family {
            Family::Complex => {
                let er = self.params[0].map(f64::exp);
                let wr = self.params[2].map(f64::exp);
                let ei = bounded(&er, &self.params[1]);
                let wi = bounded(&wr, &self.params[3]);
                vec![er, ei, wr, wi]
            }
            _ => self.params.iter().map(|p| p.map(f64::exp)).collect(),
        }
    }

    fn decode_view(&self) -> View<'static> {
        let lin = self.linear_params();
        let d = self.dims.rank;
        match self.family {
            Family::Cp => {
                let mut it = lin.into_iter();
                View::Diagonal {
                    a: Cow::Owned(it.next().unwrap()),
                    b: Cow::Owned(it.next().unwrap()),
                    c: Cow::Owned(it.next().unwrap()),
                }
            }
            Family::Complex => {
                let (er, ei, wr, wi) = (&lin[0], &lin[1], &lin[2], &lin[3]);
                let neg_wi = wi.map(|x| -x);
                View::Diagonal {
                    a: Cow::Owned(hconcat(&[er, ei, er, ei])),
                    b: Cow::Owned(hconcat(&[wr, wr, wi, &neg_wi])),
                    c: Cow::Owned(hconcat(&[er, ei, ei, er])),
                }
            }
            Family::Rescal => {
                let mut it = lin.into_iter();
                View::Bilinear {
                    e: Cow::Owned(it.next().unwrap()),
                    m: Cow::Owned(it.next().unwrap()),
                    p: d,
                }
            }
            Family::Tucker => {
                let slices = view::core_slices(&lin[2], d, self.dims.relation_rank);
                let mut it = lin.into_iter();
                View::Tucker {
                    e: Cow::Owned(it.next().unwrap()),
                    w: Cow::Owned(it.next().unwrap()),
                    slices: Cow::Owned(slices),
                }
            }
        }
    }

    /// Maps a gradient over view factors to a gradient over stored parameters.
    pub(crate) fn fold_grad(&self, g: ViewGrad) -> Vec<DenseMatrix> {
        let nonneg = self.kind == ModelKind::NonNegative;
        let ViewGrad { slot, core } = g;
        let [gs, gr, go] = slot;
        match self.family {
            Family::Cp => {
                let mut out = vec![gs, gr, go];
                if nonneg {
                    let v = self.view();
                    for (o, s) in out.iter_mut().zip(Slot::ALL) {
                        mul_assign(o, v.factor(s));
                    }
                }
                out
            }
            Family::Rescal | Family::Tucker => {
                let mut de = gs;
                de.add_assign(&go);
                let mut out = vec![de, gr];
                if self.family == Family::Tucker {
                    out.push(view::pack_core(&core, self.dims.rank, self.dims.relation_rank));
                }
                if nonneg {
                    for (o, p) in out.iter_mut().zip(&self.params) {
                        let lin = p.map(f64::exp);
                        mul_assign(o, &lin);
                    }
                }
                out
            }
            Family::Complex => {
                let d = self.dims.rank;
                let blk = |m: &DenseMatrix, b: usize| column_block(m, b * d, d);
                let mut d_er = blk(&gs, 0);
                d_er.add_assign(&blk(&gs, 2));
                d_er.add_assign(&blk(&go, 0));
                d_er.add_assign(&blk(&go, 3));
                let mut d_ei = blk(&gs, 1);
                d_ei.add_assign(&blk(&gs, 3));
                d_ei.add_assign(&blk(&go, 1));
                d_ei.add_assign(&blk(&go, 2));
                let mut d_wr = blk(&gr, 0);
                d_wr.add_assign(&blk(&gr, 1));
                let mut d_wi = blk(&gr, 2);
                d_wi.axpy(-1.0, &blk(&gr, 3));
                if !nonneg {
                    return vec![d_er, d_ei, d_wr, d_wi];
                }
                let (dx, dth) = bounded_backward(&self.params[0], &self.params[1], &d_er, &d_ei);
                let (dy, dga) = bounded_backward(&self.params[2], &self.params[3], &d_wr, &d_wi);
                vec![dx, dth, dy, dga]
            }
        }
    }

    pub fn check_triple(&self, t: &Triple) -> Result<()> {
        let (e, r) = (self.dims.entities, self.dims.relations);
        if t.subject >= e || t.object >= e || t.predicate >= r {
            return Err(Error::Index(format!(
                "triple ({}, {}, {}) outside |E|={e}, |R|={r}",
                t.subject, t.predicate, t.object
            )));
        }
        Ok(())
    }

    fn require_circuit(&self, op: &str) -> Result<()> {
        if !self.kind.is_circuit() {
            return Err(Error::Unsupported(format!(
                "{op} requires a non-negative or squared model; energy-based scores have no tractable normaliser"
            )));
        }
        Ok(())
    }

    #[inline]
    fn transform(&self, raw: f64) -> f64 {
        if self.squared() {
            raw * raw
        } else {
            raw
        }
    }

    /// Multilinear score before squaring.
    pub fn raw_score(&self, t: &Triple) -> Result<f64> {
        self.check_triple(t)?;
        Ok(self.view().raw(t))
    }

    pub fn score(&self, t: &Triple) -> Result<f64> {
        Ok(self.transform(self.raw_score(t)?))
    }

    /// Scores of every completion of `context` along `target`.
    pub fn candidate_scores(&self, target: Slot, context: &Triple) -> Result<Vec<f64>> {
        self.check_triple(&target.with(context, 0))?;
        let view = self.view();
        let x = view.query(target, context);
        let f = view.factor(target);
        Ok((0..f.rows()).map(|u| self.transform(dot(f.row(u), &x))).collect())
    }

    pub(crate) fn full_stats(&self) -> &[Stat; 3] {
        self.stats.get_or_init(|| {
            let view = self.view();
            let sq = self.squared();
            Slot::ALL.map(|s| circuit::slot_stat(&view, s, Members::All, sq))
        })
    }

    /// Exact `Z = Σ_{s,r,o} φ(s, r, o)`.
    pub fn partition_function(&self) -> Result<f64> {
        self.require_circuit("partition_function")?;
        Ok(*self.normalizer.get_or_init(|| {
            let st = self.full_stats();
            circuit::contract(&self.view(), self.squared(), [&st[0], &st[1], &st[2]])
        }))
    }

    /// `Z` by enumerating every triple; any kind.
    pub fn brute_force_partition(&self) -> Result<f64> {
        let (e, r) = (self.dims.entities as u128, self.dims.relations as u128);
        if e * e * r > BRUTE_FORCE_LIMIT {
            return Err(Error::Refused(format!(
                "brute-force enumeration of {} triples exceeds the limit of {BRUTE_FORCE_LIMIT}",
                e * e * r
            )));
        }
        let view = self.view();
        let c = view.factor(Slot::Object);
        let mut total = CompensatedSum::default();
        for s in 0..self.dims.entities {
            for p in 0..self.dims.relations {
                let x = view.query(Slot::Object, &Triple::new(s, p, 0));
                for o in 0..self.dims.entities {
                    total.add(self.transform(dot(c.row(o), &x)));
                }
            }
        }
        Ok(total.value())
    }

    /// Sum of `φ` over every completion of the wildcards in `pattern`.
    pub fn marginal(&self, pattern: Pattern) -> Result<f64> {
        self.require_circuit("marginal")?;
        if pattern.subject.is_some() && pattern.predicate.is_some() && pattern.object.is_some() {
            return Err(Error::Argument(
                "marginal needs at least one wildcard; use score for a full triple".into(),
            ));
        }
        let probe = Triple::new(
            pattern.subject.unwrap_or(0),
            pattern.predicate.unwrap_or(0),
            pattern.object.unwrap_or(0),
        );
        self.check_triple(&probe)?;
        let ids: Vec<Option<[usize; 1]>> = Slot::ALL.iter().map(|s| pattern.get(*s).map(|v| [v])).collect();
        let members: Vec<Members<'_>> = ids
            .iter()
            .map(|i| match i {
                Some(one) => Members::Some(one),
                None => Members::All,
            })
            .collect();
        Ok(self.contract_members([members[0], members[1], members[2]]))
    }

    /// Closed-form sum over the product of member sets.
    pub(crate) fn contract_members(&self, members: [Members<'_>; 3]) -> f64 {
        let view = self.view();
        let sq = self.squared();
        let full = self.full_stats();
        let owned: Vec<Option<Stat>> = Slot::ALL
            .iter()
            .zip(members)
            .map(|(s, m)| match m {
                Members::All => None,
                m => Some(circuit::slot_stat(&view, *s, m, sq)),
            })
            .collect();
        let st: Vec<&Stat> = (0..3).map(|i| owned[i].as_ref().unwrap_or(&full[i])).collect();
        circuit::contract(&view, sq, [st[0], st[1], st[2]])
    }

    /// Unnormalised masses of every row of `target`, with the two other slots
    /// summed over the member sets (`stats[target]` ignored).
    pub(crate) fn masses_over(&self, target: Slot, members: [Members<'_>; 3], rows: Members<'_>) -> Vec<f64> {
        let view = self.view();
        let sq = self.squared();
        let full = self.full_stats();
        let owned: Vec<Option<Stat>> = Slot::ALL
            .iter()
            .zip(members)
            .map(|(s, m)| match (m, *s == target) {
                (_, true) | (Members::All, _) => None,
                (m, false) => Some(circuit::slot_stat(&view, *s, m, sq)),
            })
            .collect();
        let st: Vec<&Stat> = (0..3).map(|i| owned[i].as_ref().unwrap_or(&full[i])).collect();
        circuit::target_masses(&view, sq, target, [st[0], st[1], st[2]], rows)
    }

    /// Unnormalised masses along `target` with the other two slots fixed.
    pub(crate) fn context_masses(&self, target: Slot, context: &Triple) -> Vec<f64> {
        let view = self.view();
        let x = view.query(target, context);
        let f = view.factor(target);
        (0..f.rows()).map(|u| self.transform(dot(f.row(u), &x))).collect()
    }

    /// `p(target | other two slots of context)`.
    pub fn conditional_distribution(&self, target: Slot, context: &Triple) -> Result<Vec<f64>> {
        self.require_circuit("conditional_distribution")?;
        self.check_triple(&target.with(context, 0))?;
        normalize(self.context_masses(target, context), || {
            format!("context {context:?} has zero mass along {target:?}")
        })
    }

    /// `log φ(t) − log Z`; `−∞` for exactly zero scores.
    pub fn log_prob(&self, t: &Triple) -> Result<f64> {
        self.require_circuit("log_prob")?;
        let z = self.partition_function()?;
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::DegenerateModel(format!("partition function is {z}")));
        }
        let s = self.score(t)?;
        if s == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(s.ln() - z.ln())
    }

    /// Fraction of `triples` with a non-negative energy-based score.
    pub fn nonneg_score_fraction(&self, triples: &[Triple]) -> Result<f64> {
        if self.kind != ModelKind::EnergyBased {
            return Err(Error::Unsupported(
                "nonneg_score_fraction is defined for energy-based models".into(),
            ));
        }
        if triples.is_empty() {
            return Err(Error::Argument("empty triple list".into()));
        }
        let mut count = 0usize;
        for t in triples {
            if self.raw_score(t)? >= 0.0 {
                count += 1;
            }
        }
        Ok(count as f64 / triples.len() as f64)
    }
}

/// Normalises non-negative masses, failing on zero or non-finite totals.
pub(crate) fn normalize(mut masses: Vec<f64>, describe: impl FnOnce() -> String) -> Result<Vec<f64>> {
    let mut acc = CompensatedSum::default();
    for &m in &masses {
        acc.add(m);
    }
    let total = acc.value();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateContext(describe()));
    }
    for m in &mut masses {
        *m /= total;
    }
    Ok(masses)
}

/// `re · σ(logit)` elementwise.
fn bounded(re: &DenseMatrix, logit: &DenseMatrix) -> DenseMatrix {
    let data = re
        .data()
        .iter()
        .zip(logit.data())
        .map(|(r, l)| r * sigmoid(*l))
        .collect();
    DenseMatrix::from_vec(re.rows(), re.cols(), data).expect("same shape")
}

/// Chain rule through `re = exp(x)`, `im = re · σ(θ)`.
fn bounded_backward(
    x: &DenseMatrix,
    theta: &DenseMatrix,
    d_re: &DenseMatrix,
    d_im: &DenseMatrix,
) -> (DenseMatrix, DenseMatrix) {
    let n = x.data().len();
    let mut dx = vec![0.0; n];
    let mut dth = vec![0.0; n];
    for i in 0..n {
        let re = x.data()[i].exp();
        let s = sigmoid(theta.data()[i]);
        dx[i] = (d_re.data()[i] + d_im.data()[i] * s) * re;
        dth[i] = d_im.data()[i] * re * s * (1.0 - s);
    }
    (
        DenseMatrix::from_vec(x.rows(), x.cols(), dx).expect("shape"),
        DenseMatrix::from_vec(x.rows(), x.cols(), dth).expect("shape"),
    )
}

fn mul_assign(a: &mut DenseMatrix, b: &DenseMatrix) {
    for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
        *x *= y;
    }
}

fn hconcat(parts: &[&DenseMatrix]) -> DenseMatrix {
    let rows = parts[0].rows();
    let cols: usize = parts.iter().map(|p| p.cols()).sum();
    let mut out = DenseMatrix::zeros(rows, cols);
    for i in 0..rows {
        let row = out.row_mut(i);
        let mut off = 0;
        for p in parts {
            row[off..off + p.cols()].copy_from_slice(p.row(i));
            off += p.cols();
        }
    }
    out
}

fn column_block(m: &DenseMatrix, start: usize, width: usize) -> DenseMatrix {
    DenseMatrix::from_fn(m.rows(), width, |i, j| m.get(i, start + j))
}
