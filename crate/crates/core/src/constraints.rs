//! Domain constraints as indicator circuits, and their product with a model.
//!
//! A predicate `r` constrained by domains admits `(s, r, o)` iff
//! `s ∈ κ_S(r)` and `o ∈ κ_O(r)`. Predicates sharing both domains are grouped
//! so the constrained partition function costs one restricted contraction
//! per group.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use fixedbitset::FixedBitSet;

use crate::error::{Error, Result};
use crate::kg_data::{DomainMetadata, Triple};
use crate::models::circuit::Members;
use crate::models::{normalize, Model, Slot};

#[derive(Clone, Debug)]
pub struct ConstraintGroup {
    pub predicates: Vec<usize>,
    pub subjects: Vec<usize>,
    pub objects: Vec<usize>,
    subject_set: FixedBitSet,
    object_set: FixedBitSet,
}

impl ConstraintGroup {
    fn new(num_entities: usize, predicates: Vec<usize>, mut subjects: Vec<usize>, mut objects: Vec<usize>) -> Self {
        subjects.sort_unstable();
        subjects.dedup();
        objects.sort_unstable();
        objects.dedup();
        let mut subject_set = FixedBitSet::with_capacity(num_entities);
        let mut object_set = FixedBitSet::with_capacity(num_entities);
        subjects.iter().for_each(|&s| subject_set.insert(s));
        objects.iter().for_each(|&o| object_set.insert(o));
        ConstraintGroup {
            predicates,
            subjects,
            objects,
            subject_set,
            object_set,
        }
    }

    pub fn allows_subject(&self, s: usize) -> bool {
        self.subject_set.contains(s)
    }

    pub fn allows_object(&self, o: usize) -> bool {
        self.object_set.contains(o)
    }
}

/// Compiled domain constraints.
#[derive(Clone, Debug)]
pub struct ConstraintCircuit {
    groups: Vec<ConstraintGroup>,
    group_of: Vec<usize>,
    num_entities: usize,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct CompileOptions {
    /// Admit predicates without metadata for every subject and object.
    pub allow_unconstrained: bool,
}

/// Groups predicates by their (subject domain, object domain) pair.
pub fn compile_constraints(meta: &DomainMetadata, options: CompileOptions) -> Result<ConstraintCircuit> {
    let num_entities = meta.entity_domain.len();
    let mut by_pair: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    let mut free = Vec::new();
    for (r, pair) in meta.predicate_domains.iter().enumerate() {
        match pair {
            Some(p) => by_pair.entry(*p).or_default().push(r),
            None if options.allow_unconstrained => free.push(r),
            None => {
                return Err(Error::Constraint(format!(
                    "predicate {r} has no domain metadata and unconstrained predicates are not allowed"
                )))
            }
        }
    }
    let mut groups = Vec::new();
    for ((sd, od), preds) in by_pair {
        let subjects = meta.members(sd);
        let objects = meta.members(od);
        for (kind, set, label) in [("subject", &subjects, sd), ("object", &objects, od)] {
            if set.is_empty() {
                return Err(Error::Constraint(format!(
                    "{kind} domain {:?} of predicate {} is empty",
                    meta.labels[label], preds[0]
                )));
            }
        }
        groups.push((preds, subjects, objects));
    }
    if !free.is_empty() {
        let all: Vec<usize> = (0..num_entities).collect();
        groups.push((free, all.clone(), all));
    }
    ConstraintCircuit::from_groups(num_entities, meta.predicate_domains.len(), groups)
}

impl ConstraintCircuit {
    /// Builds a circuit from explicit `(predicates, κ_S, κ_O)` groups. Every
    /// predicate must appear in exactly one group.
    pub fn from_groups(
        num_entities: usize,
        num_predicates: usize,
        groups: Vec<(Vec<usize>, Vec<usize>, Vec<usize>)>,
    ) -> Result<Self> {
        let mut group_of = vec![usize::MAX; num_predicates];
        let mut out = Vec::with_capacity(groups.len());
        for (g, (preds, subjects, objects)) in groups.into_iter().enumerate() {
            if subjects.is_empty() || objects.is_empty() {
                return Err(Error::Constraint(format!("group {g} has an empty domain")));
            }
            for &r in &preds {
                if r >= num_predicates {
                    return Err(Error::Index(format!("predicate {r} out of range")));
                }
                if group_of[r] != usize::MAX {
                    return Err(Error::Constraint(format!("predicate {r} appears in two groups")));
                }
                group_of[r] = g;
            }
            if subjects.iter().chain(&objects).any(|&u| u >= num_entities) {
                return Err(Error::Index(format!("group {g} references an entity out of range")));
            }
            out.push(ConstraintGroup::new(num_entities, preds, subjects, objects));
        }
        if let Some(r) = group_of.iter().position(|&g| g == usize::MAX) {
            return Err(Error::Constraint(format!("predicate {r} is not covered by any group")));
        }
        Ok(ConstraintCircuit {
            groups: out,
            group_of,
            num_entities,
        })
    }

    pub fn groups(&self) -> &[ConstraintGroup] {
        &self.groups
    }

    pub fn group_of(&self, predicate: usize) -> &ConstraintGroup {
        &self.groups[self.group_of[predicate]]
    }

    pub(crate) fn group_index(&self, predicate: usize) -> usize {
        self.group_of[predicate]
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_predicates(&self) -> usize {
        self.group_of.len()
    }

    /// Edges of the compiled circuit: `Σ_groups (|κ_S| + |κ_O|) + |R|`.
    pub fn size(&self) -> usize {
        self.groups
            .iter()
            .map(|g| g.subjects.len() + g.objects.len())
            .sum::<usize>()
            + self.num_predicates()
    }

    pub fn satisfies(&self, t: &Triple) -> bool {
        let g = self.group_of(t.predicate);
        g.allows_subject(t.subject) && g.allows_object(t.object)
    }

    /// Whether the completion of `context` along `target` with `u` is allowed.
    pub fn allows(&self, target: Slot, context: &Triple, u: usize) -> bool {
        self.satisfies(&target.with(context, u))
    }

    /// Text report of the compiled groups.
    pub fn report(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("groups = {}\n", self.groups.len()));
        s.push_str(&format!("predicates = {}\n", self.num_predicates()));
        s.push_str(&format!("entities = {}\n", self.num_entities));
        s.push_str(&format!("size = {}\n", self.size()));
        for (i, g) in self.groups.iter().enumerate() {
            s.push_str(&format!(
                "group.{i} = predicates:{} subjects:{} objects:{}\n",
                g.predicates.len(),
                g.subjects.len(),
                g.objects.len()
            ));
        }
        s
    }
}

/// A circuit model multiplied by a constraint indicator.
#[derive(Clone, Debug)]
pub struct ConstrainedModel {
    base: Model,
    circuit: ConstraintCircuit,
    normalizer: OnceLock<f64>,
}

impl ConstrainedModel {
    pub fn new(base: Model, circuit: ConstraintCircuit) -> Result<Self> {
        if !base.kind().is_circuit() {
            return Err(Error::Unsupported(
                "constraints multiply non-negative or squared models only".into(),
            ));
        }
        let d = base.dims();
        if d.entities != circuit.num_entities() || d.relations != circuit.num_predicates() {
            return Err(Error::Argument(format!(
                "constraint circuit over |E|={}, |R|={} does not match model |E|={}, |R|={}",
                circuit.num_entities(),
                circuit.num_predicates(),
                d.entities,
                d.relations
            )));
        }
        Ok(ConstrainedModel {
            base,
            circuit,
            normalizer: OnceLock::new(),
        })
    }

    pub fn base(&self) -> &Model {
        &self.base
    }

    /// Mutable access to the base model; invalidates the cached `Z_K`.
    pub fn base_mut(&mut self) -> &mut Model {
        self.normalizer = OnceLock::new();
        &mut self.base
    }

    pub fn into_base(self) -> Model {
        self.base
    }

    pub fn circuit(&self) -> &ConstraintCircuit {
        &self.circuit
    }

    /// `φ(t) · 1[t ⊨ K]`.
    pub fn score(&self, t: &Triple) -> Result<f64> {
        let s = self.base.score(t)?;
        Ok(if self.circuit.satisfies(t) { s } else { 0.0 })
    }

    /// Exact `Z_K`, one restricted contraction per group.
    pub fn partition_function(&self) -> Result<f64> {
        if let Some(z) = self.normalizer.get() {
            return Ok(*z);
        }
        let z = constrained_partition(&self.base, &self.circuit);
        Ok(*self.normalizer.get_or_init(|| z))
    }

    /// `Z_K` by enumerating satisfying triples.
    pub fn brute_force_partition(&self) -> Result<f64> {
        let d = self.base.dims();
        if (d.entities as u128).pow(2) * d.relations as u128 > crate::models::BRUTE_FORCE_LIMIT {
            return Err(Error::Refused("instance too large for enumeration".into()));
        }
        let mut acc = crate::numeric::CompensatedSum::default();
        for s in 0..d.entities {
            for r in 0..d.relations {
                for o in 0..d.entities {
                    acc.add(self.score(&Triple::new(s, r, o))?);
                }
            }
        }
        Ok(acc.value())
    }

    /// Masses along `target` with violating completions set to exactly zero.
    pub(crate) fn context_masses(&self, target: Slot, context: &Triple) -> Vec<f64> {
        let mut m = self.base.context_masses(target, context);
        for (u, x) in m.iter_mut().enumerate() {
            if !self.circuit.allows(target, context, u) {
                *x = 0.0;
            }
        }
        m
    }

    pub fn conditional_distribution(&self, target: Slot, context: &Triple) -> Result<Vec<f64>> {
        self.base.check_triple(&target.with(context, 0))?;
        if target != Slot::Predicate {
            let g = self.circuit.group_of(context.predicate);
            let ok = match target {
                Slot::Object => g.allows_subject(context.subject),
                _ => g.allows_object(context.object),
            };
            if !ok {
                return Err(Error::DegenerateContext(format!(
                    "context {context:?} violates the constraints of predicate {}",
                    context.predicate
                )));
            }
        }
        normalize(self.context_masses(target, context), || {
            format!("context {context:?} has zero constrained mass along {target:?}")
        })
    }

    pub fn log_prob(&self, t: &Triple) -> Result<f64> {
        let z = self.partition_function()?;
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::DegenerateModel(format!("constrained partition function is {z}")));
        }
        let s = self.score(t)?;
        if s == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(s.ln() - z.ln())
    }

    /// Unnormalised `p_K(S = s)` for every subject.
    pub fn subject_masses(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.circuit.num_entities()];
        for g in self.circuit.groups() {
            let m = self.base.masses_over(
                Slot::Subject,
                [Members::All, Members::Some(&g.predicates), Members::Some(&g.objects)],
                Members::Some(&g.subjects),
            );
            for (&s, v) in g.subjects.iter().zip(m) {
                out[s] += v;
            }
        }
        out
    }

    /// Unnormalised `p_K(R = r | S = s)` for every predicate.
    pub fn predicate_masses(&self, subject: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.circuit.num_predicates()];
        let one = [subject];
        for g in self.circuit.groups() {
            if !g.allows_subject(subject) {
                continue;
            }
            let m = self.base.masses_over(
                Slot::Predicate,
                [Members::Some(&one), Members::All, Members::Some(&g.objects)],
                Members::Some(&g.predicates),
            );
            for (&r, v) in g.predicates.iter().zip(m) {
                out[r] = v;
            }
        }
        out
    }
}

/// `Σ_{t ⊨ K} φ(t)` in closed form.
pub fn constrained_partition(base: &Model, circuit: &ConstraintCircuit) -> f64 {
    circuit
        .groups()
        .iter()
        .map(|g| {
            base.contract_members([
                Members::Some(&g.subjects),
                Members::Some(&g.predicates),
                Members::Some(&g.objects),
            ])
        })
        .sum()
}
