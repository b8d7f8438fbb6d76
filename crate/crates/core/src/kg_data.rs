//! Triple files, vocabularies, splits, filtered-ranking indexes and domain
//! metadata.
//!
//! Triple files are UTF-8, one `subject<TAB>predicate<TAB>object` per line,
//! no header. Ids are assigned in first-occurrence order.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Suffix appended to a predicate name to form its reciprocal.
pub const RECIPROCAL_SUFFIX: &str = "^-1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: usize,
    pub predicate: usize,
    pub object: usize,
}

impl Triple {
    pub const fn new(subject: usize, predicate: usize, object: usize) -> Self {
        Triple {
            subject,
            predicate,
            object,
        }
    }
}

/// Bidirectional name/id tables for entities and predicates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    entities: Vec<String>,
    predicates: Vec<String>,
    entity_ids: HashMap<String, usize>,
    predicate_ids: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names(entities: Vec<String>, predicates: Vec<String>) -> Result<Self> {
        let mut v = Vocabulary::new();
        for e in entities {
            if v.entity_ids.contains_key(&e) {
                return Err(Error::Vocab(format!("duplicate entity name {e:?}")));
            }
            v.intern_entity(&e);
        }
        for p in predicates {
            if v.predicate_ids.contains_key(&p) {
                return Err(Error::Vocab(format!("duplicate predicate name {p:?}")));
            }
            v.intern_predicate(&p);
        }
        Ok(v)
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_predicates(&self) -> usize {
        self.predicates.len()
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entities
    }

    pub fn predicate_names(&self) -> &[String] {
        &self.predicates
    }

    pub fn entity_id(&self, name: &str) -> Option<usize> {
        self.entity_ids.get(name).copied()
    }

    pub fn predicate_id(&self, name: &str) -> Option<usize> {
        self.predicate_ids.get(name).copied()
    }

    pub fn entity_name(&self, id: usize) -> Option<&str> {
        self.entities.get(id).map(String::as_str)
    }

    pub fn predicate_name(&self, id: usize) -> Option<&str> {
        self.predicates.get(id).map(String::as_str)
    }

    pub fn intern_entity(&mut self, name: &str) -> usize {
        if let Some(&id) = self.entity_ids.get(name) {
            return id;
        }
        let id = self.entities.len();
        self.entities.push(name.to_owned());
        self.entity_ids.insert(name.to_owned(), id);
        id
    }

    pub fn intern_predicate(&mut self, name: &str) -> usize {
        if let Some(&id) = self.predicate_ids.get(name) {
            return id;
        }
        let id = self.predicates.len();
        self.predicates.push(name.to_owned());
        self.predicate_ids.insert(name.to_owned(), id);
        id
    }

    /// SHA-256 over the ordered entity and predicate names.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"entities\n");
        for e in &self.entities {
            h.update(e.as_bytes());
            h.update(b"\n");
        }
        h.update(b"predicates\n");
        for p in &self.predicates {
            h.update(p.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

/// Whether names absent from the vocabulary may be added.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VocabMode {
    Frozen,
    Extend,
}

/// Parses triples from a reader. `source` is used in error messages.
/// Empty lines and lines starting with `#` are skipped.
pub fn parse_triples<R: BufRead>(
    reader: R,
    source: &str,
    vocab: &mut Vocabulary,
    mode: VocabMode,
) -> Result<Vec<Triple>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            location: source.to_owned(),
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                location: source.to_owned(),
                line: lineno,
                message: format!("expected 3 non-empty tab-separated fields, found {}", fields.len()),
            });
        }
        let t = match mode {
            VocabMode::Extend => Triple::new(
                vocab.intern_entity(fields[0]),
                vocab.intern_predicate(fields[1]),
                vocab.intern_entity(fields[2]),
            ),
            VocabMode::Frozen => {
                let lookup_e = |n: &str| {
                    vocab
                        .entity_id(n)
                        .ok_or_else(|| Error::Vocab(format!("{source}:{lineno}: unknown entity {n:?}")))
                };
                let r = vocab
                    .predicate_id(fields[1])
                    .ok_or_else(|| Error::Vocab(format!("{source}:{lineno}: unknown predicate {:?}", fields[1])))?;
                Triple::new(lookup_e(fields[0])?, r, lookup_e(fields[2])?)
            }
        };
        out.push(t);
    }
    Ok(out)
}

/// Loads a triple file.
///
/// With `vocab = None` a fresh vocabulary is built in first-occurrence order.
/// With `Some(v)` the vocabulary is frozen and unknown names are errors.
pub fn load_triples(path: &Path, vocab: Option<Vocabulary>) -> Result<(Vec<Triple>, Vocabulary)> {
    let (mut v, mode) = match vocab {
        Some(v) => (v, VocabMode::Frozen),
        None => (Vocabulary::new(), VocabMode::Extend),
    };
    let triples = load_triples_into(path, &mut v, mode)?;
    Ok((triples, v))
}

pub fn load_triples_into(path: &Path, vocab: &mut Vocabulary, mode: VocabMode) -> Result<Vec<Triple>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_triples(BufReader::new(file), &path.display().to_string(), vocab, mode)
}

/// Writes triples as name TSV.
pub fn write_triples<W: Write>(mut w: W, triples: &[Triple], vocab: &Vocabulary) -> std::io::Result<()> {
    for t in triples {
        writeln!(
            w,
            "{}\t{}\t{}",
            vocab.entities[t.subject], vocab.predicates[t.predicate], vocab.entities[t.object]
        )?;
    }
    Ok(())
}

pub fn save_triples(path: &Path, triples: &[Triple], vocab: &Vocabulary) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_triples(&mut w, triples, vocab).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Removes repeated triples keeping first occurrences; returns the count removed.
pub fn dedup_triples(triples: &mut Vec<Triple>) -> usize {
    let mut seen = HashSet::with_capacity(triples.len());
    let before = triples.len();
    triples.retain(|t| seen.insert(*t));
    before - triples.len()
}

/// Known completions over all splits, both query directions.
#[derive(Clone, Debug, Default)]
pub struct FilterIndex {
    objects: HashMap<(usize, usize), Vec<usize>>,
    subjects: HashMap<(usize, usize), Vec<usize>>,
}

impl FilterIndex {
    /// Objects `o` with `(s, r, o)` known.
    pub fn objects(&self, subject: usize, predicate: usize) -> &[usize] {
        self.objects
            .get(&(subject, predicate))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Subjects `s` with `(s, r, o)` known.
    pub fn subjects(&self, predicate: usize, object: usize) -> &[usize] {
        self.subjects
            .get(&(predicate, object))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.objects(t.subject, t.predicate).binary_search(&t.object).is_ok()
    }

    pub fn num_triples(&self) -> usize {
        self.objects.values().map(Vec::len).sum()
    }
}

pub fn build_filter_index(train: &[Triple], valid: &[Triple], test: &[Triple]) -> FilterIndex {
    let mut idx = FilterIndex::default();
    for t in train.iter().chain(valid).chain(test) {
        idx.objects.entry((t.subject, t.predicate)).or_default().push(t.object);
        idx.subjects.entry((t.predicate, t.object)).or_default().push(t.subject);
    }
    for v in idx.objects.values_mut().chain(idx.subjects.values_mut()) {
        v.sort_unstable();
        v.dedup();
    }
    idx
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Add `(o, r^-1, s)` for every training triple.
    pub reciprocal: bool,
}

#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    pub vocab: Vocabulary,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub filter: FilterIndex,
    pub reciprocal: bool,
}

impl KnowledgeGraph {
    /// Builds a graph from already indexed splits.
    pub fn from_splits(
        vocab: Vocabulary,
        mut train: Vec<Triple>,
        mut valid: Vec<Triple>,
        mut test: Vec<Triple>,
        options: LoadOptions,
    ) -> Result<Self> {
        let mut vocab = vocab;
        for (name, split) in [("train", &mut train), ("valid", &mut valid), ("test", &mut test)] {
            let removed = dedup_triples(split);
            if removed > 0 {
                log::info!("removed {removed} duplicate triples from the {name} split");
            }
        }
        let (ne, nr) = (vocab.num_entities(), vocab.num_predicates());
        for t in train.iter().chain(&valid).chain(&test) {
            if t.subject >= ne || t.object >= ne || t.predicate >= nr {
                return Err(Error::Index(format!(
                    "triple {t:?} out of range for |E|={ne}, |R|={nr}"
                )));
            }
        }
        if options.reciprocal {
            let inverse: Vec<usize> = (0..nr)
                .map(|r| {
                    let name = format!("{}{}", vocab.predicates[r], RECIPROCAL_SUFFIX);
                    vocab.intern_predicate(&name)
                })
                .collect();
            let extra: Vec<Triple> = train
                .iter()
                .map(|t| Triple::new(t.object, inverse[t.predicate], t.subject))
                .collect();
            train.extend(extra);
            dedup_triples(&mut train);
        }
        let filter = build_filter_index(&train, &valid, &test);
        Ok(KnowledgeGraph {
            vocab,
            train,
            valid,
            test,
            filter,
            reciprocal: options.reciprocal,
        })
    }

    /// Loads the three split files; ids follow train, valid, then test order.
    pub fn load(train: &Path, valid: &Path, test: &Path, options: LoadOptions) -> Result<Self> {
        let mut vocab = Vocabulary::new();
        let tr = load_triples_into(train, &mut vocab, VocabMode::Extend)?;
        let va = load_triples_into(valid, &mut vocab, VocabMode::Extend)?;
        let te = load_triples_into(test, &mut vocab, VocabMode::Extend)?;
        Self::from_splits(vocab, tr, va, te, options)
    }

    /// Loads `train.tsv`, `valid.tsv` and `test.tsv` from a directory.
    pub fn load_dir(dir: &Path, options: LoadOptions) -> Result<Self> {
        Self::load(
            &dir.join("train.tsv"),
            &dir.join("valid.tsv"),
            &dir.join("test.tsv"),
            options,
        )
    }

    pub fn num_entities(&self) -> usize {
        self.vocab.num_entities()
    }

    pub fn num_predicates(&self) -> usize {
        self.vocab.num_predicates()
    }

    pub fn all_triples(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }
}

/// Domain labels of entities and (subject, object) domain pairs of predicates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DomainMetadata {
    pub labels: Vec<String>,
    pub entity_domain: Vec<Option<usize>>,
    pub predicate_domains: Vec<Option<(usize, usize)>>,
}

impl DomainMetadata {
    pub fn new(num_entities: usize, num_predicates: usize) -> Self {
        DomainMetadata {
            labels: Vec::new(),
            entity_domain: vec![None; num_entities],
            predicate_domains: vec![None; num_predicates],
        }
    }

    pub fn label_id(&mut self, label: &str) -> usize {
        match self.labels.iter().position(|l| l == label) {
            Some(i) => i,
            None => {
                self.labels.push(label.to_owned());
                self.labels.len() - 1
            }
        }
    }

    pub fn set_entity(&mut self, entity: usize, label: &str) {
        let l = self.label_id(label);
        self.entity_domain[entity] = Some(l);
    }

    pub fn set_predicate(&mut self, predicate: usize, subject_label: &str, object_label: &str) {
        let s = self.label_id(subject_label);
        let o = self.label_id(object_label);
        self.predicate_domains[predicate] = Some((s, o));
    }

    /// Entities carrying a given label, in id order.
    pub fn members(&self, label: usize) -> Vec<usize> {
        self.entity_domain
            .iter()
            .enumerate()
            .filter(|(_, d)| **d == Some(label))
            .map(|(i, _)| i)
            .collect()
    }

    /// `κ_S(r)`, or `None` when the predicate has no metadata.
    pub fn subject_domain(&self, predicate: usize) -> Option<Vec<usize>> {
        self.predicate_domains[predicate].map(|(s, _)| self.members(s))
    }

    /// `κ_O(r)`, or `None` when the predicate has no metadata.
    pub fn object_domain(&self, predicate: usize) -> Option<Vec<usize>> {
        self.predicate_domains[predicate].map(|(_, o)| self.members(o))
    }

    /// Number of distinct (subject-domain, object-domain) pairs in use.
    pub fn distinct_pairs(&self) -> usize {
        self.predicate_domains.iter().flatten().collect::<HashSet<_>>().len()
    }
}

/// Metadata plus the non-fatal issues found while reading it.
#[derive(Clone, Debug)]
pub struct LoadedDomains {
    pub metadata: DomainMetadata,
    pub warnings: Vec<String>,
}

/// Parses domain metadata. Two-field lines are `entity<TAB>domain`,
/// three-field lines are `predicate<TAB>subject_domain<TAB>object_domain`.
pub fn parse_domains<R: BufRead>(reader: R, source: &str, vocab: &Vocabulary) -> Result<LoadedDomains> {
    let mut meta = DomainMetadata::new(vocab.num_entities(), vocab.num_predicates());
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            location: source.to_owned(),
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            [e, d] if !e.is_empty() && !d.is_empty() => {
                let id = vocab
                    .entity_id(e)
                    .ok_or_else(|| Error::Vocab(format!("{source}:{lineno}: unknown entity {e:?}")))?;
                meta.set_entity(id, d);
            }
            [p, sd, od] if !p.is_empty() && !sd.is_empty() && !od.is_empty() => {
                let id = vocab
                    .predicate_id(p)
                    .ok_or_else(|| Error::Vocab(format!("{source}:{lineno}: unknown predicate {p:?}")))?;
                meta.set_predicate(id, sd, od);
            }
            _ => {
                return Err(Error::Parse {
                    location: source.to_owned(),
                    line: lineno,
                    message: format!("expected 2 or 3 tab-separated fields, found {}", fields.len()),
                })
            }
        }
    }
    let mut warnings = Vec::new();
    let unlabeled = meta.entity_domain.iter().filter(|d| d.is_none()).count();
    if unlabeled > 0 {
        warnings.push(format!("{unlabeled} entities have no domain"));
    }
    let mut populated = vec![false; meta.labels.len()];
    for d in meta.entity_domain.iter().flatten() {
        populated[*d] = true;
    }
    for (r, pair) in meta.predicate_domains.iter().enumerate() {
        if let Some((s, o)) = pair {
            for l in [s, o] {
                if !populated[*l] {
                    warnings.push(format!(
                        "predicate {:?} references domain {:?} which has no entities",
                        vocab.predicates[r], meta.labels[*l]
                    ));
                }
            }
        }
    }
    for w in &warnings {
        log::warn!("{source}: {w}");
    }
    Ok(LoadedDomains {
        metadata: meta,
        warnings,
    })
}

pub fn load_domains(path: &Path, kg: &KnowledgeGraph) -> Result<LoadedDomains> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_domains(BufReader::new(file), &path.display().to_string(), &kg.vocab)
}

/// SHA-256 of a file's bytes, hex encoded.
pub fn file_sha256(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = std::io::Read::read(&mut file, &mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}
