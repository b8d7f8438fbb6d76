//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use gekc::bench::{self, BenchOptions, BenchPoint};
use gekc::constraints::{compile_constraints, CompileOptions, ConstrainedModel, ConstraintCircuit};
use gekc::evaluation::{self, Masked, Normalization};
use gekc::kg_data::{load_domains, load_triples_into, LoadOptions, VocabMode, RECIPROCAL_SUFFIX};
use gekc::models::{circuit_size as edges, load_checkpoint, save_checkpoint, CheckpointInfo};
use gekc::sampling::{self, SampleMethod};
use gekc::training::{self, InitScheme, Objective, PllWeights, Precision, TrainConfig};
use gekc::{Dims, Error, Family, KnowledgeGraph, Model, ModelKind, Triple, Vocabulary};

use crate::manifest::RunManifest;
use crate::settings::Settings;
use crate::{
    known_keys, BenchArgs, CalibrateArgs, CircuitSizeArgs, CliError, Common, ConstraintsReportArgs, Data, EvalArgs,
    KtdArgs, SampleArgs, TrainArgs,
};

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn path_flag(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T> {
    s.parse().map_err(|e: Error| CliError::Usage(e.to_string()))
}

fn settings(name: &str, common: &Common) -> Result<Settings> {
    let mut s = Settings::new(common.config.as_deref(), &known_keys(name))?;
    if let Some(t) = s.opt("threads", common.threads)? {
        if t > 1 {
            log::info!("--threads {t}: computation runs on one thread");
        }
    }
    s.switch("deterministic", common.deterministic)?;
    Ok(s)
}

fn out_dir(s: &mut Settings, common: &Common) -> Result<PathBuf> {
    let dir = PathBuf::from(s.get("out", path_flag(&common.out), "gekc-out".to_owned())?);
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

/// Loads the splits named by `--data` or `--train/--valid/--test`.
fn load_kg(s: &mut Settings, data: &Data, reciprocal: bool, manifest: &mut RunManifest) -> Result<KnowledgeGraph> {
    let dir = s.opt("data", path_flag(&data.data))?.map(PathBuf::from);
    let mut train = s.opt("train", path_flag(&data.train))?.map(PathBuf::from);
    let mut valid = s.opt("valid", path_flag(&data.valid))?.map(PathBuf::from);
    let mut test = s.opt("test", path_flag(&data.test))?.map(PathBuf::from);
    if let Some(d) = dir {
        train = train.or_else(|| Some(d.join("train.tsv")));
        valid = valid.or_else(|| Some(d.join("valid.tsv")));
        test = test.or_else(|| Some(d.join("test.tsv")));
    }
    let train = required(train, "data or --train")?;
    let mut vocab = Vocabulary::new();
    let mut splits = Vec::new();
    for p in [Some(train), valid, test] {
        match p {
            Some(p) => {
                splits.push(load_triples_into(&p, &mut vocab, VocabMode::Extend)?);
                manifest.input(&p)?;
            }
            None => splits.push(Vec::new()),
        }
    }
    let test = splits.pop().unwrap();
    let valid = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(KnowledgeGraph::from_splits(
        vocab,
        train,
        valid,
        test,
        LoadOptions { reciprocal },
    )?)
}

/// Compiles domain metadata; reciprocal predicates get the swapped domains
/// of their originals.
fn load_constraints(
    path: &Path,
    kg: &KnowledgeGraph,
    allow: bool,
    manifest: &mut RunManifest,
) -> Result<ConstraintCircuit> {
    let loaded = load_domains(path, kg)?;
    manifest.input(path)?;
    for w in &loaded.warnings {
        log::warn!("{w}");
    }
    let mut meta = loaded.metadata;
    for (r, name) in kg.vocab.predicate_names().iter().enumerate() {
        if meta.predicate_domains[r].is_some() {
            continue;
        }
        if let Some(orig) = name
            .strip_suffix(RECIPROCAL_SUFFIX)
            .and_then(|n| kg.vocab.predicate_id(n))
        {
            meta.predicate_domains[r] = meta.predicate_domains[orig].map(|(a, b)| (b, a));
        }
    }
    Ok(compile_constraints(
        &meta,
        CompileOptions {
            allow_unconstrained: allow,
        },
    )?)
}

fn load_model(path: &Path, manifest: &mut RunManifest) -> Result<(Model, CheckpointInfo)> {
    let (m, info) = load_checkpoint(path)?;
    manifest.input(path)?;
    Ok((m, info))
}

fn check_compatible(model: &Model, info: &CheckpointInfo, kg: &KnowledgeGraph) -> Result<()> {
    if let Some(h) = &info.vocab_hash {
        let here = kg.vocab.content_hash();
        if *h != here {
            return Err(Error::Refused(format!(
                "checkpoint {} was trained on a different vocabulary ({h} vs {here})",
                info.path.display()
            ))
            .into());
        }
    }
    let d = model.dims();
    if d.entities != kg.num_entities() || d.relations != kg.num_predicates() {
        return Err(Error::Refused(format!(
            "checkpoint has |E|={}, |R|={} but the data has |E|={}, |R|={}",
            d.entities,
            d.relations,
            kg.num_entities(),
            kg.num_predicates()
        ))
        .into());
    }
    Ok(())
}

fn write_file(path: &Path, text: &str, manifest: &mut RunManifest) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))?;
    manifest.output(path)
}

fn finish(manifest: &mut RunManifest, s: &Settings, dir: &Path) -> Result<()> {
    manifest.config(s.resolved());
    let p = manifest.write(dir)?;
    log::info!("wrote {}", p.display());
    Ok(())
}

fn split<'a>(kg: &'a KnowledgeGraph, name: &str) -> Result<&'a [Triple]> {
    match name {
        "test" => Ok(&kg.test),
        "valid" => Ok(&kg.valid),
        "train" => Ok(&kg.train),
        other => Err(CliError::Usage(format!("unknown split '{other}'"))),
    }
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut s = settings("train", &a.common)?;
    let mut manifest = RunManifest::new("train");
    let distill = s.opt("distill_from", path_flag(&a.distill_from))?.map(PathBuf::from);
    let kind = s.get("kind", a.kind, ModelKind::Squared)?;
    let objective: Objective = parse(&s.get("objective", a.objective.clone(), "pll".to_owned())?)?;
    let constraints = s.opt("constraints", path_flag(&a.constraints))?.map(PathBuf::from);
    if objective == Objective::Mle && kind == ModelKind::EnergyBased {
        return Err(CliError::Usage(
            "--objective mle needs a tractable partition function: for an energy-based model it sums \
             exp(score) over all |E|^2*|R| triples with no factorisation, which is infeasible. \
             Use --objective pll or --kind nonneg/squared"
                .into(),
        ));
    }
    if distill.is_some() && kind != ModelKind::Squared {
        return Err(CliError::Usage(format!(
            "--distill-from initialises squared models only (got --kind {kind}); squaring keeps the \
             ranking of non-negative energy-based scores"
        )));
    }
    if constraints.is_some() && kind == ModelKind::EnergyBased {
        return Err(CliError::Usage("--constraints needs a nonneg or squared model".into()));
    }
    let allow = s.switch("allow_unconstrained", a.allow_unconstrained)?;
    let reciprocal = s.switch("reciprocal", a.reciprocal)?;
    let seed = s.get("seed", a.seed, 0u64)?;
    manifest.seed(seed);

    let teacher = match &distill {
        Some(p) => Some(load_model(p, &mut manifest)?),
        None => None,
    };
    let default_family = teacher.as_ref().map_or(Family::Complex, |(m, _)| m.family());
    let family = s.get("family", a.family, default_family)?;
    let default_dim = teacher.as_ref().map_or(100, |(m, _)| m.dims().rank);
    let dim = s.get("dim", a.dim, default_dim)?;
    let relation_dim = s.get("relation_dim", a.relation_dim, dim)?;

    let mut cfg = TrainConfig::new(kind);
    cfg.objective = objective;
    cfg.seed = seed;
    cfg.batch_size = s.get("batch", a.batch, cfg.batch_size)?;
    cfg.learning_rate = s.get("lr", a.lr, cfg.learning_rate)?;
    cfg.max_epochs = s.get("epochs", a.epochs, cfg.max_epochs)?;
    cfg.patience = s.get("patience", a.patience, cfg.patience)?;
    cfg.weights = PllWeights::new(
        s.get("omega_s", a.omega_s, 1.0)?,
        s.get("omega_r", a.omega_r, 1.0)?,
        s.get("omega_o", a.omega_o, 1.0)?,
    );
    cfg.adam.beta1 = s.get("beta1", a.beta1, cfg.adam.beta1)?;
    cfg.adam.beta2 = s.get("beta2", a.beta2, cfg.adam.beta2)?;
    cfg.adam.epsilon = s.get("epsilon", a.epsilon, cfg.adam.epsilon)?;
    cfg.precision = parse::<Precision>(&s.get("precision", a.precision.clone(), "double".to_owned())?)?;
    cfg.valid_subsample = Some(s.get("valid_subsample", a.valid_subsample, 1000usize)?);
    cfg.logits_cap = s.get("logits_cap", a.logits_cap, cfg.logits_cap)?;
    cfg.init = match &distill {
        Some(p) => InitScheme::Distilled(p.clone()),
        None => {
            let name = s.get("init", a.init.clone(), InitScheme::default_for(kind).name().to_owned())?;
            let default_scale = match InitScheme::default_for(kind) {
                InitScheme::Dirichlet { alpha } if name == "dirichlet" => alpha,
                _ if name == "dirichlet" => 1e3,
                _ => 1e-3,
            };
            let scale = s.get("init_scale", a.init_scale, default_scale)?;
            match name.as_str() {
                "gaussian" => InitScheme::Gaussian { sigma: scale },
                "dirichlet" => InitScheme::Dirichlet { alpha: scale },
                "lognormal" => InitScheme::LogNormal { sigma: scale },
                other => return Err(CliError::Usage(format!("unknown init scheme '{other}'"))),
            }
        }
    };
    cfg.validate(kind).map_err(|e| CliError::Usage(e.to_string()))?;
    let dir = out_dir(&mut s, &a.common)?;

    let kg = load_kg(&mut s, &a.data, reciprocal, &mut manifest)?;
    let circuit = match &constraints {
        Some(p) => Some(load_constraints(p, &kg, allow, &mut manifest)?),
        None => None,
    };
    let dims = match family {
        Family::Tucker => Dims::tucker(kg.num_entities(), kg.num_predicates(), dim, relation_dim),
        _ => Dims::new(kg.num_entities(), kg.num_predicates(), dim),
    };
    if let Some((t, info)) = &teacher {
        check_compatible(t, info, &kg)?;
    }
    let model = training::init_params(family, kind, dims, &cfg.init, seed)?;
    let (model, log) = manifest.time("train", || training::fit(model, &kg, &cfg, circuit.as_ref()))?;

    let ckpt = dir.join("model.ckpt");
    let info = save_checkpoint(&ckpt, &model, Some(&kg.vocab.content_hash()))?;
    manifest.outputs_checkpoint(&info);
    write_file(&dir.join("train_log.tsv"), &log.to_tsv(), &mut manifest)?;
    manifest.note("result.epochs", log.epochs.len());
    manifest.note("result.best_epoch", log.best_epoch);
    manifest.note("result.best_valid_mrr", log.best_mrr);
    manifest.note("result.stopped_early", log.stopped_early);
    manifest.note("result.parameters", model.parameter_count());
    finish(&mut manifest, &s, &dir)?;
    println!("checkpoint = {}", ckpt.display());
    println!("best_epoch = {}", log.best_epoch);
    println!("best_valid_mrr = {}", log.best_mrr);
    Ok(())
}

impl RunManifest {
    fn outputs_checkpoint(&mut self, info: &CheckpointInfo) {
        self.note(&format!("output.{}", info.path.display()), &info.sha256);
    }
}

/// Loads a checkpoint and the data it was trained on.
fn model_and_data(
    s: &mut Settings,
    checkpoint: &Option<PathBuf>,
    data: &Data,
    manifest: &mut RunManifest,
    key: &str,
) -> Result<(Model, CheckpointInfo, KnowledgeGraph)> {
    let path = PathBuf::from(required(s.opt(key, path_flag(checkpoint))?, key)?);
    let (model, info) = load_model(&path, manifest)?;
    let kg = load_kg(s, data, model.reciprocal(), manifest)?;
    check_compatible(&model, &info, &kg)?;
    Ok((model, info, kg))
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let mut s = settings("eval", &a.common)?;
    let mut manifest = RunManifest::new("eval");
    let constrained = s.switch("constrained", a.constrained)?;
    let constraints = s.opt("constraints", path_flag(&a.constraints))?.map(PathBuf::from);
    if constrained && constraints.is_none() {
        return Err(CliError::Usage("--constrained needs --constraints".into()));
    }
    let ks: Vec<usize> = s.list("ks", a.ks.clone(), "1,3,10")?;
    let split_name = s.get("split", a.split.clone(), "test".to_owned())?;
    let allow = s.switch("allow_unconstrained", a.allow_unconstrained)?;
    let dump = s.switch("dump_ranks", a.dump_ranks)?;
    let dir = out_dir(&mut s, &a.common)?;
    let (model, _, kg) = model_and_data(&mut s, &a.checkpoint, &a.data, &mut manifest, "checkpoint")?;
    let circuit = match &constraints {
        Some(p) => Some(load_constraints(p, &kg, allow, &mut manifest)?),
        None => None,
    };
    let triples = split(&kg, &split_name)?;
    let report = manifest.time("rank", || match (&circuit, constrained) {
        (Some(c), true) => evaluation::evaluate(
            &Masked {
                model: &model,
                circuit: c,
            },
            triples,
            &kg.filter,
            &ks,
            Some(c),
        ),
        (c, _) => evaluation::evaluate(&model, triples, &kg.filter, &ks, c.as_ref()),
    })?;
    write_file(&dir.join("eval.tsv"), &report.to_tsv(), &mut manifest)?;
    write_file(&dir.join("eval.txt"), &report.to_kv(), &mut manifest)?;
    if dump {
        write_file(&dir.join("ranks.tsv"), &report.ranks_tsv(), &mut manifest)?;
    }
    finish(&mut manifest, &s, &dir)?;
    print!("{}", report.to_kv());
    Ok(())
}

pub fn sample(a: SampleArgs) -> Result<()> {
    let mut s = settings("sample", &a.common)?;
    let mut manifest = RunManifest::new("sample");
    let n = s.get("n", a.n, 1000usize)?;
    let seed = s.get("seed", a.seed, 0u64)?;
    manifest.seed(seed);
    let method = match s.get("method", a.method.clone(), "autoregressive".to_owned())?.as_str() {
        "ancestral" => SampleMethod::Ancestral,
        "autoregressive" => SampleMethod::Autoregressive,
        other => return Err(CliError::Usage(format!("unknown sampling method '{other}'"))),
    };
    let constraints = s.opt("constraints", path_flag(&a.constraints))?.map(PathBuf::from);
    if constraints.is_some() && method == SampleMethod::Ancestral {
        return Err(CliError::Usage("constrained sampling is autoregressive only".into()));
    }
    let allow = s.switch("allow_unconstrained", a.allow_unconstrained)?;
    let dir = out_dir(&mut s, &a.common)?;
    let (model, info, kg) = model_and_data(&mut s, &a.checkpoint, &a.data, &mut manifest, "checkpoint")?;
    let circuit = match &constraints {
        Some(p) => Some(load_constraints(p, &kg, allow, &mut manifest)?),
        None => None,
    };
    let batch = manifest.time("sample", || -> Result<sampling::SampleBatch> {
        Ok(match (circuit, method) {
            (Some(c), _) => {
                let cm = ConstrainedModel::new(model.clone(), c)?;
                sampling::autoregressive_sample(&cm, n, seed)?
            }
            (None, SampleMethod::Ancestral) => sampling::ancestral_sample(&model, n, seed)?,
            (None, SampleMethod::Autoregressive) => sampling::autoregressive_sample(&model, n, seed)?,
        })
    })?;
    let path = dir.join("samples.tsv");
    let mut buf = Vec::new();
    sampling::write_samples(&mut buf, &batch, &kg.vocab, &info.sha256).map_err(|e| io_err(&path, e))?;
    fs::write(&path, &buf).map_err(|e| io_err(&path, e))?;
    manifest.output(&path)?;
    finish(&mut manifest, &s, &dir)?;
    println!("samples = {}", path.display());
    Ok(())
}

fn read_set(path: &Path, vocab: &Vocabulary, manifest: &mut RunManifest) -> Result<Vec<Triple>> {
    let mut v = vocab.clone();
    let t = load_triples_into(path, &mut v, VocabMode::Frozen)?;
    manifest.input(path)?;
    Ok(t)
}

pub fn ktd(a: KtdArgs) -> Result<()> {
    let mut s = settings("ktd", &a.common)?;
    let mut manifest = RunManifest::new("ktd");
    let batch = s.get("batch", a.batch, 1000usize)?;
    let repeats = s.get("repeats", a.repeats, 100usize)?;
    let seed = s.get("seed", a.seed, 0u64)?;
    manifest.seed(seed);
    let set_a = PathBuf::from(required(s.opt("set_a", path_flag(&a.set_a))?, "set-a")?);
    let set_b = s.opt("set_b", path_flag(&a.set_b))?.map(PathBuf::from);
    let dir = out_dir(&mut s, &a.common)?;
    let (model, _, kg) = model_and_data(&mut s, &a.reference, &a.data, &mut manifest, "reference")?;
    if model.family() != Family::Complex {
        return Err(CliError::Usage("--reference must be a complex checkpoint".into()));
    }
    let xa = read_set(&set_a, &kg.vocab, &mut manifest)?;
    let xb = match &set_b {
        Some(p) => read_set(p, &kg.vocab, &mut manifest)?,
        None => kg.test.clone(),
    };
    let report = manifest.time("ktd", || evaluation::ktd(&model, &xa, &xb, batch, repeats, seed))?;
    write_file(&dir.join("ktd.txt"), &report.to_kv(), &mut manifest)?;
    finish(&mut manifest, &s, &dir)?;
    print!("{}", report.to_kv());
    Ok(())
}

pub fn calibrate(a: CalibrateArgs) -> Result<()> {
    let mut s = settings("calibrate", &a.common)?;
    let mut manifest = RunManifest::new("calibrate");
    let norm: Normalization = parse(&s.get("normalization", a.normalization.clone(), "logistic".to_owned())?)?;
    let bins = s.get("bins", a.bins, 10usize)?;
    let seed = s.get("seed", a.seed, 0u64)?;
    manifest.seed(seed);
    let split_name = s.get("split", a.split.clone(), "test".to_owned())?;
    let dir = out_dir(&mut s, &a.common)?;
    let (model, _, kg) = model_and_data(&mut s, &a.checkpoint, &a.data, &mut manifest, "checkpoint")?;
    let triples = split(&kg, &split_name)?.to_vec();
    let report = manifest.time("calibrate", || {
        evaluation::calibration(&model, &triples, &kg, norm, bins, seed)
    })?;
    write_file(&dir.join("calibration.txt"), &report.to_kv(), &mut manifest)?;
    finish(&mut manifest, &s, &dir)?;
    print!("{}", report.to_kv());
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let mut s = settings("bench", &a.common)?;
    let mut manifest = RunManifest::new("bench");
    let families: Vec<Family> = s.list("families", a.families.clone(), "cp")?;
    let kinds: Vec<ModelKind> = s.list("kinds", a.kinds.clone(), "ebm,squared")?;
    let entities: Vec<usize> = s.list("entities", a.entities.clone(), "10000")?;
    let dims: Vec<usize> = s.list("dims", a.dims.clone(), "64")?;
    let batches: Vec<usize> = s.list("batches", a.batches.clone(), "128,256,512,1024,2048,4096")?;
    let relations = s.get("relations", a.relations, 10usize)?;
    let objective: Objective = parse(&s.get("objective", a.objective.clone(), "pll".to_owned())?)?;
    let opts = BenchOptions {
        repeats: s.get("repeats", a.repeats, 25usize)?,
        warmup: s.get("warmup", a.warmup, 2usize)?,
        mem_cap: s.get("mem_cap_mib", a.mem_cap_mib, 4096usize)? << 20,
        seed: s.get("seed", a.seed, 0u64)?,
    };
    manifest.seed(opts.seed);
    if objective == Objective::Mle && kinds.contains(&ModelKind::EnergyBased) {
        return Err(CliError::Usage(
            "mle cannot be benchmarked for energy-based models".into(),
        ));
    }
    let dir = out_dir(&mut s, &a.common)?;
    let mut points = Vec::new();
    for &family in &families {
        for &kind in &kinds {
            for &e in &entities {
                for &d in &dims {
                    for &b in &batches {
                        points.push(BenchPoint {
                            family,
                            kind,
                            entities: e,
                            relations,
                            dim: d,
                            batch: b,
                            objective,
                        });
                    }
                }
            }
        }
    }
    let path = dir.join("bench.csv");
    let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    let rows = manifest.time("bench", || {
        bench::run_grid(&points, &opts, std::io::BufWriter::new(file))
    })?;
    manifest.output(&path)?;
    manifest.note("result.rows", rows.len());
    manifest.note("result.refused", rows.iter().filter(|r| r.refused).count());
    manifest.note("memory.allocator_peak_bytes", bench::peak_bytes());
    if let Some(rss) = bench::os_peak_rss_bytes() {
        manifest.note("memory.os_peak_rss_bytes", rss);
    }
    finish(&mut manifest, &s, &dir)?;
    println!("bench = {}", path.display());
    Ok(())
}

pub fn circuit_size(a: CircuitSizeArgs) -> Result<()> {
    let mut s = Settings::new(a.config.as_deref(), &known_keys("circuit-size"))?;
    let family = required(s.opt("family", a.family)?, "family")?;
    let kind = required(s.opt("kind", a.kind)?, "kind")?;
    let dim = required(s.opt("dim", a.dim)?, "dim")?;
    let relation_dim = s.get("relation_dim", a.relation_dim, dim)?;
    let e = required(s.opt("entities", a.entities)?, "entities")?;
    let r = required(s.opt("relations", a.relations)?, "relations")?;
    let dims = Dims::tucker(e, r, dim, relation_dim);
    println!("edges = {}", edges(family, kind, &dims));
    Ok(())
}

pub fn constraints_report(a: ConstraintsReportArgs) -> Result<()> {
    let mut s = settings("constraints-report", &a.common)?;
    let mut manifest = RunManifest::new("constraints-report");
    let path = PathBuf::from(required(
        s.opt("constraints", path_flag(&a.constraints))?,
        "constraints",
    )?);
    let allow = s.switch("allow_unconstrained", a.allow_unconstrained)?;
    let kg = load_kg(&mut s, &a.data, false, &mut manifest)?;
    let circuit = load_constraints(&path, &kg, allow, &mut manifest)?;
    print!("{}", circuit.report());
    let violations = kg.all_triples().filter(|t| !circuit.satisfies(t)).count();
    println!("violating_triples = {violations}");
    Ok(())
}
