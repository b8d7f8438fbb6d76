use super::*;
use crate::constraints::{ConstrainedModel, ConstraintCircuit};
use crate::kg_data::{KnowledgeGraph, LoadOptions, Triple, Vocabulary};
use crate::models::{param_shapes, Dims, Family, Model, ModelKind, Slot};
use crate::numeric::{gradient_check, DenseMatrix};
use crate::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dims_for(family: Family, e: usize, r: usize) -> Dims {
    match family {
        Family::Tucker => Dims::tucker(e, r, 3, 2),
        _ => Dims::new(e, r, 3),
    }
}

fn random_batch(e: usize, r: usize, n: usize, seed: u64) -> Vec<Triple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Triple::new(rng.random_range(0..e), rng.random_range(0..r), rng.random_range(0..e)))
        .collect()
}

fn flatten(m: &Model) -> Vec<f64> {
    m.params().iter().flat_map(|p| p.data().to_vec()).collect()
}

fn rebuild(template: &Model, flat: &[f64]) -> Model {
    let shapes = param_shapes(template.family(), template.kind(), template.dims());
    let mut off = 0;
    let params = shapes
        .iter()
        .map(|(_, r, c)| {
            let m = DenseMatrix::from_vec(*r, *c, flat[off..off + r * c].to_vec()).unwrap();
            off += r * c;
            m
        })
        .collect();
    Model::new(template.family(), template.kind(), *template.dims(), params).unwrap()
}

fn flat_grad(l: &Loss) -> Vec<f64> {
    l.grad.iter().flat_map(|g| g.data().to_vec()).collect()
}

/// `−Σ ω log p` with every conditional normalised by enumeration.
fn naive_pll(model: &Model, batch: &[Triple], w: PllWeights, circuit: Option<&ConstraintCircuit>) -> f64 {
    let mut total = 0.0;
    for t in batch {
        for target in Slot::ALL {
            let wt = w.get(target);
            if wt == 0.0 {
                continue;
            }
            let n = model.dims().size_of(target);
            let allowed = |u: usize| circuit.is_none_or(|c| c.satisfies(&target.with(t, u)));
            let lp = if model.kind() == ModelKind::EnergyBased {
                let raws: Vec<f64> = (0..n).map(|u| model.raw_score(&target.with(t, u)).unwrap()).collect();
                let m = raws.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + raws.iter().map(|r| (r - m).exp()).sum::<f64>().ln();
                raws[target.of(t)] - lse
            } else {
                let z: f64 = (0..n)
                    .filter(|&u| allowed(u))
                    .map(|u| model.score(&target.with(t, u)).unwrap())
                    .sum();
                model.score(t).unwrap().ln() - z.ln()
            };
            total -= wt * lp;
        }
    }
    total / batch.len() as f64
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn random_model(family: Family, kind: ModelKind, dims: Dims, seed: u64) -> Model {
    match kind {
        ModelKind::NonNegative => Model::random_uniform(family, kind, dims, seed, -1.0, 0.5).unwrap(),
        _ => Model::random_uniform(family, kind, dims, seed, -0.8, 0.8).unwrap(),
    }
}

#[test]
fn pll_gradients_match_finite_differences() {
    for family in Family::ALL {
        for kind in ModelKind::ALL {
            let dims = dims_for(family, 6, 3);
            let m = random_model(family, kind, dims, 11);
            let batch = random_batch(6, 3, 5, 2);
            let w = PllWeights::new(0.7, 1.3, 1.0);
            let opts = PllOptions {
                weights: w,
                ..PllOptions::default()
            };
            let rep = gradient_check(
                |p| {
                    let l = pll_loss(&rebuild(&m, p), &batch, &opts, None)?;
                    Ok((l.value, flat_grad(&l)))
                },
                &flatten(&m),
                1e-5,
                3,
            )
            .unwrap();
            assert!(rep.max_relative_error < 1e-4, "{family} {kind}: {rep:?}");
        }
    }
}

#[test]
fn mle_gradients_match_finite_differences() {
    for family in Family::ALL {
        for kind in [ModelKind::NonNegative, ModelKind::Squared] {
            let dims = dims_for(family, 6, 3);
            let m = random_model(family, kind, dims, 21);
            let batch = random_batch(6, 3, 5, 4);
            let rep = gradient_check(
                |p| {
                    let l = mle_loss(&rebuild(&m, p), &batch, None)?;
                    Ok((l.value, flat_grad(&l)))
                },
                &flatten(&m),
                1e-5,
                5,
            )
            .unwrap();
            assert!(rep.max_relative_error < 1e-4, "{family} {kind}: {rep:?}");
        }
    }
}

fn toy_circuit() -> ConstraintCircuit {
    // entities 0..3 are of one type, 3..6 of another
    ConstraintCircuit::from_groups(
        6,
        3,
        vec![
            (vec![0, 2], vec![0, 1, 2], vec![3, 4, 5]),
            (vec![1], vec![3, 4, 5], vec![0, 1, 2, 3]),
        ],
    )
    .unwrap()
}

fn satisfying_batch(c: &ConstraintCircuit, n: usize, seed: u64) -> Vec<Triple> {
    random_batch(6, 3, 400, seed)
        .into_iter()
        .filter(|t| c.satisfies(t))
        .take(n)
        .collect()
}

#[test]
fn constrained_losses_match_oracles_and_gradients() {
    let c = toy_circuit();
    let batch = satisfying_batch(&c, 6, 9);
    assert_eq!(batch.len(), 6);
    for family in Family::ALL {
        for kind in [ModelKind::NonNegative, ModelKind::Squared] {
            let m = random_model(family, kind, dims_for(family, 6, 3), 31);
            let w = PllWeights::default();
            let opts = PllOptions::default();
            let l = pll_loss(&m, &batch, &opts, Some(&c)).unwrap();
            assert!(
                rel(l.value, naive_pll(&m, &batch, w, Some(&c))) < 1e-9,
                "{family} {kind}"
            );
            let rep = gradient_check(
                |p| {
                    let l = pll_loss(&rebuild(&m, p), &batch, &opts, Some(&c))?;
                    Ok((l.value, flat_grad(&l)))
                },
                &flatten(&m),
                1e-5,
                1,
            )
            .unwrap();
            assert!(rep.max_relative_error < 1e-4, "pll {family} {kind}: {rep:?}");

            let cm = ConstrainedModel::new(m.clone(), c.clone()).unwrap();
            let want = -batch.iter().map(|t| cm.log_prob(t).unwrap()).sum::<f64>() / batch.len() as f64;
            let l = mle_loss(&m, &batch, Some(&c)).unwrap();
            assert!(rel(l.value, want) < 1e-9, "{family} {kind}");
            let rep = gradient_check(
                |p| {
                    let l = mle_loss(&rebuild(&m, p), &batch, Some(&c))?;
                    Ok((l.value, flat_grad(&l)))
                },
                &flatten(&m),
                1e-5,
                1,
            )
            .unwrap();
            assert!(rep.max_relative_error < 1e-4, "mle {family} {kind}: {rep:?}");
        }
    }
}

#[test]
fn constrained_training_rejects_violations_and_ebm() {
    let c = toy_circuit();
    let m = random_model(Family::Cp, ModelKind::Squared, Dims::new(6, 3, 3), 1);
    let bad = Triple::new(3, 0, 3);
    assert!(!c.satisfies(&bad));
    let err = pll_loss(&m, &[bad], &PllOptions::default(), Some(&c)).unwrap_err();
    assert!(matches!(err, Error::ConstraintViolation { triple } if triple == bad));
    assert!(matches!(
        mle_loss(&m, &[bad], Some(&c)),
        Err(Error::ConstraintViolation { .. })
    ));
    let ebm = m.with_kind(ModelKind::EnergyBased).unwrap();
    let good = satisfying_batch(&c, 1, 2);
    assert!(matches!(
        pll_loss(&ebm, &good, &PllOptions::default(), Some(&c)),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn efficient_pll_equals_naive() {
    for family in Family::ALL {
        for kind in ModelKind::ALL {
            let m = random_model(family, kind, dims_for(family, 100, 4), 41);
            let batch = random_batch(100, 4, 16, 6);
            let w = PllWeights::new(1.0, 0.5, 2.0);
            let opts = PllOptions {
                weights: w,
                ..PllOptions::default()
            };
            let l = pll_loss(&m, &batch, &opts, None).unwrap();
            let naive = naive_pll(&m, &batch, w, None);
            assert!(rel(l.value, naive) < 1e-9, "{family} {kind}: {} vs {naive}", l.value);
        }
    }
}

#[test]
fn blocked_logits_do_not_change_values() {
    for family in Family::ALL {
        let m = random_model(family, ModelKind::EnergyBased, dims_for(family, 50, 3), 5);
        let batch = random_batch(50, 3, 7, 8);
        let full = pll_loss(&m, &batch, &PllOptions::default(), None).unwrap();
        for cap in [1, 8 * 7 * 3, 8 * 7 * 13] {
            let opts = PllOptions {
                logits_cap: cap,
                ..PllOptions::default()
            };
            let b = pll_loss(&m, &batch, &opts, None).unwrap();
            assert!(rel(full.value, b.value) < 1e-12, "{family} cap {cap}");
            for (x, y) in full.grad.iter().zip(&b.grad) {
                assert!(x.max_abs_diff(y) < 1e-12, "{family} cap {cap}");
            }
        }
    }
}

#[test]
fn uniform_model_object_term_is_log_e() {
    for kind in ModelKind::ALL {
        let m = Model::constant(Family::Cp, kind, Dims::new(3, 2, 2), 1.0).unwrap();
        let opts = PllOptions {
            weights: PllWeights::new(0.0, 0.0, 1.0),
            ..PllOptions::default()
        };
        let batch = random_batch(3, 2, 4, 1);
        let l = pll_loss(&m, &batch, &opts, None).unwrap();
        assert!((l.value - 3f64.ln()).abs() < 1e-12, "{kind}");
    }
}

#[test]
fn zero_weights_and_empty_batch_are_errors() {
    let m = Model::constant(Family::Cp, ModelKind::Squared, Dims::new(3, 2, 2), 1.0).unwrap();
    let opts = PllOptions {
        weights: PllWeights::new(0.0, 0.0, 0.0),
        ..PllOptions::default()
    };
    assert!(matches!(
        pll_loss(&m, &[Triple::new(0, 0, 0)], &opts, None),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        pll_loss(&m, &[], &PllOptions::default(), None),
        Err(Error::Argument(_))
    ));
}

#[test]
fn zero_mass_context_names_the_triple() {
    // object factor all zero: every conditional over objects has zero mass
    let dims = Dims::new(2, 1, 1);
    let p = vec![
        DenseMatrix::filled(2, 1, 1.0),
        DenseMatrix::filled(1, 1, 1.0),
        DenseMatrix::filled(2, 1, 0.0),
    ];
    let m = Model::new(Family::Cp, ModelKind::Squared, dims, p).unwrap();
    let err = pll_loss(&m, &[Triple::new(1, 0, 0)], &PllOptions::default(), None).unwrap_err();
    match err {
        Error::DegenerateContext(msg) => assert!(msg.contains("subject: 1"), "{msg}"),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn mle_examples() {
    let m = Model::constant(Family::Cp, ModelKind::NonNegative, Dims::new(3, 2, 2), 1.0).unwrap();
    let l = mle_loss(&m, &random_batch(3, 2, 5, 0), None).unwrap();
    assert!((l.value - 18f64.ln()).abs() < 1e-12);

    let ebm = m.with_kind(ModelKind::EnergyBased).unwrap();
    assert!(matches!(
        mle_loss(&ebm, &[Triple::new(0, 0, 0)], None),
        Err(Error::Unsupported(_))
    ));

    // scaling every relation embedding by c leaves the likelihood unchanged
    for kind in [ModelKind::NonNegative, ModelKind::Squared] {
        let m = random_model(Family::Cp, kind, Dims::new(5, 3, 3), 3);
        let batch = random_batch(5, 3, 8, 1);
        let base = mle_loss(&m, &batch, None).unwrap().value;
        let mut scaled = m.clone();
        let w = &mut scaled.params_mut()[1];
        match kind {
            ModelKind::NonNegative => w.data_mut().iter_mut().for_each(|v| *v += 2.5f64.ln()),
            _ => w.scale(2.5),
        }
        let after = mle_loss(&scaled, &batch, None).unwrap().value;
        assert!((base - after).abs() < 1e-12, "{kind}: {base} {after}");
    }

    let m = random_model(Family::Complex, ModelKind::NonNegative, Dims::new(4, 2, 2), 8);
    let batch = random_batch(4, 2, 10, 3);
    let z = m.brute_force_partition().unwrap();
    let want = -batch.iter().map(|t| (m.score(t).unwrap() / z).ln()).sum::<f64>() / 10.0;
    assert!(rel(mle_loss(&m, &batch, None).unwrap().value, want) < 1e-9);
    assert!(rel(mean_log_likelihood(&m, &batch, None).unwrap(), -want) < 1e-9);
}

#[test]
fn adam_step_matches_hand_formula() {
    // f(θ) = (θ − 3)², θ₀ = 1, g = −4
    let mut w = vec![DenseMatrix::filled(1, 1, 1.0)];
    let g = vec![DenseMatrix::filled(1, 1, 2.0 * (1.0 - 3.0))];
    let p = AdamParams::default();
    let mut st = OptimizerState::new(&w, p);
    st.step(&mut w, &g, 0.1).unwrap();
    let m = (1.0 - p.beta1) * -4.0;
    let v = (1.0 - p.beta2) * 16.0;
    let mhat = m / (1.0 - p.beta1);
    let vhat = v / (1.0 - p.beta2);
    let want = 1.0 - 0.1 * mhat / (vhat.sqrt() + p.epsilon);
    assert_eq!(w[0].get(0, 0), want);
    assert_eq!(st.step, 1);
    let m2 = p.beta1 * m + (1.0 - p.beta1) * -4.0;
    let v2 = p.beta2 * v + (1.0 - p.beta2) * 16.0;
    let want2 = want - 0.1 * (m2 / (1.0 - p.beta1.powi(2))) / ((v2 / (1.0 - p.beta2.powi(2))).sqrt() + p.epsilon);
    st.step(&mut w, &g, 0.1).unwrap();
    assert_eq!(w[0].get(0, 0), want2);
}

#[test]
fn early_stopping_trace() {
    let mut s = EarlyStopping::new(3);
    let seq = [0.2, 0.3, 0.29, 0.28, 0.27];
    let got: Vec<StopDecision> = seq.iter().map(|&m| s.observe(m)).collect();
    assert_eq!(
        got,
        vec![
            StopDecision::Improved,
            StopDecision::Improved,
            StopDecision::Continue,
            StopDecision::Continue,
            StopDecision::Stop
        ]
    );
    assert_eq!(s.best_epoch(), 2);
    assert_eq!(s.best(), 0.3);
}

#[test]
fn init_schemes() {
    let dims = Dims::new(3, 2, 2);
    let g = InitScheme::Gaussian { sigma: 1e-3 };
    let a = init_params(Family::Cp, ModelKind::EnergyBased, dims, &g, 5).unwrap();
    let b = init_params(Family::Cp, ModelKind::EnergyBased, dims, &g, 5).unwrap();
    assert_eq!(a.params(), b.params());

    let mu = lognormal_mu(Family::Cp, &Dims::new(10, 2, 1000), 1e-3);
    assert!((mu - (-(1000f64).ln() / 3.0 - 5e-7)).abs() < 1e-15);
    assert!((mu + std::f64::consts::LN_10).abs() < 1e-5);
    let mu = lognormal_mu(Family::Complex, &Dims::new(10, 2, 1000), 1e-3);
    assert!((mu - (-(2000f64).ln() / 3.0 - 5e-7)).abs() < 1e-15);

    let d = init_params(
        Family::Cp,
        ModelKind::NonNegative,
        dims,
        &InitScheme::Dirichlet { alpha: 1e3 },
        1,
    )
    .unwrap();
    for p in d.params() {
        for j in 0..p.cols() {
            let s: f64 = (0..p.rows()).map(|i| p.get(i, j).exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
    let t = init_params(
        Family::Tucker,
        ModelKind::NonNegative,
        Dims::tucker(3, 2, 2, 2),
        &InitScheme::Dirichlet { alpha: 1e3 },
        1,
    )
    .unwrap();
    let core: f64 = t.params()[2].data().iter().map(|v| v.exp()).sum();
    assert!((core - 1.0).abs() < 1e-12);

    for family in Family::ALL {
        let dims = dims_for(family, 30, 3);
        let m = init_params(
            family,
            ModelKind::Squared,
            dims,
            &InitScheme::default_for(ModelKind::Squared),
            2,
        )
        .unwrap();
        assert!(m.params().iter().all(|p| p.data().iter().all(|v| *v > 0.0)));
        let s = m.raw_score(&Triple::new(0, 0, 1)).unwrap();
        assert!(s > 0.1 && s < 10.0, "{family}: {s}");
    }

    let err = init_params(
        Family::Cp,
        ModelKind::Squared,
        dims,
        &InitScheme::Dirichlet { alpha: 1e3 },
        0,
    );
    assert!(matches!(err, Err(Error::Config(_))));
    let err = init_params(
        Family::Cp,
        ModelKind::NonNegative,
        dims,
        &InitScheme::LogNormal { sigma: 1e-3 },
        0,
    );
    assert!(matches!(err, Err(Error::Config(_))));
    let err = init_params(
        Family::Cp,
        ModelKind::NonNegative,
        dims,
        &InitScheme::Distilled("x".into()),
        0,
    );
    assert!(matches!(err, Err(Error::Config(_))));
}

#[test]
fn config_validation() {
    let mut c = TrainConfig::new(ModelKind::NonNegative);
    assert_eq!(c.learning_rate, 1e-2);
    assert_eq!(TrainConfig::new(ModelKind::Squared).learning_rate, 1e-3);
    assert!(c.validate(ModelKind::NonNegative).is_ok());
    c.objective = Objective::Mle;
    c.init = InitScheme::Gaussian { sigma: 1e-3 };
    assert!(matches!(c.validate(ModelKind::EnergyBased), Err(Error::Unsupported(_))));
    let mut c = TrainConfig::new(ModelKind::Squared);
    c.precision = Precision::Single;
    assert!(matches!(c.validate(ModelKind::Squared), Err(Error::Config(_))));
}

/// Two clusters of entities; each predicate links one cluster to the other.
fn structured_kg(seed: u64) -> KnowledgeGraph {
    let e = 20;
    let names: Vec<String> = (0..e).map(|i| format!("e{i}")).collect();
    let vocab = Vocabulary::from_names(names, vec!["r0".into(), "r1".into()]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all = Vec::new();
    for _ in 0..260 {
        let r = rng.random_range(0..2);
        let s = rng.random_range(0..10) + 10 * r;
        let o = rng.random_range(0..10) + 10 * (1 - r);
        all.push(Triple::new(s, r, o));
    }
    all.sort();
    all.dedup();
    let valid = all.split_off(all.len() - 15);
    KnowledgeGraph::from_splits(vocab, all, valid, Vec::new(), LoadOptions::default()).unwrap()
}

#[test]
fn fit_is_deterministic_and_learns() {
    let kg = structured_kg(1);
    let dims = Dims::new(kg.num_entities(), kg.num_predicates(), 4);
    let mut cfg = TrainConfig::new(ModelKind::Squared);
    cfg.batch_size = 16;
    cfg.max_epochs = 40;
    cfg.patience = 10;
    cfg.learning_rate = 5e-2;
    cfg.seed = 3;
    let init = init_params(Family::Cp, ModelKind::Squared, dims, &cfg.init, 3).unwrap();
    let (a, la) = fit(init.clone(), &kg, &cfg, None).unwrap();
    let (b, lb) = fit(init.clone(), &kg, &cfg, None).unwrap();
    assert_eq!(a.params(), b.params());
    let strip = |l: &TrainingLog| -> Vec<(usize, f64, f64)> {
        l.epochs
            .iter()
            .map(|r| (r.epoch, r.objective_value, r.valid_mrr))
            .collect()
    };
    assert_eq!(strip(&la), strip(&lb));
    let first = la.epochs.first().unwrap().objective_value;
    let last = la.epochs.last().unwrap().objective_value;
    assert!(last < first, "{first} -> {last}");
    assert!(la.best_mrr > 0.2, "{la:?}");
    assert_eq!(la.to_tsv().lines().count(), la.epochs.len());
    assert_eq!(la.to_tsv().lines().next().unwrap().split('\t').count(), 5);
}

#[test]
fn mle_fit_log_likelihood_rises() {
    let kg = structured_kg(2);
    let dims = Dims::new(kg.num_entities(), kg.num_predicates(), 4);
    let mut cfg = TrainConfig::new(ModelKind::Squared);
    cfg.objective = Objective::Mle;
    cfg.batch_size = 50;
    cfg.max_epochs = 1;
    cfg.learning_rate = 1e-3;
    cfg.seed = 1;
    let mut model = init_params(Family::Cp, ModelKind::Squared, dims, &cfg.init, 1).unwrap();
    let mut lls = vec![mean_log_likelihood(&model, &kg.train, None).unwrap()];
    for epoch in 0..10 {
        cfg.seed = epoch;
        cfg.valid_subsample = Some(0);
        model = fit(model, &kg, &cfg, None).unwrap().0;
        lls.push(mean_log_likelihood(&model, &kg.train, None).unwrap());
    }
    for w in lls.windows(2) {
        assert!(w[1] >= w[0] - 0.01 * w[0].abs(), "{lls:?}");
    }
    assert!(lls.last().unwrap() > &lls[0], "{lls:?}");
}

#[test]
fn fit_rejects_mismatched_vocab() {
    let kg = structured_kg(1);
    let m = Model::constant(Family::Cp, ModelKind::Squared, Dims::new(5, 2, 2), 1.0).unwrap();
    assert!(matches!(
        fit(m, &kg, &TrainConfig::new(ModelKind::Squared), None),
        Err(Error::Vocab(_))
    ));
}

#[test]
fn distillation_preserves_nonnegative_rankings() {
    let dims = Dims::new(8, 3, 4);
    let mut flip = ChaCha8Rng::seed_from_u64(4);
    let positive = Model::random_uniform(Family::Cp, ModelKind::EnergyBased, dims, 2, 0.0, 1.0).unwrap();
    let sq = distill(&positive).unwrap();
    assert_eq!(sq.kind(), ModelKind::Squared);
    let queries: Vec<DistillQuery> = (0..50)
        .map(|_| DistillQuery {
            target: if flip.random::<bool>() {
                Slot::Object
            } else {
                Slot::Subject
            },
            context: Triple::new(
                flip.random_range(0..8),
                flip.random_range(0..3),
                flip.random_range(0..8),
            ),
        })
        .collect();
    let triples = random_batch(8, 3, 20, 1);
    let rep = distill_report(&positive, &sq, &triples, &queries).unwrap();
    assert_eq!(rep.nonneg_fraction, 1.0);
    assert_eq!(rep.checked, 50);
    assert!(rep.skipped.is_empty() && rep.agreement());
    assert_eq!(rep.min_tau, Some(1.0));

    let mixed = Model::random_uniform(Family::Complex, ModelKind::EnergyBased, dims, 2, -1.0, 1.0).unwrap();
    let sq = distill(&mixed).unwrap();
    let rep = distill_report(&mixed, &sq, &triples, &queries).unwrap();
    assert!(!rep.skipped.is_empty());
    assert_eq!(rep.checked + rep.skipped.len(), 50);
    assert!(rep.agreement());
    assert!(rep.nonneg_fraction < 1.0);

    let nn = positive.with_kind(ModelKind::NonNegative).unwrap();
    assert!(matches!(distill(&nn), Err(Error::Checkpoint(_))));
    let r = Model::constant(Family::Rescal, ModelKind::EnergyBased, dims, 1.0).unwrap();
    assert!(matches!(distill(&r), Err(Error::Checkpoint(_))));
}

#[test]
fn distilled_init_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let dims = Dims::new(5, 2, 3);
    let ebm = Model::random_uniform(Family::Complex, ModelKind::EnergyBased, dims, 1, -1.0, 1.0).unwrap();
    crate::models::save_checkpoint(&path, &ebm, None).unwrap();
    let m = init_params(
        Family::Complex,
        ModelKind::Squared,
        dims,
        &InitScheme::Distilled(path.clone()),
        0,
    )
    .unwrap();
    assert_eq!(m.params(), ebm.params());
    let err = init_params(Family::Cp, ModelKind::Squared, dims, &InitScheme::Distilled(path), 0);
    assert!(matches!(err, Err(Error::Checkpoint(_))));
}
