//! Pseudo-log-likelihood and exact maximum-likelihood objectives with
//! analytic gradients.
//!
//! Energy-based models normalise over dense `|B| × |targets|` logits
//! (blocked over target rows to respect a memory cap). Circuit models
//! normalise every query with one dot product against cached column sums or
//! one quadratic form against a cached Gram matrix.

use std::borrow::Cow;

use crate::constraints::ConstraintCircuit;
use crate::error::{Error, Result};
use crate::kg_data::Triple;
use crate::models::circuit::{self, Adj, Members, Stat};
use crate::models::view::{View, ViewGrad};
use crate::models::{Model, ModelKind, Slot};
use crate::numeric::{axpy_slice, dot, gemm, logsumexp_unchecked, DenseMatrix};

/// Weights `ω_s, ω_r, ω_o` of the three conditional terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PllWeights {
    pub subject: f64,
    pub predicate: f64,
    pub object: f64,
}

impl Default for PllWeights {
    fn default() -> Self {
        PllWeights {
            subject: 1.0,
            predicate: 1.0,
            object: 1.0,
        }
    }
}

impl PllWeights {
    pub fn new(subject: f64, predicate: f64, object: f64) -> Self {
        PllWeights {
            subject,
            predicate,
            object,
        }
    }

    pub fn get(&self, slot: Slot) -> f64 {
        match slot {
            Slot::Subject => self.subject,
            Slot::Predicate => self.predicate,
            Slot::Object => self.object,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.subject, self.predicate, self.object];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config(format!("PLL weights must be finite and >= 0, got {w:?}")));
        }
        if w.iter().all(|x| *x == 0.0) {
            return Err(Error::Config("PLL weights are all zero".into()));
        }
        Ok(())
    }
}

/// Default cap on the dense logits buffer of energy-based PLL.
pub const DEFAULT_LOGITS_CAP: usize = 256 << 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PllOptions {
    pub weights: PllWeights,
    /// Bytes allowed for one logits block (`|B| × rows × 8`).
    pub logits_cap: usize,
}

impl Default for PllOptions {
    fn default() -> Self {
        PllOptions {
            weights: PllWeights::default(),
            logits_cap: DEFAULT_LOGITS_CAP,
        }
    }
}

/// Objective value and gradient with respect to the stored parameters.
#[derive(Clone, Debug)]
pub struct Loss {
    pub value: f64,
    pub grad: Vec<DenseMatrix>,
}

/// Candidate support of each query: everything, or a constraint circuit.
#[derive(Clone, Copy)]
enum Support<'a> {
    Full,
    Constrained(&'a ConstraintCircuit),
}

impl<'a> Support<'a> {
    fn num_groups(&self) -> usize {
        match self {
            Support::Full => 1,
            Support::Constrained(c) => c.groups().len(),
        }
    }

    fn group(&self, predicate: usize) -> usize {
        match self {
            Support::Full => 0,
            Support::Constrained(c) => c.group_index(predicate),
        }
    }

    fn members(&self, group: usize, slot: Slot) -> Members<'a> {
        match self {
            Support::Full => Members::All,
            Support::Constrained(c) => {
                let g = &c.groups()[group];
                match slot {
                    Slot::Subject => Members::Some(&g.subjects),
                    Slot::Predicate => Members::Some(&g.predicates),
                    Slot::Object => Members::Some(&g.objects),
                }
            }
        }
    }

    fn allowed_predicates(&self, t: &Triple, num: usize) -> Vec<usize> {
        match self {
            Support::Full => (0..num).collect(),
            Support::Constrained(c) => (0..num)
                .filter(|&r| {
                    let g = c.group_of(r);
                    g.allows_subject(t.subject) && g.allows_object(t.object)
                })
                .collect(),
        }
    }

    fn check(&self, batch: &[Triple]) -> Result<()> {
        if let Support::Constrained(c) = self {
            if let Some(t) = batch.iter().find(|t| !c.satisfies(t)) {
                return Err(Error::ConstraintViolation { triple: *t });
            }
        }
        Ok(())
    }
}

fn support(constraints: Option<&ConstraintCircuit>) -> Support<'_> {
    constraints.map_or(Support::Full, Support::Constrained)
}

fn check_batch(model: &Model, batch: &[Triple]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    batch.iter().try_for_each(|t| model.check_triple(t))
}

/// Negative weighted pseudo-log-likelihood averaged over the batch.
pub fn pll_loss(
    model: &Model,
    batch: &[Triple],
    options: &PllOptions,
    constraints: Option<&ConstraintCircuit>,
) -> Result<Loss> {
    options.weights.validate()?;
    check_batch(model, batch)?;
    if constraints.is_some() && !model.kind().is_circuit() {
        return Err(Error::Unsupported(
            "constraints apply to non-negative or squared models only".into(),
        ));
    }
    let sup = support(constraints);
    sup.check(batch)?;
    let view = model.view();
    let mut g = view.zero_grad();
    let mut total = 0.0;
    for target in Slot::ALL {
        let w = options.weights.get(target);
        if w == 0.0 {
            continue;
        }
        let scale = w / batch.len() as f64;
        let sum = if target == Slot::Predicate {
            predicate_term(model, &view, batch, scale, sup, &mut g)?
        } else if model.kind() == ModelKind::EnergyBased {
            dense_term(&view, target, batch, scale, options.logits_cap, &mut g)
        } else {
            circuit_term(model, &view, target, batch, scale, sup, &mut g)?
        };
        total += w * sum;
    }
    let value = total / batch.len() as f64;
    drop(view);
    Ok(Loss {
        value,
        grad: model.fold_grad(g),
    })
}

/// Softmax normalisation over dense logits; returns `Σ_b −log p`.
fn dense_term(view: &View<'_>, target: Slot, batch: &[Triple], scale: f64, cap: usize, g: &mut ViewGrad) -> f64 {
    let f = view.factor(target);
    let (n, rows, b) = (f.cols(), f.rows(), batch.len());
    let ti = target.index();
    let mut x = DenseMatrix::zeros(b, n);
    for (i, t) in batch.iter().enumerate() {
        view.query_into(target, t, x.row_mut(i));
    }
    let truth: Vec<usize> = batch.iter().map(|t| target.of(t)).collect();
    let mut dx = DenseMatrix::zeros(b, n);
    let mut loss = 0.0;
    let block = (cap / (8 * b)).max(1);
    if block >= rows {
        let mut l = DenseMatrix::zeros(b, rows);
        gemm(1.0, &x, false, f, true, 0.0, &mut l);
        for i in 0..b {
            let row = l.row_mut(i);
            let lse = logsumexp_unchecked(row);
            loss += lse - row[truth[i]];
            for v in row.iter_mut() {
                *v = scale * (*v - lse).exp();
            }
            row[truth[i]] -= scale;
        }
        gemm(1.0, &l, false, f, false, 0.0, &mut dx);
        gemm(1.0, &l, true, &x, false, 1.0, &mut g.slot[ti]);
    } else {
        let mut max = vec![f64::NEG_INFINITY; b];
        let mut sum = vec![0.0; b];
        let blocks: Vec<(usize, usize)> = (0..rows)
            .step_by(block)
            .map(|r0| (r0, (r0 + block).min(rows)))
            .collect();
        let sub = |r0: usize, r1: usize| {
            DenseMatrix::from_vec(r1 - r0, n, f.data()[r0 * n..r1 * n].to_vec()).expect("block shape")
        };
        for &(r0, r1) in &blocks {
            let fb = sub(r0, r1);
            let mut l = DenseMatrix::zeros(b, r1 - r0);
            gemm(1.0, &x, false, &fb, true, 0.0, &mut l);
            for i in 0..b {
                let row = l.row(i);
                let m = row.iter().copied().fold(max[i], f64::max);
                if m == f64::NEG_INFINITY {
                    continue;
                }
                sum[i] = sum[i] * (max[i] - m).exp() + row.iter().map(|v| (v - m).exp()).sum::<f64>();
                max[i] = m;
            }
        }
        let lse: Vec<f64> = (0..b).map(|i| max[i] + sum[i].ln()).collect();
        for i in 0..b {
            loss += lse[i] - dot(f.row(truth[i]), x.row(i));
        }
        for &(r0, r1) in &blocks {
            let fb = sub(r0, r1);
            let mut l = DenseMatrix::zeros(b, r1 - r0);
            gemm(1.0, &x, false, &fb, true, 0.0, &mut l);
            for i in 0..b {
                for v in l.row_mut(i) {
                    *v = scale * (*v - lse[i]).exp();
                }
            }
            gemm(1.0, &l, false, &fb, false, 1.0, &mut dx);
            let mut dfb = DenseMatrix::zeros(r1 - r0, n);
            gemm(1.0, &l, true, &x, false, 0.0, &mut dfb);
            g.slot[ti].data_mut()[r0 * n..r1 * n]
                .iter_mut()
                .zip(dfb.data())
                .for_each(|(a, d)| *a += d);
        }
        for i in 0..b {
            axpy_slice(dx.row_mut(i), -scale, f.row(truth[i]));
            axpy_slice(g.slot[ti].row_mut(truth[i]), -scale, x.row(i));
        }
    }
    for (i, t) in batch.iter().enumerate() {
        view.query_backward(target, t, dx.row(i), g);
    }
    loss
}

/// Accumulated adjoint of one group's target statistic.
enum Acc {
    Sum(Vec<f64>),
    Gram(DenseMatrix),
}

/// Entity-target term of a circuit model; returns `Σ_b −log p`.
fn circuit_term(
    model: &Model,
    view: &View<'_>,
    target: Slot,
    batch: &[Triple],
    scale: f64,
    sup: Support<'_>,
    g: &mut ViewGrad,
) -> Result<f64> {
    let squared = model.squared();
    let ti = target.index();
    let f = view.factor(target);
    let n = f.cols();
    let ng = sup.num_groups();
    let mut stats: Vec<Option<Cow<'_, Stat>>> = (0..ng).map(|_| None).collect();
    let mut acc: Vec<Option<Acc>> = (0..ng).map(|_| None).collect();
    let mut loss = 0.0;
    let mut x = vec![0.0; n];
    let mut dx = vec![0.0; n];
    for t in batch {
        let gi = sup.group(t.predicate);
        if stats[gi].is_none() {
            stats[gi] = Some(match sup {
                Support::Full => Cow::Borrowed(&model.full_stats()[ti]),
                Support::Constrained(_) => {
                    Cow::Owned(circuit::slot_stat(view, target, sup.members(gi, target), squared))
                }
            });
            acc[gi] = Some(if squared {
                Acc::Gram(DenseMatrix::zeros(n, n))
            } else {
                Acc::Sum(vec![0.0; n])
            });
        }
        view.query_into(target, t, &mut x);
        let ft = f.row(target.of(t));
        let raw = dot(ft, &x);
        let stat = stats[gi].as_deref().expect("initialised");
        match (stat, acc[gi].as_mut().expect("initialised")) {
            (Stat::Gram(gm), Acc::Gram(dg)) => {
                let gx = gm.matvec(&x);
                let zq = dot(&x, &gx);
                if raw == 0.0 || !(zq > 0.0) || !zq.is_finite() {
                    return Err(Error::DegenerateContext(format!(
                        "triple {t:?} has zero mass for the {target:?} conditional"
                    )));
                }
                loss += zq.ln() - 2.0 * raw.abs().ln();
                for i in 0..n {
                    dx[i] = scale * (2.0 * gx[i] / zq - 2.0 * ft[i] / raw);
                }
                axpy_slice(g.slot[ti].row_mut(target.of(t)), -2.0 * scale / raw, &x);
                let s = scale / zq;
                for i in 0..n {
                    let xi = s * x[i];
                    if xi != 0.0 {
                        axpy_slice(dg.row_mut(i), xi, &x);
                    }
                }
            }
            (Stat::Sum(cs), Acc::Sum(ds)) => {
                let zq = dot(cs, &x);
                if !(raw > 0.0) || !(zq > 0.0) || !zq.is_finite() {
                    return Err(Error::DegenerateContext(format!(
                        "triple {t:?} has zero mass for the {target:?} conditional"
                    )));
                }
                loss += zq.ln() - raw.ln();
                for i in 0..n {
                    dx[i] = scale * (cs[i] / zq - ft[i] / raw);
                }
                axpy_slice(g.slot[ti].row_mut(target.of(t)), -scale / raw, &x);
                axpy_slice(ds, scale / zq, &x);
            }
            _ => unreachable!("statistic and accumulator kinds agree"),
        }
        view.query_backward(target, t, &dx, g);
    }
    for (gi, a) in acc.into_iter().enumerate() {
        let Some(a) = a else { continue };
        let adj = match a {
            Acc::Sum(v) => Adj::Sum(v),
            Acc::Gram(m) => Adj::Gram(m),
        };
        circuit::pullback(f, &adj, sup.members(gi, target), 1.0, &mut g.slot[ti]);
    }
    Ok(loss)
}

/// Predicate-target term by enumeration; returns `Σ_b −log p`.
fn predicate_term(
    model: &Model,
    view: &View<'_>,
    batch: &[Triple],
    scale: f64,
    sup: Support<'_>,
    g: &mut ViewGrad,
) -> Result<f64> {
    let bf = view.factor(Slot::Predicate);
    let n = bf.cols();
    let mut loss = 0.0;
    let mut x = vec![0.0; n];
    let mut dx = vec![0.0; n];
    for t in batch {
        view.query_into(Slot::Predicate, t, &mut x);
        let allowed = sup.allowed_predicates(t, bf.rows());
        let raws: Vec<f64> = allowed.iter().map(|&r| dot(bf.row(r), &x)).collect();
        let pos = allowed
            .iter()
            .position(|&r| r == t.predicate)
            .expect("true predicate allowed");
        let raw_true = raws[pos];
        let mut draw = vec![0.0; raws.len()];
        match model.kind() {
            ModelKind::EnergyBased => {
                let lse = logsumexp_unchecked(&raws);
                loss += lse - raw_true;
                for (d, r) in draw.iter_mut().zip(&raws) {
                    *d = scale * (r - lse).exp();
                }
                draw[pos] -= scale;
            }
            ModelKind::NonNegative => {
                let z: f64 = raws.iter().sum();
                if !(raw_true > 0.0) || !(z > 0.0) {
                    return Err(Error::DegenerateContext(format!(
                        "triple {t:?} has zero mass for the predicate conditional"
                    )));
                }
                loss += z.ln() - raw_true.ln();
                draw.iter_mut().for_each(|d| *d = scale / z);
                draw[pos] -= scale / raw_true;
            }
            ModelKind::Squared => {
                let z: f64 = raws.iter().map(|r| r * r).sum();
                if raw_true == 0.0 || !(z > 0.0) {
                    return Err(Error::DegenerateContext(format!(
                        "triple {t:?} has zero mass for the predicate conditional"
                    )));
                }
                loss += z.ln() - 2.0 * raw_true.abs().ln();
                for (d, r) in draw.iter_mut().zip(&raws) {
                    *d = scale * 2.0 * r / z;
                }
                draw[pos] -= scale * 2.0 / raw_true;
            }
        }
        dx.fill(0.0);
        for (&r, &d) in allowed.iter().zip(&draw) {
            if d != 0.0 {
                axpy_slice(&mut dx, d, bf.row(r));
                axpy_slice(g.slot[1].row_mut(r), d, &x);
            }
        }
        view.query_backward(Slot::Predicate, t, &dx, g);
    }
    Ok(loss)
}

/// `−(1/|B|) Σ log φ(t) + log Z` (or `log Z_K` under constraints).
pub fn mle_loss(model: &Model, batch: &[Triple], constraints: Option<&ConstraintCircuit>) -> Result<Loss> {
    if !model.kind().is_circuit() {
        return Err(Error::Unsupported(
            "exact maximum likelihood needs a tractable partition function; \
             for energy-based models it requires summing over |E|²·|R| triples"
                .into(),
        ));
    }
    check_batch(model, batch)?;
    let sup = support(constraints);
    sup.check(batch)?;
    let view = model.view();
    let squared = model.squared();
    let mut g = view.zero_grad();

    let mut groups: Vec<([Members<'_>; 3], Option<[Stat; 3]>)> = Vec::new();
    for gi in 0..sup.num_groups() {
        let members = Slot::ALL.map(|s| sup.members(gi, s));
        let own = match sup {
            Support::Full => None,
            Support::Constrained(_) => {
                Some(Slot::ALL.map(|s| circuit::slot_stat(&view, s, members[s.index()], squared)))
            }
        };
        groups.push((members, own));
    }
    let full = model.full_stats();
    let full = [&full[0], &full[1], &full[2]];
    fn stats_of<'s>(own: &'s Option<[Stat; 3]>, full: [&'s Stat; 3]) -> [&'s Stat; 3] {
        match own {
            Some(s) => [&s[0], &s[1], &s[2]],
            None => full,
        }
    }
    let z: f64 = groups
        .iter()
        .map(|(_, own)| circuit::contract(&view, squared, stats_of(own, full)))
        .sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::DegenerateModel(format!("partition function is {z}")));
    }
    for (members, own) in &groups {
        circuit::backward(&view, squared, stats_of(own, full), *members, 1.0 / z, &mut g);
    }

    let c = view.factor(Slot::Object);
    let b = batch.len() as f64;
    let mut ll = 0.0;
    for t in batch {
        let x = view.query(Slot::Object, t);
        let co = c.row(t.object);
        let raw = dot(co, &x);
        let (lp, coef) = if squared {
            (2.0 * raw.abs().ln(), 2.0 / raw)
        } else {
            (raw.ln(), 1.0 / raw)
        };
        if !lp.is_finite() {
            return Err(Error::Numerical(format!("training triple {t:?} has zero score")));
        }
        ll += lp;
        let draw = -coef / b;
        axpy_slice(g.slot[2].row_mut(t.object), draw, &x);
        let dx: Vec<f64> = co.iter().map(|v| draw * v).collect();
        view.query_backward(Slot::Object, t, &dx, &mut g);
    }
    let value = -ll / b + z.ln();
    drop(view);
    Ok(Loss {
        value,
        grad: model.fold_grad(g),
    })
}

/// Average log-likelihood `(1/|B|) Σ log p(t)`; a convenience for logs.
pub fn mean_log_likelihood(model: &Model, triples: &[Triple], constraints: Option<&ConstraintCircuit>) -> Result<f64> {
    Ok(-mle_loss_value(model, triples, constraints)?)
}

fn mle_loss_value(model: &Model, triples: &[Triple], constraints: Option<&ConstraintCircuit>) -> Result<f64> {
    if !model.kind().is_circuit() {
        return Err(Error::Unsupported("log-likelihood of an energy-based model".into()));
    }
    check_batch(model, triples)?;
    let z = match constraints {
        Some(c) => crate::constraints::constrained_partition(model, c),
        None => model.partition_function()?,
    };
    let mut ll = 0.0;
    for t in triples {
        if let Some(c) = constraints {
            if !c.satisfies(t) {
                return Err(Error::ConstraintViolation { triple: *t });
            }
        }
        ll += model.score(t)?.ln();
    }
    Ok(-ll / triples.len() as f64 + z.ln())
}
