//! Closed-form summation over slot subsets.
//!
//! Summing a non-negative circuit over a set of rows pushes the sum into the
//! input layer (column sums). Summing a squared circuit does the same with
//! Gram matrices of the rows. Every form below is linear in each slot
//! statistic, which gives both gradients and per-row target masses from one
//! adjoint.

use crate::numeric::{dot, DenseMatrix};

use super::view::{View, ViewGrad};
use super::Slot;

/// Rows of a slot taking part in a sum.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Members<'a> {
    All,
    Some(&'a [usize]),
}

impl<'a> Members<'a> {
    fn for_each(&self, n: usize, mut f: impl FnMut(usize)) {
        match self {
            Members::All => (0..n).for_each(&mut f),
            Members::Some(ids) => ids.iter().copied().for_each(f),
        }
    }
}

/// Sufficient statistic of one slot.
#[derive(Clone, Debug)]
pub(crate) enum Stat {
    Sum(Vec<f64>),
    Gram(DenseMatrix),
    /// Per-row relation matrices (squared bilinear predicate slot).
    Rows(Vec<usize>),
}

/// Adjoint of the contracted value with respect to one slot statistic.
#[derive(Clone, Debug)]
pub(crate) enum Adj {
    Sum(Vec<f64>),
    Gram(DenseMatrix),
    /// Direct gradients for the listed bilinear relation rows.
    Rows(Vec<(usize, Vec<f64>)>),
}

pub(crate) fn slot_stat(view: &View<'_>, slot: Slot, members: Members<'_>, squared: bool) -> Stat {
    let f = view.factor(slot);
    if squared && slot == Slot::Predicate && matches!(view, View::Bilinear { .. }) {
        let mut ids = Vec::new();
        members.for_each(f.rows(), |r| ids.push(r));
        return Stat::Rows(ids);
    }
    match (squared, members) {
        (false, Members::All) => Stat::Sum(f.column_sums()),
        (false, Members::Some(ids)) => Stat::Sum(f.column_sums_of(ids)),
        (true, Members::All) => Stat::Gram(f.gram()),
        (true, Members::Some(ids)) => Stat::Gram(f.gram_of(ids)),
    }
}

/// A statistic contributing nothing, used as a placeholder for the target slot.
pub(crate) fn empty_stat(view: &View<'_>, slot: Slot, squared: bool) -> Stat {
    slot_stat(view, slot, Members::Some(&[]), squared)
}

fn sum(s: &Stat) -> &[f64] {
    match s {
        Stat::Sum(v) => v,
        _ => unreachable!("expected a column-sum statistic"),
    }
}

fn gram(s: &Stat) -> &DenseMatrix {
    match s {
        Stat::Gram(g) => g,
        _ => unreachable!("expected a Gram statistic"),
    }
}

fn hadamard(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    DenseMatrix::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

/// Value and adjoints of the contraction for given slot statistics.
///
/// The returned core gradients are only populated for the Tucker form.
pub(crate) fn adjoints(view: &View<'_>, squared: bool, stats: [&Stat; 3]) -> (f64, [Adj; 3], Vec<DenseMatrix>) {
    match view {
        View::Diagonal { .. } => {
            if squared {
                let (ga, gb, gc) = (gram(stats[0]), gram(stats[1]), gram(stats[2]));
                let hbc = hadamard(gb, gc);
                let value = dot(ga.data(), hbc.data());
                (
                    value,
                    [Adj::Gram(hbc), Adj::Gram(hadamard(ga, gc)), Adj::Gram(hadamard(ga, gb))],
                    Vec::new(),
                )
            } else {
                let (sa, sb, sc) = (sum(stats[0]), sum(stats[1]), sum(stats[2]));
                let n = sa.len();
                let ga: Vec<f64> = (0..n).map(|i| sb[i] * sc[i]).collect();
                let gb: Vec<f64> = (0..n).map(|i| sa[i] * sc[i]).collect();
                let gc: Vec<f64> = (0..n).map(|i| sa[i] * sb[i]).collect();
                let value = dot(sa, &ga);
                (value, [Adj::Sum(ga), Adj::Sum(gb), Adj::Sum(gc)], Vec::new())
            }
        }
        View::Bilinear { p, .. } => {
            let p = *p;
            if squared {
                let (ga, gc) = (gram(stats[0]), gram(stats[2]));
                let rows = match stats[1] {
                    Stat::Rows(r) => r,
                    _ => unreachable!("expected per-row statistic"),
                };
                let mut ha = DenseMatrix::zeros(p, p);
                let mut hc = DenseMatrix::zeros(p, p);
                let mut dms = Vec::with_capacity(rows.len());
                let mut value = 0.0;
                for &r in rows {
                    let mr = view.relation_matrix(r).expect("bilinear");
                    let a_m = ga.matmul(&mr);
                    let m_c = mr.matmul(gc);
                    value += dot(a_m.data(), m_c.data());
                    ha.add_assign(&m_c.matmul_t(&mr));
                    hc.add_assign(&mr.t_matmul(&a_m));
                    let mut dm = a_m.matmul(gc);
                    dm.scale(2.0);
                    dms.push((r, dm.into_vec()));
                }
                (value, [Adj::Gram(ha), Adj::Rows(dms), Adj::Gram(hc)], Vec::new())
            } else {
                let (alpha, gamma) = (sum(stats[0]), sum(stats[2]));
                let n = DenseMatrix::from_vec(p, p, sum(stats[1]).to_vec()).expect("p×p");
                let n_gamma = n.matvec(gamma);
                let value = dot(alpha, &n_gamma);
                let nt_alpha = n.t_matvec(alpha);
                let gn = DenseMatrix::outer(alpha, gamma).into_vec();
                (value, [Adj::Sum(n_gamma), Adj::Sum(gn), Adj::Sum(nt_alpha)], Vec::new())
            }
        }
        View::Tucker { slices, .. } => {
            let dr = slices.len();
            if squared {
                let (ga, gb, gc) = (gram(stats[0]), gram(stats[1]), gram(stats[2]));
                let pm: Vec<DenseMatrix> = slices.iter().map(|t| ga.matmul(t).matmul(gc)).collect();
                let k = DenseMatrix::from_fn(dr, dr, |j, m| dot(slices[j].data(), pm[m].data()));
                let value = dot(gb.data(), k.data());
                let de = ga.rows();
                let mut ha = DenseMatrix::zeros(de, de);
                let mut hc = DenseMatrix::zeros(de, de);
                let mut dt = Vec::with_capacity(dr);
                for j in 0..dr {
                    let mut u = DenseMatrix::zeros(de, de);
                    for (m, tm) in slices.iter().enumerate() {
                        let g = gb.get(j, m);
                        if g != 0.0 {
                            u.axpy(g, tm);
                        }
                    }
                    ha.add_assign(&slices[j].matmul(gc).matmul_t(&u));
                    hc.add_assign(&u.t_matmul(ga).matmul(&slices[j]));
                    let mut d = ga.matmul(&u).matmul(gc);
                    d.scale(2.0);
                    dt.push(d);
                }
                (value, [Adj::Gram(ha), Adj::Gram(k), Adj::Gram(hc)], dt)
            } else {
                let (alpha, beta, gamma) = (sum(stats[0]), sum(stats[1]), sum(stats[2]));
                let de = alpha.len();
                let mut g_alpha = vec![0.0; de];
                let mut g_gamma = vec![0.0; de];
                let mut g_beta = vec![0.0; dr];
                let mut dt = Vec::with_capacity(dr);
                for (j, tj) in slices.iter().enumerate() {
                    let t_gamma = tj.matvec(gamma);
                    g_beta[j] = dot(alpha, &t_gamma);
                    for i in 0..de {
                        g_alpha[i] += beta[j] * t_gamma[i];
                    }
                    let tt_alpha = tj.t_matvec(alpha);
                    for k in 0..de {
                        g_gamma[k] += beta[j] * tt_alpha[k];
                    }
                    let mut d = DenseMatrix::outer(alpha, gamma);
                    d.scale(beta[j]);
                    dt.push(d);
                }
                let value = dot(beta, &g_beta);
                (value, [Adj::Sum(g_alpha), Adj::Sum(g_beta), Adj::Sum(g_gamma)], dt)
            }
        }
    }
}

pub(crate) fn contract(view: &View<'_>, squared: bool, stats: [&Stat; 3]) -> f64 {
    match view {
        View::Diagonal { .. } => {
            if squared {
                let (ga, gb, gc) = (gram(stats[0]), gram(stats[1]), gram(stats[2]));
                ga.data()
                    .iter()
                    .zip(gb.data())
                    .zip(gc.data())
                    .map(|((x, y), z)| x * y * z)
                    .sum()
            } else {
                let (sa, sb, sc) = (sum(stats[0]), sum(stats[1]), sum(stats[2]));
                sa.iter().zip(sb).zip(sc).map(|((x, y), z)| x * y * z).sum()
            }
        }
        _ => adjoints(view, squared, stats).0,
    }
}

/// Adds `scale · ∂value/∂factors` into `grad` for the given member sets.
pub(crate) fn backward(
    view: &View<'_>,
    squared: bool,
    stats: [&Stat; 3],
    members: [Members<'_>; 3],
    scale: f64,
    grad: &mut ViewGrad,
) -> f64 {
    let (value, adj, dt) = adjoints(view, squared, stats);
    for (slot_idx, (a, mem)) in adj.iter().zip(members).enumerate() {
        let slot = [Slot::Subject, Slot::Predicate, Slot::Object][slot_idx];
        pullback(view.factor(slot), a, mem, scale, &mut grad.slot[slot_idx]);
    }
    for (g, d) in grad.core.iter_mut().zip(&dt) {
        g.axpy(scale, d);
    }
    value
}

pub(crate) fn pullback(f: &DenseMatrix, adj: &Adj, members: Members<'_>, scale: f64, out: &mut DenseMatrix) {
    match adj {
        Adj::Sum(g) => members.for_each(f.rows(), |u| {
            crate::numeric::axpy_slice(out.row_mut(u), scale, g);
        }),
        Adj::Gram(h) => {
            let mut hs = h.clone();
            hs.add_assign(&h.transpose());
            hs.scale(scale);
            match members {
                Members::All => {
                    // out += F · (H + Hᵀ) in one product
                    crate::numeric::gemm(1.0, f, false, &hs, false, 1.0, out);
                }
                Members::Some(ids) => {
                    for &u in ids {
                        let v = hs.matvec(f.row(u));
                        crate::numeric::axpy_slice(out.row_mut(u), 1.0, &v);
                    }
                }
            }
        }
        Adj::Rows(rows) => {
            for (r, d) in rows {
                crate::numeric::axpy_slice(out.row_mut(*r), scale, d);
            }
        }
    }
}

/// Mass of each listed target row with the other two slots summed by `stats`.
///
/// `stats[target]` is ignored.
pub(crate) fn target_masses(
    view: &View<'_>,
    squared: bool,
    target: Slot,
    stats: [&Stat; 3],
    rows: Members<'_>,
) -> Vec<f64> {
    let ti = target.index();
    let placeholder = empty_stat(view, target, squared);
    let mut s = stats;
    s[ti] = &placeholder;
    let f = view.factor(target);
    let mut ids = Vec::new();
    rows.for_each(f.rows(), |u| ids.push(u));
    if squared && target == Slot::Predicate {
        if let View::Bilinear { .. } = view {
            return ids
                .iter()
                .map(|&r| {
                    let one = Stat::Rows(vec![r]);
                    let mut s2 = s;
                    s2[1] = &one;
                    contract(view, true, s2)
                })
                .collect();
        }
    }
    let (_, adj, _) = adjoints(view, squared, s);
    match &adj[ti] {
        Adj::Sum(g) => ids.iter().map(|&u| dot(f.row(u), g)).collect(),
        Adj::Gram(h) => ids
            .iter()
            .map(|&u| crate::numeric::quadratic_form(h, f.row(u)))
            .collect(),
        Adj::Rows(_) => unreachable!("handled above"),
    }
}
