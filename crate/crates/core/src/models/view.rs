//! Linear-space factor view shared by every family and kind.
//!
//! Each family is rewritten into one of three forms over factors
//! `A` (subject rows), `B` (predicate rows) and `C` (object rows):
//!
//! * diagonal: `Σ_i a_i b_i c_i` (CP; ComplEx after expanding real and
//!   imaginary parts into four column blocks),
//! * bilinear: `aᵀ M_r c` with `M_r` stored row-major in the rows of `B`
//!   (RESCAL),
//! * Tucker: `Σ_ijk T_ijk a_i b_j c_k` with core slices `T_j[i, k]`.
//!
//! For every form the raw score is linear in each factor row, so fixing two
//! slots yields a query vector `x` with `raw = f_target · x`.

use std::borrow::Cow;

use crate::kg_data::Triple;
use crate::numeric::{axpy_slice, dot, DenseMatrix};

use super::Slot;

#[derive(Clone, Debug)]
pub(crate) enum View<'a> {
    Diagonal {
        a: Cow<'a, DenseMatrix>,
        b: Cow<'a, DenseMatrix>,
        c: Cow<'a, DenseMatrix>,
    },
    Bilinear {
        e: Cow<'a, DenseMatrix>,
        m: Cow<'a, DenseMatrix>,
        p: usize,
    },
    Tucker {
        e: Cow<'a, DenseMatrix>,
        w: Cow<'a, DenseMatrix>,
        slices: Cow<'a, [DenseMatrix]>,
    },
}

/// Gradient with respect to the factors of a [`View`].
///
/// `slot[0]`, `slot[1]`, `slot[2]` hold the subject, predicate and object
/// factor gradients; bilinear and Tucker forms share one entity matrix, so
/// their subject and object parts are added when folding back.
#[derive(Clone, Debug)]
pub(crate) struct ViewGrad {
    pub slot: [DenseMatrix; 3],
    pub core: Vec<DenseMatrix>,
}

impl<'a> View<'a> {
    pub fn borrowed(&self) -> View<'_> {
        match self {
            View::Diagonal { a, b, c } => View::Diagonal {
                a: Cow::Borrowed(a.as_ref()),
                b: Cow::Borrowed(b.as_ref()),
                c: Cow::Borrowed(c.as_ref()),
            },
            View::Bilinear { e, m, p } => View::Bilinear {
                e: Cow::Borrowed(e.as_ref()),
                m: Cow::Borrowed(m.as_ref()),
                p: *p,
            },
            View::Tucker { e, w, slices } => View::Tucker {
                e: Cow::Borrowed(e.as_ref()),
                w: Cow::Borrowed(w.as_ref()),
                slices: Cow::Borrowed(slices.as_ref()),
            },
        }
    }

    /// Factor whose rows index the given slot's vocabulary.
    pub fn factor(&self, slot: Slot) -> &DenseMatrix {
        match (self, slot) {
            (View::Diagonal { a, .. }, Slot::Subject) => a,
            (View::Diagonal { b, .. }, Slot::Predicate) => b,
            (View::Diagonal { c, .. }, Slot::Object) => c,
            (View::Bilinear { e, .. }, Slot::Subject | Slot::Object) => e,
            (View::Bilinear { m, .. }, Slot::Predicate) => m,
            (View::Tucker { e, .. }, Slot::Subject | Slot::Object) => e,
            (View::Tucker { w, .. }, Slot::Predicate) => w,
        }
    }

    pub fn zero_grad(&self) -> ViewGrad {
        let z = |s: Slot| {
            let f = self.factor(s);
            DenseMatrix::zeros(f.rows(), f.cols())
        };
        let core = match self {
            View::Tucker { slices, .. } => slices.iter().map(|t| DenseMatrix::zeros(t.rows(), t.cols())).collect(),
            _ => Vec::new(),
        };
        ViewGrad {
            slot: [z(Slot::Subject), z(Slot::Predicate), z(Slot::Object)],
            core,
        }
    }

    /// Multilinear score before any squaring.
    pub fn raw(&self, t: &Triple) -> f64 {
        match self {
            View::Diagonal { a, b, c } => {
                let (x, y, z) = (a.row(t.subject), b.row(t.predicate), c.row(t.object));
                x.iter().zip(y).zip(z).map(|((p, q), r)| p * q * r).sum()
            }
            _ => dot(self.factor(Slot::Object).row(t.object), &self.query(Slot::Object, t)),
        }
    }

    /// Query vector `x` such that `raw(t with target := u) = factor(target)[u] · x`.
    pub fn query(&self, target: Slot, t: &Triple) -> Vec<f64> {
        let mut x = vec![0.0; self.factor(target).cols()];
        self.query_into(target, t, &mut x);
        x
    }

    pub fn query_into(&self, target: Slot, t: &Triple, x: &mut [f64]) {
        match self {
            View::Diagonal { a, b, c } => {
                let (u, v) = match target {
                    Slot::Subject => (b.row(t.predicate), c.row(t.object)),
                    Slot::Predicate => (a.row(t.subject), c.row(t.object)),
                    Slot::Object => (a.row(t.subject), b.row(t.predicate)),
                };
                for ((xi, ui), vi) in x.iter_mut().zip(u).zip(v) {
                    *xi = ui * vi;
                }
            }
            View::Bilinear { e, m, p } => {
                let p = *p;
                let mr = m.row(t.predicate);
                match target {
                    Slot::Object => {
                        x.fill(0.0);
                        let a = e.row(t.subject);
                        for i in 0..p {
                            axpy_slice(x, a[i], &mr[i * p..(i + 1) * p]);
                        }
                    }
                    Slot::Subject => {
                        let c = e.row(t.object);
                        for (i, xi) in x.iter_mut().enumerate() {
                            *xi = dot(&mr[i * p..(i + 1) * p], c);
                        }
                    }
                    Slot::Predicate => {
                        let a = e.row(t.subject);
                        let c = e.row(t.object);
                        for i in 0..p {
                            for k in 0..p {
                                x[i * p + k] = a[i] * c[k];
                            }
                        }
                    }
                }
            }
            View::Tucker { e, w, slices } => match target {
                Slot::Object => {
                    x.fill(0.0);
                    let a = e.row(t.subject);
                    let b = w.row(t.predicate);
                    for (j, tj) in slices.iter().enumerate() {
                        for (i, &ai) in a.iter().enumerate() {
                            let s = b[j] * ai;
                            if s != 0.0 {
                                axpy_slice(x, s, tj.row(i));
                            }
                        }
                    }
                }
                Slot::Subject => {
                    x.fill(0.0);
                    let b = w.row(t.predicate);
                    let c = e.row(t.object);
                    for (j, tj) in slices.iter().enumerate() {
                        for (i, xi) in x.iter_mut().enumerate() {
                            *xi += b[j] * dot(tj.row(i), c);
                        }
                    }
                }
                Slot::Predicate => {
                    let a = e.row(t.subject);
                    let c = e.row(t.object);
                    for (j, tj) in slices.iter().enumerate() {
                        let mut s = 0.0;
                        for (i, &ai) in a.iter().enumerate() {
                            s += ai * dot(tj.row(i), c);
                        }
                        x[j] = s;
                    }
                }
            },
        }
    }

    /// Accumulates `∂L/∂x · ∂x/∂factors` for the query built by [`query`](Self::query).
    pub fn query_backward(&self, target: Slot, t: &Triple, dx: &[f64], g: &mut ViewGrad) {
        match self {
            View::Diagonal { a, b, c } => {
                let (s1, r1, s2, r2, u, v) = match target {
                    Slot::Subject => (1, t.predicate, 2, t.object, b.row(t.predicate), c.row(t.object)),
                    Slot::Predicate => (0, t.subject, 2, t.object, a.row(t.subject), c.row(t.object)),
                    Slot::Object => (0, t.subject, 1, t.predicate, a.row(t.subject), b.row(t.predicate)),
                };
                {
                    let gu = g.slot[s1].row_mut(r1);
                    for i in 0..dx.len() {
                        gu[i] += dx[i] * v[i];
                    }
                }
                let gv = g.slot[s2].row_mut(r2);
                for i in 0..dx.len() {
                    gv[i] += dx[i] * u[i];
                }
            }
            View::Bilinear { e, m, p } => {
                let p = *p;
                let mr = m.row(t.predicate);
                match target {
                    Slot::Object => {
                        let a = e.row(t.subject);
                        {
                            let ga = g.slot[0].row_mut(t.subject);
                            for i in 0..p {
                                ga[i] += dot(&mr[i * p..(i + 1) * p], dx);
                            }
                        }
                        let gm = g.slot[1].row_mut(t.predicate);
                        for i in 0..p {
                            axpy_slice(&mut gm[i * p..(i + 1) * p], a[i], dx);
                        }
                    }
                    Slot::Subject => {
                        let c = e.row(t.object);
                        {
                            let gc = g.slot[2].row_mut(t.object);
                            for i in 0..p {
                                axpy_slice(gc, dx[i], &mr[i * p..(i + 1) * p]);
                            }
                        }
                        let gm = g.slot[1].row_mut(t.predicate);
                        for i in 0..p {
                            axpy_slice(&mut gm[i * p..(i + 1) * p], dx[i], c);
                        }
                    }
                    Slot::Predicate => {
                        let a = e.row(t.subject);
                        let c = e.row(t.object);
                        {
                            let ga = g.slot[0].row_mut(t.subject);
                            for i in 0..p {
                                ga[i] += dot(&dx[i * p..(i + 1) * p], c);
                            }
                        }
                        let gc = g.slot[2].row_mut(t.object);
                        for i in 0..p {
                            axpy_slice(gc, a[i], &dx[i * p..(i + 1) * p]);
                        }
                    }
                }
            }
            View::Tucker { e, w, slices } => {
                let a = e.row(t.subject);
                let b = w.row(t.predicate);
                let c = e.row(t.object);
                let de = a.len();
                match target {
                    Slot::Object => {
                        for (j, tj) in slices.iter().enumerate() {
                            let mut gb = 0.0;
                            for i in 0..de {
                                let tdx = dot(tj.row(i), dx);
                                g.slot[0].add_at(t.subject, i, b[j] * tdx);
                                gb += a[i] * tdx;
                                let s = b[j] * a[i];
                                if s != 0.0 {
                                    axpy_slice(g.core[j].row_mut(i), s, dx);
                                }
                            }
                            g.slot[1].add_at(t.predicate, j, gb);
                        }
                    }
                    Slot::Subject => {
                        for (j, tj) in slices.iter().enumerate() {
                            let mut gb = 0.0;
                            for i in 0..de {
                                let s = b[j] * dx[i];
                                gb += dx[i] * dot(tj.row(i), c);
                                if s != 0.0 {
                                    axpy_slice(g.slot[2].row_mut(t.object), s, tj.row(i));
                                    axpy_slice(g.core[j].row_mut(i), s, c);
                                }
                            }
                            g.slot[1].add_at(t.predicate, j, gb);
                        }
                    }
                    Slot::Predicate => {
                        for (j, tj) in slices.iter().enumerate() {
                            let s = dx[j];
                            if s == 0.0 {
                                continue;
                            }
                            for i in 0..de {
                                g.slot[0].add_at(t.subject, i, s * dot(tj.row(i), c));
                                if a[i] != 0.0 {
                                    axpy_slice(g.slot[2].row_mut(t.object), s * a[i], tj.row(i));
                                    axpy_slice(g.core[j].row_mut(i), s * a[i], c);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Bilinear relation matrix `M_r` as a `p × p` matrix.
    pub fn relation_matrix(&self, r: usize) -> Option<DenseMatrix> {
        match self {
            View::Bilinear { m, p, .. } => DenseMatrix::from_vec(*p, *p, m.row(r).to_vec()).ok(),
            _ => None,
        }
    }
}

/// Splits a Tucker core laid out as `d_e × (d_r·d_e)` into `d_r` slices.
pub(crate) fn core_slices(t: &DenseMatrix, de: usize, dr: usize) -> Vec<DenseMatrix> {
    (0..dr)
        .map(|j| DenseMatrix::from_fn(de, de, |i, k| t.get(i, j * de + k)))
        .collect()
}

/// Inverse of [`core_slices`].
pub(crate) fn pack_core(slices: &[DenseMatrix], de: usize, dr: usize) -> DenseMatrix {
    let mut t = DenseMatrix::zeros(de, dr * de);
    for (j, s) in slices.iter().enumerate() {
        for i in 0..de {
            for k in 0..de {
                t.set(i, j * de + k, s.get(i, k));
            }
        }
    }
    t
}
