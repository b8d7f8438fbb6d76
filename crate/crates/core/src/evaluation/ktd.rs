//! Kernel triple distance: unbiased squared MMD between embedded triple sets.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg_data::Triple;
use crate::models::{Family, Model, Slot};
use crate::numeric::{gemm, DenseMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct KtdReport {
    pub mean: f64,
    pub std: f64,
    pub batch_size: usize,
    pub repeats: usize,
    pub values: Vec<f64>,
}

impl KtdReport {
    pub fn standard_error(&self) -> f64 {
        self.std / (self.repeats as f64).sqrt()
    }
}

/// `(xᵀy + 1)³`.
pub fn polynomial_kernel(x: &[f64], y: &[f64]) -> f64 {
    (crate::numeric::dot(x, y) + 1.0).powi(3)
}

/// Embeds triples as the L2-normalised concatenation of the four
/// elementwise trilinear products of a ComplEx model (`h = 4d`).
pub fn embed_triples(embedder: &Model, triples: &[Triple]) -> Result<DenseMatrix> {
    if embedder.family() != Family::Complex {
        return Err(Error::Unsupported(format!(
            "triple embeddings need a complex reference model, got {}",
            embedder.family()
        )));
    }
    let view = embedder.view();
    let (a, b, c) = (
        view.factor(Slot::Subject),
        view.factor(Slot::Predicate),
        view.factor(Slot::Object),
    );
    let h = a.cols();
    let d = h / 4;
    let mut out = DenseMatrix::zeros(triples.len(), h);
    for (i, t) in triples.iter().enumerate() {
        embedder.check_triple(t)?;
        let (sa, sb, sc) = (a.row(t.subject), b.row(t.predicate), c.row(t.object));
        let row = out.row_mut(i);
        for j in 0..h {
            let v = sa[j] * sb[j] * sc[j];
            row[j] = if j >= 3 * d { -v } else { v };
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(out)
}

fn kernel_gram(x: &DenseMatrix, y: &DenseMatrix) -> DenseMatrix {
    let mut k = DenseMatrix::zeros(x.rows(), y.rows());
    gemm(1.0, x, false, y, true, 0.0, &mut k);
    k.map(|v| (v + 1.0).powi(3))
}

/// Unbiased MMD² between two embedded samples of equal size `m ≥ 2`.
pub fn mmd_unbiased(x: &DenseMatrix, y: &DenseMatrix) -> Result<f64> {
    let m = x.rows();
    if m < 2 || y.rows() != m {
        return Err(Error::Argument(format!(
            "unbiased MMD needs two samples of equal size >= 2, got {} and {}",
            m,
            y.rows()
        )));
    }
    let off_diag = |k: &DenseMatrix| -> f64 {
        let total: f64 = k.data().iter().sum();
        let diag: f64 = (0..m).map(|i| k.get(i, i)).sum();
        total - diag
    };
    let mf = m as f64;
    let kxx = off_diag(&kernel_gram(x, x)) / (mf * (mf - 1.0));
    let kyy = off_diag(&kernel_gram(y, y)) / (mf * (mf - 1.0));
    let kxy: f64 = kernel_gram(x, y).data().iter().sum::<f64>() / (mf * mf);
    Ok(kxx + kyy - 2.0 * kxy)
}

/// Mean and sample standard deviation of `repeats` MMD² estimates, each on
/// two fresh batches drawn without replacement from `set_a` and `set_b`.
pub fn ktd(
    embedder: &Model,
    set_a: &[Triple],
    set_b: &[Triple],
    batch: usize,
    repeats: usize,
    seed: u64,
) -> Result<KtdReport> {
    if repeats == 0 {
        return Err(Error::Argument("repeats must be at least 1".into()));
    }
    if batch < 2 {
        return Err(Error::Argument("KTD batch size must be at least 2".into()));
    }
    if batch > set_a.len() || batch > set_b.len() {
        return Err(Error::Argument(format!(
            "batch {batch} exceeds the set sizes {} and {}",
            set_a.len(),
            set_b.len()
        )));
    }
    let ea = embed_triples(embedder, set_a)?;
    let eb = embed_triples(embedder, set_b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |e: &DenseMatrix, ids: &[usize]| {
        let h = e.cols();
        let mut m = DenseMatrix::zeros(ids.len(), h);
        for (i, &id) in ids.iter().enumerate() {
            m.row_mut(i).copy_from_slice(e.row(id));
        }
        m
    };
    let mut values = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let ia = index::sample(&mut rng, set_a.len(), batch).into_vec();
        let ib = index::sample(&mut rng, set_b.len(), batch).into_vec();
        values.push(mmd_unbiased(&pick(&ea, &ia), &pick(&eb, &ib))?);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(KtdReport {
        mean,
        std,
        batch_size: batch,
        repeats,
        values,
    })
}
