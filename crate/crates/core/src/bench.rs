//! Step-time and peak-memory benchmark of training steps.
//!
//! Memory is measured by [`TrackingAllocator`], which must be registered as
//! the global allocator of the running binary. Without it the byte counters
//! stay at zero.

use std::alloc::{GlobalAlloc, Layout, System};
use std::io::Write;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg_data::Triple;
use crate::models::{Dims, Family, Model, ModelKind};
use crate::training::{init_params, mle_loss, pll_loss, AdamParams, InitScheme, Objective, OptimizerState, PllOptions};

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static ACTIVE: AtomicBool = AtomicBool::new(false);

/// System allocator with live-byte and high-water accounting.
pub struct TrackingAllocator;

unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            record_alloc(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc_zeroed(layout) };
        if !p.is_null() {
            record_alloc(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = unsafe { System.realloc(ptr, layout, new_size) };
        if !p.is_null() {
            CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
            record_alloc(new_size);
        }
        p
    }
}

fn record_alloc(size: usize) {
    ACTIVE.store(true, Ordering::Relaxed);
    let now = CURRENT.fetch_add(size, Ordering::Relaxed) + size;
    PEAK.fetch_max(now, Ordering::Relaxed);
}

/// Whether the tracking allocator has seen any allocation.
pub fn is_tracking() -> bool {
    ACTIVE.load(Ordering::Relaxed)
}

pub fn current_bytes() -> usize {
    CURRENT.load(Ordering::Relaxed)
}

pub fn peak_bytes() -> usize {
    PEAK.load(Ordering::Relaxed)
}

/// Resets the high-water mark to the live byte count and returns it.
pub fn reset_peak() -> usize {
    let now = CURRENT.load(Ordering::Relaxed);
    PEAK.store(now, Ordering::Relaxed);
    now
}

/// Peak resident set size reported by the OS (`VmHWM`), where available.
pub fn os_peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// One grid point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchPoint {
    pub family: Family,
    pub kind: ModelKind,
    pub entities: usize,
    pub relations: usize,
    pub dim: usize,
    pub batch: usize,
    pub objective: Objective,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchOptions {
    pub repeats: usize,
    pub warmup: usize,
    /// Points whose estimated working set exceeds this are refused.
    pub mem_cap: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            repeats: 25,
            warmup: 2,
            mem_cap: 4 << 30,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub point: BenchPoint,
    pub mean_seconds: f64,
    pub std_seconds: f64,
    /// Peak bytes above the pre-step baseline; `None` when refused.
    pub peak_bytes: Option<usize>,
    pub refused: bool,
}

pub const CSV_HEADER: &str = "model,kind,entities,relations,dim,batch,objective,mean_seconds,std_seconds,peak_bytes";

impl BenchRow {
    pub fn csv_line(&self) -> String {
        let p = &self.point;
        let (mean, std, peak) = if self.refused {
            ("OOM-refused".to_string(), String::new(), String::new())
        } else {
            (
                format!("{:.9}", self.mean_seconds),
                format!("{:.9}", self.std_seconds),
                self.peak_bytes.map(|b| b.to_string()).unwrap_or_default(),
            )
        };
        format!(
            "{},{},{},{},{},{},{},{mean},{std},{peak}",
            p.family, p.kind, p.entities, p.relations, p.dim, p.batch, p.objective
        )
    }
}

/// Rough working-set estimate of one optimisation step in bytes.
pub fn estimate_step_bytes(p: &BenchPoint) -> u128 {
    let dims = Dims::new(p.entities, p.relations, p.dim);
    let n = match p.family {
        Family::Complex => 4 * p.dim,
        Family::Rescal => p.dim * p.dim,
        _ => p.dim,
    } as u128;
    let params: u128 = crate::models::param_shapes(p.family, p.kind, &dims)
        .iter()
        .map(|(_, r, c)| (*r * *c) as u128)
        .sum();
    let (e, b) = (p.entities as u128, p.batch as u128);
    // parameters, view copy, gradients and two Adam moments
    let base = 8 * (5 * params + 2 * e * n);
    let extra = match p.kind {
        ModelKind::EnergyBased => 8 * (b * e + 3 * b * n),
        ModelKind::Squared => 8 * (3 * n * n + 3 * b * n),
        ModelKind::NonNegative => 8 * (3 * n + 3 * b * n),
    };
    base + extra
}

/// Uniformly random triples over the given vocabulary sizes.
pub fn synthetic_triples(entities: usize, relations: usize, count: usize, seed: u64) -> Vec<Triple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            Triple::new(
                rng.random_range(0..entities),
                rng.random_range(0..relations),
                rng.random_range(0..entities),
            )
        })
        .collect()
}

/// Times `repeats` gradient-plus-update steps at one grid point.
pub fn run_point(p: &BenchPoint, opts: &BenchOptions) -> Result<BenchRow> {
    if opts.repeats == 0 {
        return Err(Error::Argument("bench repeats must be at least 1".into()));
    }
    if estimate_step_bytes(p) > opts.mem_cap as u128 {
        log::warn!("refusing {p:?}: estimated working set exceeds the memory cap");
        return Ok(BenchRow {
            point: *p,
            mean_seconds: f64::NAN,
            std_seconds: f64::NAN,
            peak_bytes: None,
            refused: true,
        });
    }
    let dims = Dims::new(p.entities, p.relations, p.dim);
    let scheme = InitScheme::default_for(p.kind);
    let mut model = init_params(p.family, p.kind, dims, &scheme, opts.seed)?;
    let batch = synthetic_triples(p.entities, p.relations, p.batch, opts.seed ^ 0x9e37_79b9);
    let pll = PllOptions {
        logits_cap: usize::MAX / 2,
        ..PllOptions::default()
    };
    let mut adam = OptimizerState::new(model.params(), AdamParams::default());
    let mut step = |model: &mut Model| -> Result<()> {
        let loss = match p.objective {
            Objective::Pll => pll_loss(model, &batch, &pll, None)?,
            Objective::Mle => mle_loss(model, &batch, None)?,
        };
        adam.step(model.params_mut(), &loss.grad, 1e-3)
    };
    for _ in 0..opts.warmup {
        step(&mut model)?;
    }
    let mut times = Vec::with_capacity(opts.repeats);
    let mut peak = 0usize;
    for _ in 0..opts.repeats {
        let base = reset_peak();
        let t0 = Instant::now();
        step(&mut model)?;
        times.push(t0.elapsed().as_secs_f64());
        peak = peak.max(peak_bytes().saturating_sub(base));
    }
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let std = if times.len() > 1 {
        (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(BenchRow {
        point: *p,
        mean_seconds: mean,
        std_seconds: std,
        peak_bytes: is_tracking().then_some(peak),
        refused: false,
    })
}

/// Runs every point and writes the CSV (header first) to `out`.
pub fn run_grid<W: Write>(points: &[BenchPoint], opts: &BenchOptions, mut out: W) -> Result<Vec<BenchRow>> {
    let io = |e: std::io::Error| Error::Io {
        path: "<bench output>".into(),
        source: e,
    };
    writeln!(out, "{CSV_HEADER}").map_err(io)?;
    let mut rows = Vec::with_capacity(points.len());
    for p in points {
        let row = run_point(p, opts)?;
        writeln!(out, "{}", row.csv_line()).map_err(io)?;
        out.flush().map_err(io)?;
        rows.push(row);
    }
    Ok(rows)
}

/// Slope of the least-squares line through `(ln x, ln y)`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
