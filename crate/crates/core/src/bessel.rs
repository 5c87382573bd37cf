//! Monte Carlo estimate of `E[1/R_t]` for a three-dimensional Bessel process
//! started at 1.
//!
//! `1/R` is a positive local martingale that is not a martingale, so its
//! expectation drifts below 1: the deflator exists while no martingale
//! deflator does. `R_t` is sampled exactly as the norm of a 3-d Brownian
//! motion started at `(1, 0, 0)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const MIN_PATHS: u64 = 10_000;
/// Paths per random stream. Fixed so results do not depend on the thread count.
pub const BATCH: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefectEstimate {
    pub t: f64,
    pub paths: u64,
    pub estimate: f64,
    pub std_error: f64,
    pub defect: f64,
}

#[derive(Clone, Copy, Default)]
struct Moments {
    n: u64,
    sum: f64,
    sum_sq: f64,
}

fn batch(t: f64, seed: u64, index: u64, count: u64) -> Moments {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let s = t.sqrt();
    let mut m = Moments { n: count, ..Moments::default() };
    for _ in 0..count {
        let g1: f64 = StandardNormal.sample(&mut rng);
        let g2: f64 = StandardNormal.sample(&mut rng);
        let g3: f64 = StandardNormal.sample(&mut rng);
        let a = 1.0 + s * g1;
        let r = (a * a + s * s * (g2 * g2 + g3 * g3)).sqrt();
        let inv = 1.0 / r;
        m.sum += inv;
        m.sum_sq += inv * inv;
    }
    m
}

pub fn estimate_defect(t: f64, paths: u64, seed: u64) -> Result<DefectEstimate> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {t}")));
    }
    if paths < MIN_PATHS {
        return Err(Error::InvalidArgument(format!("need at least {MIN_PATHS} paths, got {paths}")));
    }
    let batches = paths.div_ceil(BATCH);
    let parts: Vec<Moments> =
        (0..batches).into_par_iter().map(|b| batch(t, seed, b, BATCH.min(paths - b * BATCH))).collect();
    // Reduce in batch order so the result is bit-identical across runs.
    let total = parts.iter().fold(Moments::default(), |acc, m| Moments {
        n: acc.n + m.n,
        sum: acc.sum + m.sum,
        sum_sq: acc.sum_sq + m.sum_sq,
    });
    let n = total.n as f64;
    let mean = total.sum / n;
    let var = ((total.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    let std_error = (var / n).sqrt().max(f64::MIN_POSITIVE);
    Ok(DefectEstimate { t, paths, estimate: mean, std_error, defect: 1.0 - mean })
}

/// One estimate per horizon, all with the same seed.
pub fn sweep(ts: &[f64], paths: u64, seed: u64) -> Result<Vec<DefectEstimate>> {
    ts.iter().map(|&t| estimate_defect(t, paths, seed)).collect()
}
