//! Monte Carlo engine: keyed random streams, replication and estimates.
//!
//! Every replication or sample block draws from its own [`RngStream`], a
//! ChaCha8 generator keyed by `(master_seed, stream_id)`. Work is split into
//! streams before any parallel execution and results are reduced in stream
//! order, so aggregated output is bitwise identical for any worker count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of samples drawn from one stream by the blocked estimators.
pub const BLOCK_SIZE: usize = 1 << 14;

/// A reproducible random stream keyed by a master seed and a stream index.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            inner,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh seed drawn from this stream, for handing to a nested estimator.
    pub fn child_seed(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// SplitMix64 mixing of a master seed with a key. Used to derive independent
/// master seeds for sub-experiments (e.g. one per parameter value).
pub fn derive_seed(master_seed: u64, key: u64) -> u64 {
    let mut z = master_seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(key.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sample mean with standard error and a normal 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub master_seed: u64,
}

impl Estimate {
    pub fn new(mean: f64, stderr: f64, n: usize, master_seed: u64) -> Self {
        Self {
            mean,
            stderr,
            n,
            ci95_low: mean - 1.96 * stderr,
            ci95_high: mean + 1.96 * stderr,
            master_seed,
        }
    }

    /// Summarizes samples in the given order. `stderr = sd / sqrt(n)` with the
    /// unbiased sample variance.
    pub fn from_samples(samples: &[f64], master_seed: u64) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self::new(f64::NAN, f64::NAN, 0, master_seed);
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self::new(mean, stderr, n, master_seed)
    }

    /// Binomial proportion `hits / n` scaled by `scale`.
    pub fn from_proportion(hits: u64, n: usize, scale: f64, master_seed: u64) -> Self {
        let p = hits as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        Self::new(scale * p, scale * se, n, master_seed)
    }

    /// True when `value` lies within `k` standard errors of the mean.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<R, F>(workers: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("failed to build thread pool");
    pool.install(f)
}

/// Runs `task` once per stream `0..reps` and returns the outputs in stream
/// order. The first failing stream (by index) determines the error.
pub fn replicate_map<T, F>(reps: usize, master_seed: u64, task: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut RngStream) -> Result<T> + Sync,
{
    let outs: Vec<Result<T>> = (0..reps as u64)
        .into_par_iter()
        .map(|id| {
            let mut rng = RngStream::new(master_seed, id);
            task(&mut rng).map_err(|e| match e {
                Error::TaskFailed { .. } => e,
                other => Error::TaskFailed {
                    stream_id: id,
                    message: other.to_string(),
                },
            })
        })
        .collect();
    outs.into_iter().collect()
}

/// Estimates the mean of a scalar task over `reps` independent streams.
pub fn replicate<F>(reps: usize, master_seed: u64, task: F) -> Result<Estimate>
where
    F: Fn(&mut RngStream) -> Result<f64> + Sync,
{
    if reps < 2 {
        return Err(Error::OutOfRange {
            name: "reps",
            value: reps as f64,
            expected: ">= 2",
        });
    }
    let values = replicate_map(reps, master_seed, task)?;
    Ok(Estimate::from_samples(&values, master_seed))
}

/// Vector-valued replication: one [`Estimate`] per output component.
pub fn replicate_vec<F>(reps: usize, master_seed: u64, task: F) -> Result<Vec<Estimate>>
where
    F: Fn(&mut RngStream) -> Result<Vec<f64>> + Sync,
{
    let rows = replicate_map(reps, master_seed, task)?;
    Ok(summarize_columns(&rows, master_seed))
}

/// Column-wise estimates of a table of replications.
pub fn summarize_columns(rows: &[Vec<f64>], master_seed: u64) -> Vec<Estimate> {
    let width = rows.first().map_or(0, Vec::len);
    (0..width)
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            Estimate::from_samples(&col, master_seed)
        })
        .collect()
}

/// Splits `n` draws into fixed blocks of [`BLOCK_SIZE`], one stream per block,
/// and returns the per-block results in block order.
pub fn par_blocks<T, F>(n: usize, master_seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RngStream, usize) -> T + Sync,
{
    let blocks = n.div_ceil(BLOCK_SIZE);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let count = BLOCK_SIZE.min(n - b * BLOCK_SIZE);
            let mut rng = RngStream::new(master_seed, b as u64);
            f(&mut rng, count)
        })
        .collect()
}

/// Kolmogorov–Smirnov statistic of `samples` against the continuous `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.627_6 / (n as f64).sqrt()
}

/// Two-sample KS statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic 1% critical value of the two-sample KS statistic.
pub fn ks_two_sample_critical_1pct(na: usize, nb: usize) -> f64 {
    let (a, b) = (na as f64, nb as f64);
    1.627_6 * ((a + b) / (a * b)).sqrt()
}
