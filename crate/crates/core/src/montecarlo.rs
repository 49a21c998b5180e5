//! Deterministic parallel Monte Carlo driver and streaming moment
//! accumulators.
//!
//! Path indices are cut into fixed chunks. Each chunk is accumulated
//! sequentially and the chunk results are merged in index order, so the
//! output depends on `(seed, n)` only, whatever the number of workers.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::C64;

/// Paths per reduction chunk.
pub const CHUNK: usize = 1024;

/// Something that can absorb the results of a later chunk.
pub trait Merge: Send {
    fn merge(&mut self, later: Self);
}

/// Run `body(i, acc)` for `i in 0..n` and reduce deterministically.
pub fn reduce<A, I, F>(n: usize, workers: usize, init: I, body: F) -> Result<A>
where
    A: Merge,
    I: Fn() -> A + Sync,
    F: Fn(usize, &mut A) -> Result<()> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let run_chunk = |c: usize| -> Result<A> {
        let mut acc = init();
        for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
            body(i, &mut acc)?;
        }
        Ok(acc)
    };
    let parts: Vec<Result<A>> = if workers <= 1 || chunks <= 1 {
        (0..chunks).map(run_chunk).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))?;
        pool.install(|| (0..chunks).into_par_iter().map(run_chunk).collect())
    };
    let mut total = init();
    for p in parts {
        total.merge(p?);
    }
    Ok(total)
}

/// Streaming mean and covariance of a real vector (Welford updates, Chan
/// merges).
#[derive(Clone, Debug)]
pub struct Moments {
    n: u64,
    mean: Vec<f64>,
    /// Co-moment matrix (row-major), or only its diagonal when `full` is off.
    m2: Vec<f64>,
    full: bool,
    delta: Vec<f64>,
}

impl Moments {
    /// Means and variances of `p` components.
    pub fn new(p: usize) -> Self {
        Moments { n: 0, mean: vec![0.0; p], m2: vec![0.0; p], full: false, delta: vec![0.0; p] }
    }

    /// Means and full covariance of `p` components.
    pub fn with_covariance(p: usize) -> Self {
        Moments { n: 0, mean: vec![0.0; p], m2: vec![0.0; p * p], full: true, delta: vec![0.0; p] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.mean.len());
        self.n += 1;
        let inv = 1.0 / self.n as f64;
        let p = self.mean.len();
        for i in 0..p {
            self.delta[i] = x[i] - self.mean[i];
            self.mean[i] += self.delta[i] * inv;
        }
        if self.full {
            for i in 0..p {
                let after_i = x[i] - self.mean[i];
                for j in 0..p {
                    self.m2[i * p + j] += after_i * self.delta[j];
                }
            }
        } else {
            for i in 0..p {
                self.m2[i] += self.delta[i] * (x[i] - self.mean[i]);
            }
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased sample variance of component `i`.
    pub fn variance(&self, i: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let p = self.mean.len();
        let m2 = if self.full { self.m2[i * p + i] } else { self.m2[i] };
        (m2 / (self.n - 1) as f64).max(0.0)
    }

    /// Unbiased sample covariance (requires [`Moments::with_covariance`]).
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        assert!(self.full || i == j, "covariance not tracked");
        if i == j {
            return self.variance(i);
        }
        if self.n < 2 {
            return 0.0;
        }
        self.m2[i * self.mean.len() + j] / (self.n - 1) as f64
    }

    /// Standard error of the mean of component `i`.
    pub fn stderr(&self, i: usize) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.variance(i) / self.n as f64).sqrt()
    }
}

impl Merge for Moments {
    fn merge(&mut self, b: Moments) {
        if b.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = b;
            return;
        }
        let na = self.n as f64;
        let nb = b.n as f64;
        let n = na + nb;
        let p = self.mean.len();
        let delta: Vec<f64> = (0..p).map(|i| b.mean[i] - self.mean[i]).collect();
        if self.full {
            for i in 0..p {
                for j in 0..p {
                    self.m2[i * p + j] += b.m2[i * p + j] + delta[i] * delta[j] * na * nb / n;
                }
            }
        } else {
            for i in 0..p {
                self.m2[i] += b.m2[i] + delta[i] * delta[i] * na * nb / n;
            }
        }
        for i in 0..p {
            self.mean[i] += delta[i] * nb / n;
        }
        self.n += b.n;
    }
}

/// Monte Carlo result: complex mean per component with its standard error.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub value: Vec<C64>,
    /// `sqrt(Var(re) + Var(im)) / sqrt(n)` per component.
    pub stderr: Vec<f64>,
    pub n_samples: usize,
    pub h: f64,
    pub seed: u64,
    pub alive_fraction: f64,
}

impl Estimate {
    /// Build from moments whose components are interleaved `(re, im)` pairs.
    pub fn from_complex_moments(m: &Moments, h: f64, seed: u64, alive_fraction: f64) -> Estimate {
        let d = m.dim() / 2;
        let value = (0..d).map(|i| C64::new(m.mean()[2 * i], m.mean()[2 * i + 1])).collect();
        let stderr = (0..d)
            .map(|i| (m.stderr(2 * i).powi(2) + m.stderr(2 * i + 1).powi(2)).sqrt())
            .collect();
        Estimate { value, stderr, n_samples: m.count() as usize, h, seed, alive_fraction }
    }

    /// Real scalar estimate.
    pub fn real(value: f64, stderr: f64, n: usize, h: f64, seed: u64, alive_fraction: f64) -> Estimate {
        Estimate { value: vec![C64::new(value, 0.0)], stderr: vec![stderr], n_samples: n, h, seed, alive_fraction }
    }

    /// First component (real part).
    pub fn re(&self) -> f64 {
        self.value[0].re
    }

    pub fn se(&self) -> f64 {
        self.stderr[0]
    }

    /// Euclidean norm of the vector value.
    pub fn norm(&self) -> f64 {
        self.value.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Standard error of the first component scaled to the whole vector.
    pub fn norm_stderr(&self) -> f64 {
        self.stderr.iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    /// Is `|self − other| ≤ k·sqrt(se₁² + se₂²)` componentwise (independent
    /// estimates)?
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        self.value.len() == other.value.len()
            && self
                .value
                .iter()
                .zip(&other.value)
                .zip(self.stderr.iter().zip(&other.stderr))
                .all(|((a, b), (sa, sb))| (a - b).norm() <= k * (sa * sa + sb * sb).sqrt())
    }
}

/// Counts plus a running maximum, merged deterministically.
#[derive(Clone, Debug, Default)]
pub struct Tally {
    pub count: u64,
    pub hits: u64,
    pub max: f64,
    pub first_hit: Option<usize>,
}

impl Merge for Tally {
    fn merge(&mut self, b: Tally) {
        self.count += b.count;
        self.hits += b.hits;
        self.max = self.max.max(b.max);
        if self.first_hit.is_none() {
            self.first_hit = b.first_hit;
        }
    }
}

impl<A: Merge, B: Merge> Merge for (A, B) {
    fn merge(&mut self, b: (A, B)) {
        self.0.merge(b.0);
        self.1.merge(b.1);
    }
}

impl<A: Merge, B: Merge, C: Merge> Merge for (A, B, C) {
    fn merge(&mut self, b: (A, B, C)) {
        self.0.merge(b.0);
        self.1.merge(b.1);
        self.2.merge(b.2);
    }
}

impl<A: Merge> Merge for Vec<A> {
    fn merge(&mut self, b: Vec<A>) {
        for (a, x) in self.iter_mut().zip(b) {
            a.merge(x);
        }
    }
}
