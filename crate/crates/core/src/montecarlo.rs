//! Seeded, batch-parallel Monte-Carlo averaging.
//!
//! Samples are split into fixed batches of [`BATCH_SIZE`]. Batch `b` draws
//! from a ChaCha8 stream seeded with `seed` and stream id `b`, so the random
//! numbers consumed by a batch never depend on which thread runs it. Batch
//! moments are merged in batch order, which makes the final estimate
//! bit-identical for any worker-pool size.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const BATCH_SIZE: usize = 4096;

/// RNG for one batch of one estimator run.
pub fn batch_rng(seed: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    rng
}

/// Entrywise running mean and sum of squared deviations.
#[derive(Debug, Clone)]
pub struct Moments {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    pub fn new(width: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; width],
            m2: vec![0.0; width],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    /// Chan et al. pairwise merge.
    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Standard error of the mean, entrywise.
    pub fn std_error(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.mean.len()];
        }
        let n = self.count as f64;
        self.m2
            .iter()
            .map(|s| (s.max(0.0) / (n - 1.0) / n).sqrt())
            .collect()
    }
}

/// Averages `width` per-sample statistics over `n` samples.
///
/// `sample` is called once per sample with the batch RNG and an output
/// buffer of length `width`. Any non-finite value aborts the run with
/// [`Error::NonFiniteEstimate`].
pub fn estimate<F>(n: usize, seed: u64, width: usize, sample: F) -> Result<Moments>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) -> Result<()> + Sync,
{
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let batches = n.div_ceil(BATCH_SIZE);
    let partials: Vec<Result<Moments>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = batch_rng(seed, b as u64);
            let len = BATCH_SIZE.min(n - b * BATCH_SIZE);
            let mut acc = Moments::new(width);
            let mut buf = vec![0.0; width];
            for _ in 0..len {
                sample(&mut rng, &mut buf)?;
                if let Some(bad) = buf.iter().find(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteEstimate(format!(
                        "per-sample statistic evaluated to {bad}"
                    )));
                }
                acc.push(&buf);
            }
            Ok(acc)
        })
        .collect();
    let mut total = Moments::new(width);
    for p in partials {
        total.merge(&p?);
    }
    Ok(total)
}
