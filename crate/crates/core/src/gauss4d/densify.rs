use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Gaussian4D;

/// Running positional-gradient magnitudes per primitive.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradStats {
    sum: Vec<f64>,
    count: Vec<u32>,
}

impl GradStats {
    pub fn new(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum.is_empty()
    }

    pub fn record(&mut self, i: usize, magnitude: f64) {
        self.sum[i] += magnitude;
        self.count[i] += 1;
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.sum[i] / self.count[i] as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensifyOptions {
    /// Primitives with opacity below this are removed.
    pub prune_opacity: f64,
    /// Primitives whose mean positional gradient exceeds this are cloned.
    pub clone_grad: f64,
    /// Upper bound on the primitive count after cloning.
    pub max_count: usize,
    /// Half-width of the uniform jitter applied to a clone's spatial mean.
    pub jitter_space: f64,
    /// Half-width of the jitter applied to a clone's time center.
    pub jitter_time: f64,
}

impl Default for DensifyOptions {
    fn default() -> Self {
        Self {
            prune_opacity: 0.005,
            clone_grad: 2e-4,
            max_count: 240,
            jitter_space: 0.01,
            jitter_time: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensifyOutcome {
    pub gaussians: Vec<Gaussian4D>,
    /// For every output primitive: its parent index and whether it is a new clone.
    pub sources: Vec<(usize, bool)>,
    pub pruned: usize,
    pub cloned: usize,
    /// Clones that did not fit under `max_count`.
    pub skipped: usize,
}

/// Prune transparent primitives, then clone high-gradient survivors (largest
/// gradient first, ties by index) with a small 4D jitter.
pub fn densify_prune<R: Rng>(
    gaussians: &[Gaussian4D],
    stats: &GradStats,
    opts: &DensifyOptions,
    rng: &mut R,
) -> DensifyOutcome {
    assert_eq!(gaussians.len(), stats.len(), "gradient stats out of sync");
    let kept: Vec<usize> = (0..gaussians.len())
        .filter(|&i| gaussians[i].opacity() >= opts.prune_opacity)
        .collect();
    let pruned = gaussians.len() - kept.len();

    let mut candidates: Vec<usize> = kept
        .iter()
        .copied()
        .filter(|&i| stats.mean(i) > opts.clone_grad)
        .collect();
    candidates.sort_by(|&a, &b| stats.mean(b).total_cmp(&stats.mean(a)).then(a.cmp(&b)));
    let room = opts.max_count.saturating_sub(kept.len());
    let take = candidates.len().min(room);
    let skipped = candidates.len() - take;
    if skipped > 0 {
        log::warn!("densify: {skipped} clones skipped at the {} primitive cap", opts.max_count);
    }

    let mut out: Vec<Gaussian4D> = kept.iter().map(|&i| gaussians[i]).collect();
    let mut sources: Vec<(usize, bool)> = kept.iter().map(|&i| (i, false)).collect();
    for &i in &candidates[..take] {
        let mut c = gaussians[i];
        for k in 0..3 {
            c.mu[k] += rng.random_range(-opts.jitter_space..=opts.jitter_space);
        }
        c.mu[3] += rng.random_range(-opts.jitter_time..=opts.jitter_time);
        out.push(c);
        sources.push((i, true));
    }
    DensifyOutcome {
        gaussians: out,
        sources,
        pruned,
        cloned: take,
        skipped,
    }
}
