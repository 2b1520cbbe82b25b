//! One-dimensional private tree for `sum_k |x_k - y|`.
//!
//! Each node stores the number of points in its interval and the sum of their
//! values. For a query `y` the points strictly left and strictly right of
//! `y`'s leaf are covered by exactly one sibling per layer, and
//!
//! ```text
//! sum_k |x_k - y| = s_right - s_left + y * (c_left - c_right)
//! ```
//!
//! Points that share `y`'s leaf are not counted; their contribution is at
//! most `(points in leaf) * leaf_width`.
//!
//! Privacy: under add/remove-one neighbours a point touches one node per
//! layer, so the count vector has L1 sensitivity `L` and the sum vector `L*R`.
//! Each family gets half the budget, giving Laplace scales `2L/eps` and
//! `2LR/eps`.

use crate::error::{check_domain, Result};
use crate::noise::{split_budget, LaplaceScale, NoiseStream, PrivacyBudget};
use crate::tree::{aggregate_up, flat_index, layer_offset, path_siblings, TreeConfig};

/// Partial sums gathered along a query path.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QueryAccumulators {
    pub s_left: f64,
    pub s_right: f64,
    pub c_left: f64,
    pub c_right: f64,
    /// Number of sibling nodes read.
    pub siblings: usize,
}

impl QueryAccumulators {
    /// Accumulators computed directly from set membership: every point below
    /// `y` goes left, every point above goes right.
    pub fn from_sets(points: &[f64], y: f64) -> Self {
        let mut acc = Self::default();
        for &x in points {
            if x > y {
                acc.s_right += x;
                acc.c_right += 1.0;
            } else if x < y {
                acc.s_left += x;
                acc.c_left += 1.0;
            }
        }
        acc
    }

    /// `s_right - s_left + y * c_left - y * c_right`.
    pub fn combine(&self, y: f64) -> f64 {
        self.s_right - self.s_left + y * self.c_left - y * self.c_right
    }
}

/// Noise scales for the count and sum families of a tree built with `config`.
pub fn noise_scales(config: &TreeConfig) -> Result<(LaplaceScale, LaplaceScale)> {
    let halves = split_budget(config.budget(), 2);
    let layers = f64::from(config.layers());
    let count = LaplaceScale::calibrated(layers, halves[0])?;
    let sum = LaplaceScale::calibrated(layers * config.bound(), halves[1])?;
    Ok((count, sum))
}

/// Variance of a noisy query at `y`, given the noise scales of `config`.
///
/// Every layer below the root contributes one sibling, whose sum noise enters
/// with weight 1 and count noise with weight `y`.
pub fn analytic_query_variance(config: &TreeConfig, y: f64) -> Result<f64> {
    let (count, sum) = noise_scales(config)?;
    let siblings = f64::from(config.layers() - 1);
    Ok(siblings * (sum.variance() + y * y * count.variance()))
}

/// Balanced binary tree of (noisy) counts and value sums.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyL1Tree {
    config: TreeConfig,
    noisy: bool,
    counts: Vec<f64>,
    sums: Vec<f64>,
}

impl NoisyL1Tree {
    /// Builds the tree over `data`, adding Laplace noise to every node when
    /// `noise` is given.
    pub fn build(
        data: &[f64],
        config: TreeConfig,
        noise: Option<&mut NoiseStream>,
    ) -> Result<Self> {
        let nodes = config.node_count();
        let mut counts = vec![0.0; nodes];
        let mut sums = vec![0.0; nodes];
        let leaf_base = layer_offset(config.layers());
        for &x in data {
            let j = config.leaf_index(x)?;
            counts[leaf_base + j] += 1.0;
            sums[leaf_base + j] += x;
        }
        aggregate_up(&mut counts, config.layers(), 1);
        aggregate_up(&mut sums, config.layers(), 1);

        let noisy = noise.is_some();
        if let Some(stream) = noise {
            let (count_scale, sum_scale) = noise_scales(&config)?;
            stream.perturb(&mut counts, count_scale);
            stream.perturb(&mut sums, sum_scale);
        }
        Ok(Self {
            config,
            noisy,
            counts,
            sums,
        })
    }

    /// Reassembles a tree from stored node values (layer-major, heap order).
    pub fn from_parts(
        config: TreeConfig,
        noisy: bool,
        counts: Vec<f64>,
        sums: Vec<f64>,
    ) -> Result<Self> {
        let nodes = config.node_count();
        if counts.len() != nodes || sums.len() != nodes {
            return Err(crate::Error::Format(format!(
                "expected {nodes} nodes, got {} counts and {} sums",
                counts.len(),
                sums.len()
            )));
        }
        Ok(Self {
            config,
            noisy,
            counts,
            sums,
        })
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn is_noisy(&self) -> bool {
        self.noisy
    }

    /// All counts, layer-major.
    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    /// All value sums, layer-major.
    pub fn sums(&self) -> &[f64] {
        &self.sums
    }

    pub fn counts_layer(&self, layer: u32) -> &[f64] {
        &self.counts[layer_offset(layer)..layer_offset(layer + 1)]
    }

    pub fn sums_layer(&self, layer: u32) -> &[f64] {
        &self.sums[layer_offset(layer)..layer_offset(layer + 1)]
    }

    /// `(count, sum)` of node `j` (0-based) on `layer` (1-based).
    pub fn node(&self, layer: u32, j: usize) -> (f64, f64) {
        let i = flat_index(layer, j);
        (self.counts[i], self.sums[i])
    }

    /// Budgets of the released noise families; they compose to the tree's
    /// budget.
    pub fn noise_families(&self) -> Vec<PrivacyBudget> {
        split_budget(self.config.budget(), 2)
    }

    /// Walks the path to `y`'s leaf and collects sibling sums.
    pub fn accumulate(&self, y: f64) -> Result<QueryAccumulators> {
        let leaf = self.config.leaf_index(y)?;
        let mut acc = QueryAccumulators::default();
        for (idx, is_left) in path_siblings(self.config.layers(), leaf) {
            if is_left {
                acc.c_left += self.counts[idx];
                acc.s_left += self.sums[idx];
            } else {
                acc.c_right += self.counts[idx];
                acc.s_right += self.sums[idx];
            }
            acc.siblings += 1;
        }
        Ok(acc)
    }

    /// Private estimate of `sum_k |x_k - y|`.
    pub fn query(&self, y: f64) -> Result<f64> {
        check_domain(y, self.config.bound())?;
        Ok(self.accumulate(y)?.combine(y))
    }
}
