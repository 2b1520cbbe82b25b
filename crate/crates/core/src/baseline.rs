//! Reconstruction of the prior node-contaminated counting tree for l1
//! distance sums, used as the comparison arm in benchmarks.
//!
//! Points are rounded to the grid `{0, R/n, 2R/n, ..., (n-1)R/n}` and leaf
//! `m` counts the points at `m * R/n`. Every node carries a noisy count. A
//! query splits the line around `y` into geometric distance bands
//! `(r0 * b^i, r0 * b^(i+1)]` with `b = 1 + alpha` and `r0 = R/n`, counts
//! each band with an interval query and charges every point in a band the
//! band's upper distance `r0 * b^(i+1)`. Points within `r0` of `y` are charged
//! `r0`.
//!
//! Reconstruction choices (the source describes the structure without full
//! pseudocode): upper-endpoint band representatives, symmetric left and right
//! bands, an inner band of radius `r0`, and d-dimensional composition by
//! per-coordinate trees at `eps / d`.

use rayon::prelude::*;

use crate::error::{check_domain, Error, Result};
use crate::multidim::{check_query, dimension_seed, project_columns};
use crate::noise::{split_budget, LaplaceScale, NoiseStream, PrivacyBudget, RngSeed};
use crate::tree::{aggregate_up, layer_offset, TreeConfig};

/// Result of a range count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalCount {
    pub value: f64,
    /// Tree nodes summed.
    pub nodes: usize,
    /// The requested interval reached outside `[0, R)` and was clipped.
    pub clipped: bool,
}

/// Answer of a baseline query with its work counters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineAnswer {
    pub value: f64,
    /// Distance bands evaluated, including the inner band.
    pub regions: usize,
    /// Tree nodes summed across all bands.
    pub nodes: usize,
}

/// Noisy counting tree over a grid of `n` positions.
#[derive(Debug, Clone, PartialEq)]
pub struct CountingTree {
    config: TreeConfig,
    alpha: f64,
    grid: usize,
    noisy: bool,
    counts: Vec<f64>,
}

impl CountingTree {
    /// Laplace scale on every count: `2L / eps`.
    pub fn noise_scale(config: &TreeConfig) -> Result<LaplaceScale> {
        LaplaceScale::calibrated(2.0 * f64::from(config.layers()), config.budget())
    }

    /// Builds over `data` in `[0, R)` with `R = config.bound()` and a grid of
    /// `max(config.n(), 1)` positions.
    pub fn build(
        data: &[f64],
        config: TreeConfig,
        alpha: f64,
        noise: Option<&mut NoiseStream>,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "region parameter alpha must lie in (0, 1], got {alpha}"
            )));
        }
        let grid = config.n().max(1);
        if grid > config.leaf_count() {
            return Err(Error::InvalidParameter(format!(
                "{grid} grid positions do not fit in {} leaves",
                config.leaf_count()
            )));
        }
        let mut tree = Self {
            config,
            alpha,
            grid,
            noisy: noise.is_some(),
            counts: vec![0.0; config.node_count()],
        };
        let leaf_base = layer_offset(config.layers());
        for &x in data {
            let m = tree.grid_index(x)?;
            tree.counts[leaf_base + m] += 1.0;
        }
        aggregate_up(&mut tree.counts, config.layers(), 1);
        if let Some(stream) = noise {
            stream.perturb(&mut tree.counts, Self::noise_scale(&config)?);
        }
        Ok(tree)
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_noisy(&self) -> bool {
        self.noisy
    }

    /// Grid spacing `r0 = R / n`.
    pub fn resolution(&self) -> f64 {
        self.config.bound() / self.grid as f64
    }

    pub fn noise_families(&self) -> Vec<PrivacyBudget> {
        vec![self.config.budget()]
    }

    /// Nearest grid position of `x`.
    pub fn grid_index(&self, x: f64) -> Result<usize> {
        check_domain(x, self.config.bound())?;
        let m = (x / self.resolution()).round() as usize;
        Ok(m.min(self.grid - 1))
    }

    /// Sum of counts over grid positions `lo..=hi`, via the canonical
    /// decomposition into at most `2(L-1)` nodes.
    pub fn count_grid_range(&self, lo: usize, hi: usize) -> (f64, usize) {
        if lo > hi || lo >= self.grid {
            return (0.0, 0);
        }
        let hi = hi.min(self.grid - 1);
        // 1-based heap indices: leaf m sits at leaves + m.
        let leaves = self.config.leaf_count();
        let (mut l, mut r) = (lo + leaves, hi + leaves + 1);
        let (mut total, mut nodes) = (0.0, 0);
        while l < r {
            if l & 1 == 1 {
                total += self.counts[l - 1];
                nodes += 1;
                l += 1;
            }
            if r & 1 == 1 {
                r -= 1;
                total += self.counts[r - 1];
                nodes += 1;
            }
            l >>= 1;
            r >>= 1;
        }
        (total, nodes)
    }

    /// Count of points whose grid position lies in the half-open `[a, b)`.
    /// Parts of the interval outside `[0, R)` are clipped.
    pub fn interval_count(&self, a: f64, b: f64) -> Result<IntervalCount> {
        if a.is_nan() || b.is_nan() {
            return Err(Error::NonFinite(f64::NAN));
        }
        let bound = self.config.bound();
        let clipped = a < 0.0 || b > bound;
        let (a, b) = (a.max(0.0), b.min(bound));
        if a >= b {
            return Ok(IntervalCount {
                value: 0.0,
                nodes: 0,
                clipped,
            });
        }
        let r0 = self.resolution();
        let lo = (a / r0).ceil() as usize;
        let hi_excl = (b / r0).ceil() as usize;
        let (value, nodes) = if hi_excl == 0 {
            (0.0, 0)
        } else {
            self.count_grid_range(lo, hi_excl - 1)
        };
        Ok(IntervalCount {
            value,
            nodes,
            clipped,
        })
    }

    /// Approximate private `sum_k |x_k - y|`.
    pub fn query(&self, y: f64) -> Result<f64> {
        Ok(self.query_detailed(y)?.value)
    }

    pub fn query_detailed(&self, y: f64) -> Result<BaselineAnswer> {
        check_domain(y, self.config.bound())?;
        let r0 = self.resolution();
        let grid = self.grid as f64;
        let base = 1.0 + self.alpha;
        let t = y / r0;
        let last = self.grid as i64 - 1;
        let clip = |lo: f64, hi: f64| -> Option<(usize, usize)> {
            let lo = (lo as i64).max(0);
            let hi = (hi as i64).min(last);
            (lo <= hi).then_some((lo as usize, hi as usize))
        };

        let mut answer = BaselineAnswer {
            value: 0.0,
            regions: 1,
            nodes: 0,
        };
        let add = |range: Option<(usize, usize)>, weight: f64, answer: &mut BaselineAnswer| {
            if let Some((lo, hi)) = range {
                let (c, nodes) = self.count_grid_range(lo, hi);
                answer.value += weight * c;
                answer.nodes += nodes;
            }
        };

        // Inner band: grid positions within distance r0 of y.
        add(clip((t - 1.0).ceil(), (t + 1.0).floor()), r0, &mut answer);

        // Geometric bands in grid units: distances in (b^i, b^(i+1)].
        let mut inner = 1.0;
        while inner < grid {
            let outer = inner * base;
            let weight = r0 * outer;
            add(
                clip((t + inner).floor() + 1.0, (t + outer).floor()),
                weight,
                &mut answer,
            );
            add(
                clip((t - outer).ceil(), (t - inner).ceil() - 1.0),
                weight,
                &mut answer,
            );
            answer.regions += 2;
            inner = outer;
        }
        Ok(answer)
    }
}

/// One [`CountingTree`] per coordinate, each at `eps / d`.
#[derive(Debug, Clone, PartialEq)]
pub struct HighDimCountingTree {
    trees: Vec<CountingTree>,
}

impl HighDimCountingTree {
    pub fn build<P: AsRef<[f64]> + Sync>(
        points: &[P],
        dim: usize,
        bound: f64,
        alpha: f64,
        budget: PrivacyBudget,
        noise: Option<RngSeed>,
    ) -> Result<Self> {
        let columns = project_columns(points, dim, bound)?;
        let part = split_budget(budget, dim)[0];
        let config = TreeConfig::new(points.len(), bound, part)?;
        let trees = columns
            .par_iter()
            .enumerate()
            .map(|(i, col)| {
                let mut stream = noise.map(|s| dimension_seed(s, i).stream());
                CountingTree::build(col, config, alpha, stream.as_mut())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { trees })
    }

    pub fn trees(&self) -> &[CountingTree] {
        &self.trees
    }

    pub fn noise_families(&self) -> Vec<PrivacyBudget> {
        self.trees
            .iter()
            .flat_map(CountingTree::noise_families)
            .collect()
    }

    pub fn query(&self, y: &[f64]) -> Result<f64> {
        check_query(y, self.trees.len())?;
        let mut total = 0.0;
        for (tree, &yi) in self.trees.iter().zip(y) {
            total += tree.query(yi)?;
        }
        Ok(total)
    }
}
