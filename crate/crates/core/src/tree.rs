//! Geometry shared by every balanced interval tree in the crate.
//!
//! Layers are numbered `1..=L` with the root at layer 1. Layer `l` holds
//! `2^(l-1)` nodes; node `j` (0-based) of layer `l` covers the half-open
//! interval `[j * R / 2^(l-1), (j + 1) * R / 2^(l-1))`. Nodes are stored in a
//! single flat array in heap order, so layer `l` starts at offset
//! `2^(l-1) - 1` and the whole tree has `2^L - 1` entries.

use std::ops::Range;

use crate::error::{check_domain, Error, Result};
use crate::noise::PrivacyBudget;

/// Largest supported layer count. `2^MAX_LAYERS` nodes would not fit in memory
/// long before this, but it keeps every shift in range.
pub const MAX_LAYERS: u32 = 48;

/// Smallest `L` whose leaf layer has at least `n` intervals: `ceil(log2 n) + 1`.
pub fn choose_layers(n: usize) -> u32 {
    if n <= 1 {
        1
    } else {
        ceil_log2(n) + 1
    }
}

pub(crate) fn ceil_log2(n: usize) -> u32 {
    debug_assert!(n >= 1);
    usize::BITS - (n - 1).leading_zeros()
}

/// Shape and budget shared by all tree variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeConfig {
    n: usize,
    bound: f64,
    layers: u32,
    budget: PrivacyBudget,
}

impl TreeConfig {
    /// Config for `n` points in `[0, bound)` using [`choose_layers`].
    pub fn new(n: usize, bound: f64, budget: PrivacyBudget) -> Result<Self> {
        Self::with_layers(n, bound, choose_layers(n), budget)
    }

    pub fn with_layers(n: usize, bound: f64, layers: u32, budget: PrivacyBudget) -> Result<Self> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "value bound R must be positive and finite, got {bound}"
            )));
        }
        if !(1..=MAX_LAYERS).contains(&layers) {
            return Err(Error::InvalidParameter(format!(
                "layer count must be in [1, {MAX_LAYERS}], got {layers}"
            )));
        }
        Ok(Self {
            n,
            bound,
            layers,
            budget,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn layers(&self) -> u32 {
        self.layers
    }

    pub fn budget(&self) -> PrivacyBudget {
        self.budget
    }

    pub fn leaf_count(&self) -> usize {
        1 << (self.layers - 1)
    }

    /// Total number of nodes, `2^L - 1`.
    pub fn node_count(&self) -> usize {
        (1 << self.layers) - 1
    }

    pub fn leaf_width(&self) -> f64 {
        self.bound / self.leaf_count() as f64
    }

    /// 0-based index of the leaf whose interval contains `value`.
    pub fn leaf_index(&self, value: f64) -> Result<usize> {
        check_domain(value, self.bound)?;
        let leaves = self.leaf_count();
        let j = (value / self.bound * leaves as f64).floor() as usize;
        Ok(j.min(leaves - 1))
    }

    /// Half-open interval of node `j` (0-based) on layer `layer` (1-based).
    pub fn interval(&self, layer: u32, j: usize) -> Range<f64> {
        let width = self.bound / (1u64 << (layer - 1)) as f64;
        j as f64 * width..(j + 1) as f64 * width
    }

    /// Half-open interval of the leaf containing `value`.
    pub fn leaf_interval(&self, value: f64) -> Result<Range<f64>> {
        Ok(self.interval(self.layers, self.leaf_index(value)?))
    }
}

/// Offset of layer `layer` (1-based) in a heap-ordered flat array.
#[inline]
pub(crate) fn layer_offset(layer: u32) -> usize {
    (1 << (layer - 1)) - 1
}

/// Index of node `j` on layer `layer` in a heap-ordered flat array.
#[inline]
pub(crate) fn flat_index(layer: u32, j: usize) -> usize {
    layer_offset(layer) + j
}

/// Fills every internal node with the sum of its two children, bottom-up.
///
/// `values` holds `width` interleaved entries per node.
pub(crate) fn aggregate_up(values: &mut [f64], layers: u32, width: usize) {
    for layer in (1..layers).rev() {
        let count = 1usize << (layer - 1);
        for j in 0..count {
            let parent = flat_index(layer, j) * width;
            let left = flat_index(layer + 1, 2 * j) * width;
            let right = flat_index(layer + 1, 2 * j + 1) * width;
            for q in 0..width {
                values[parent + q] = values[left + q] + values[right + q];
            }
        }
    }
}

/// Sibling visited at each layer `2..=L` on the path to `leaf`.
///
/// Yields `(flat index of sibling, sibling is left of the path)`.
pub(crate) fn path_siblings(layers: u32, leaf: usize) -> impl Iterator<Item = (usize, bool)> {
    (2..=layers).map(move |layer| {
        let j = leaf >> (layers - layer);
        if j & 1 == 1 {
            (flat_index(layer, j - 1), true)
        } else {
            (flat_index(layer, j + 1), false)
        }
    })
}
