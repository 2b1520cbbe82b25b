//! d-dimensional `sum_x ||x - y||_1` by running one 1-D tree per coordinate,
//! each at budget `eps / d`, and summing the per-coordinate answers.

use rayon::prelude::*;

use crate::error::{check_domain, Error, Result};
use crate::l1tree::NoisyL1Tree;
use crate::noise::{split_budget, PrivacyBudget, RngSeed};
use crate::tree::TreeConfig;

/// Splits row-major points into one column per coordinate, validating shape
/// and domain.
pub(crate) fn project_columns<P: AsRef<[f64]>>(
    points: &[P],
    dim: usize,
    bound: f64,
) -> Result<Vec<Vec<f64>>> {
    if dim == 0 {
        return Err(Error::InvalidParameter(
            "dimension must be at least 1".into(),
        ));
    }
    let mut columns = vec![Vec::with_capacity(points.len()); dim];
    for p in points {
        let p = p.as_ref();
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        for (col, &v) in columns.iter_mut().zip(p) {
            check_domain(v, bound)?;
            col.push(v);
        }
    }
    Ok(columns)
}

pub(crate) fn check_query(y: &[f64], dim: usize) -> Result<()> {
    if y.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: y.len(),
        });
    }
    Ok(())
}

/// Seed of the noise stream for coordinate `i`.
pub fn dimension_seed(root: RngSeed, i: usize) -> RngSeed {
    root.derive("dimension", i as u64)
}

/// One [`NoisyL1Tree`] per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct HighDimTree {
    total_budget: PrivacyBudget,
    trees: Vec<NoisyL1Tree>,
}

impl HighDimTree {
    /// Builds `dim` independent trees over `points` in `[0, bound)^dim`.
    ///
    /// With `noise = Some(seed)`, tree `i` draws from
    /// [`dimension_seed(seed, i)`](dimension_seed).
    pub fn build<P: AsRef<[f64]> + Sync>(
        points: &[P],
        dim: usize,
        bound: f64,
        budget: PrivacyBudget,
        noise: Option<RngSeed>,
    ) -> Result<Self> {
        Self::build_with_layers(points, dim, bound, None, budget, noise)
    }

    /// As [`build`](Self::build), optionally overriding the layer count.
    pub fn build_with_layers<P: AsRef<[f64]> + Sync>(
        points: &[P],
        dim: usize,
        bound: f64,
        layers: Option<u32>,
        budget: PrivacyBudget,
        noise: Option<RngSeed>,
    ) -> Result<Self> {
        let columns = project_columns(points, dim, bound)?;
        let part = split_budget(budget, dim)[0];
        let config = match layers {
            Some(l) => TreeConfig::with_layers(points.len(), bound, l, part)?,
            None => TreeConfig::new(points.len(), bound, part)?,
        };
        let trees = columns
            .par_iter()
            .enumerate()
            .map(|(i, col)| {
                let mut stream = noise.map(|s| dimension_seed(s, i).stream());
                NoisyL1Tree::build(col, config, stream.as_mut())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            total_budget: budget,
            trees,
        })
    }

    pub fn from_trees(total_budget: PrivacyBudget, trees: Vec<NoisyL1Tree>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Format("a structure needs at least one tree".into()));
        }
        Ok(Self {
            total_budget,
            trees,
        })
    }

    pub fn dim(&self) -> usize {
        self.trees.len()
    }

    pub fn trees(&self) -> &[NoisyL1Tree] {
        &self.trees
    }

    pub fn total_budget(&self) -> PrivacyBudget {
        self.total_budget
    }

    /// Shared per-coordinate config.
    pub fn config(&self) -> &TreeConfig {
        self.trees[0].config()
    }

    /// Budgets of every released noise family across all coordinates.
    pub fn noise_families(&self) -> Vec<PrivacyBudget> {
        self.trees
            .iter()
            .flat_map(NoisyL1Tree::noise_families)
            .collect()
    }

    /// Private estimate of `sum_x ||x - y||_1`, summed in coordinate order.
    pub fn query(&self, y: &[f64]) -> Result<f64> {
        check_query(y, self.dim())?;
        let mut total = 0.0;
        for (tree, &yi) in self.trees.iter().zip(y) {
            total += tree.query(yi)?;
        }
        Ok(total)
    }
}
