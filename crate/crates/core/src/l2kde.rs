//! Private `sum_x ||x - y||_2` via a Gaussian embedding into l1.
//!
//! The linear map `T(x)_i = (1 / (beta * k)) * sum_j Z_ij x_j`, with `Z_ij`
//! standard normal and `beta = sqrt(2 / pi)`, preserves the l2 norm as an l1
//! norm within `(1 +- alpha)` with high probability when
//! `k = ceil(8 * (ln n + 5) / alpha^2)`. The embedded points are shifted into
//! `[0, R')` and indexed by a [`HighDimTree`] over `k` coordinates.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::multidim::HighDimTree;
use crate::noise::{PrivacyBudget, RngSeed};

/// Slack applied to the coordinate span so the largest embedded value stays
/// strictly inside `[0, R')`.
pub const RANGE_SLACK: f64 = 1e-6;

/// `sqrt(2 / pi)`, the mean of `|Z|` for standard normal `Z`.
pub fn beta() -> f64 {
    (2.0 / PI).sqrt()
}

/// Target dimension `ceil(8 * (ln n + 5) / alpha^2)`.
pub fn target_dimension(n: usize, alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "distortion alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let n = n.max(1) as f64;
    Ok((8.0 * (n.ln() + 5.0) / (alpha * alpha)).ceil() as usize)
}

/// A fixed Gaussian embedding `R^d_in -> R^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpec {
    d_in: usize,
    k: usize,
    alpha: f64,
    seed: RngSeed,
    // k x d_in, row-major
    matrix: Vec<f64>,
}

impl EmbeddingSpec {
    /// Embedding sized for `n` points at distortion `alpha`.
    pub fn new(d_in: usize, alpha: f64, n: usize, seed: RngSeed) -> Result<Self> {
        let k = target_dimension(n, alpha)?;
        Self::with_dimension(d_in, k, alpha, seed)
    }

    /// Embedding with an explicit target dimension; the matrix is a pure
    /// function of `(d_in, k, seed)`.
    pub fn with_dimension(d_in: usize, k: usize, alpha: f64, seed: RngSeed) -> Result<Self> {
        if d_in == 0 || k == 0 {
            return Err(Error::InvalidParameter(
                "embedding dimensions must be positive".into(),
            ));
        }
        let mut stream = seed.derive("embedding", 0).stream();
        let matrix = (0..k * d_in)
            .map(|_| StandardNormal.sample(stream.rng()))
            .collect();
        Ok(Self {
            d_in,
            k,
            alpha,
            seed,
            matrix,
        })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn seed(&self) -> RngSeed {
        self.seed
    }

    /// `T(x)`.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_in {
            return Err(Error::DimensionMismatch {
                expected: self.d_in,
                got: x.len(),
            });
        }
        let scale = 1.0 / (beta() * self.k as f64);
        Ok(self
            .matrix
            .chunks_exact(self.d_in)
            .map(|row| scale * row.iter().zip(x).map(|(z, v)| z * v).sum::<f64>())
            .collect())
    }
}

/// Answer of an l2 query together with the number of embedded query
/// coordinates that had to be clamped into `[0, R')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2Answer {
    pub value: f64,
    pub clamped: usize,
}

/// Points after embedding and shifting into `[0, R')`, ready to be indexed.
///
/// Building several noisy structures over the same data (Monte-Carlo trials)
/// reuses one embedding pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedPoints {
    embedding: EmbeddingSpec,
    shift: f64,
    range: f64,
    coords: Vec<Vec<f64>>,
}

impl EmbeddedPoints {
    /// Embeds `points` and shifts them by the negated minimum coordinate.
    /// `R'` is the coordinate span plus [`RANGE_SLACK`] (1 when the span is
    /// zero or the dataset is empty).
    pub fn new<P: AsRef<[f64]>>(points: &[P], embedding: EmbeddingSpec) -> Result<Self> {
        let mut coords = Vec::with_capacity(points.len());
        for p in points {
            coords.push(embedding.embed(p.as_ref())?);
        }
        let (lo, hi) = coords
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let (shift, range) = if coords.is_empty() {
            (0.0, 1.0)
        } else if hi > lo {
            (-lo, (hi - lo) * (1.0 + RANGE_SLACK))
        } else {
            (-lo, 1.0)
        };
        for row in &mut coords {
            for v in row.iter_mut() {
                *v = (*v + shift).clamp(0.0, below(range));
            }
        }
        Ok(Self {
            embedding,
            shift,
            range,
            coords,
        })
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    /// Shifted embedded coordinates, one row per point.
    pub fn coords(&self) -> &[Vec<f64>] {
        &self.coords
    }

    /// Indexes the embedded points with an inner tree at `budget`.
    pub fn build(&self, budget: PrivacyBudget, noise: Option<RngSeed>) -> Result<L2KdeStructure> {
        let inner =
            HighDimTree::build(&self.coords, self.embedding.k(), self.range, budget, noise)?;
        Ok(L2KdeStructure {
            embedding: self.embedding.clone(),
            shift: self.shift,
            range: self.range,
            inner,
        })
    }
}

/// Embedding plus the l1 structure over the shifted embedded points.
#[derive(Debug, Clone, PartialEq)]
pub struct L2KdeStructure {
    embedding: EmbeddingSpec,
    shift: f64,
    range: f64,
    inner: HighDimTree,
}

impl L2KdeStructure {
    /// Embeds, shifts and indexes `points` at `budget`; see [`EmbeddedPoints`].
    pub fn build<P: AsRef<[f64]>>(
        points: &[P],
        embedding: EmbeddingSpec,
        budget: PrivacyBudget,
        noise: Option<RngSeed>,
    ) -> Result<Self> {
        EmbeddedPoints::new(points, embedding)?.build(budget, noise)
    }

    pub fn from_parts(
        embedding: EmbeddingSpec,
        shift: f64,
        range: f64,
        inner: HighDimTree,
    ) -> Result<Self> {
        if inner.dim() != embedding.k() {
            return Err(Error::Format(format!(
                "inner structure has {} dimensions, embedding has {}",
                inner.dim(),
                embedding.k()
            )));
        }
        Ok(Self {
            embedding,
            shift,
            range,
            inner,
        })
    }

    pub fn embedding(&self) -> &EmbeddingSpec {
        &self.embedding
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Post-embedding coordinate bound `R'`.
    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn inner(&self) -> &HighDimTree {
        &self.inner
    }

    pub fn noise_families(&self) -> Vec<PrivacyBudget> {
        self.inner.noise_families()
    }

    /// Shifted embedding of `y`, clamped into `[0, R')`.
    pub fn embed_query(&self, y: &[f64]) -> Result<(Vec<f64>, usize)> {
        let mut clamped = 0;
        let top = below(self.range);
        let coords = self
            .embedding
            .embed(y)?
            .into_iter()
            .map(|v| {
                let s = v + self.shift;
                if !(0.0..=top).contains(&s) {
                    clamped += 1;
                }
                s.clamp(0.0, top)
            })
            .collect();
        Ok((coords, clamped))
    }

    pub fn query_detailed(&self, y: &[f64]) -> Result<L2Answer> {
        let (coords, clamped) = self.embed_query(y)?;
        Ok(L2Answer {
            value: self.inner.query(&coords)?,
            clamped,
        })
    }

    /// Private estimate of `sum_x ||x - y||_2`.
    pub fn query(&self, y: &[f64]) -> Result<f64> {
        Ok(self.query_detailed(y)?.value)
    }
}

/// Largest float strictly below `x`.
fn below(x: f64) -> f64 {
    f64::from_bits(x.to_bits() - 1)
}
