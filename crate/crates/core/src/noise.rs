//! Seeded Laplace noise and pure-DP budget bookkeeping.
//!
//! Every stochastic component draws from a [`NoiseStream`] built from an
//! [`RngSeed`]. Seeds form a tree: a child seed is derived from its parent by
//! a label and an index (`root.derive("tree", 3)`), so a whole experiment is
//! reproducible from a single root value.

use std::fmt;

use rand::distr::Open01;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

/// Root seed used when the caller does not supply one.
pub const DEFAULT_SEED: u64 = 0xDEAD_BEEF;

/// Scale parameter of a zero-mean Laplace distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceScale(f64);

impl LaplaceScale {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Laplace scale must be positive and finite, got {lambda}"
            )));
        }
        Ok(Self(lambda))
    }

    /// Scale calibrated to an L1 sensitivity under a pure-DP budget.
    pub fn calibrated(sensitivity: f64, budget: PrivacyBudget) -> Result<Self> {
        Self::new(sensitivity / budget.epsilon())
    }

    pub fn lambda(self) -> f64 {
        self.0
    }

    /// Variance of the distribution, `2 * lambda^2`.
    pub fn variance(self) -> f64 {
        2.0 * self.0 * self.0
    }
}

/// An `(epsilon, delta)` privacy budget. Only `delta = 0` is composable here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    /// Pure `epsilon`-DP budget.
    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in [0, 1), got {delta}"
            )));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn epsilon(self) -> f64 {
        self.epsilon
    }

    pub fn delta(self) -> f64 {
        self.delta
    }

    pub fn is_pure(self) -> bool {
        self.delta == 0.0
    }
}

impl fmt::Display for PrivacyBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_pure() {
            write!(f, "{}-DP", self.epsilon)
        } else {
            write!(f, "({}, {})-DP", self.epsilon, self.delta)
        }
    }
}

/// Sequential composition of pure-DP mechanisms: epsilons add.
pub fn compose_budgets(parts: &[PrivacyBudget]) -> Result<PrivacyBudget> {
    if parts.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot compose an empty list of budgets".into(),
        ));
    }
    if let Some(p) = parts.iter().find(|p| !p.is_pure()) {
        return Err(Error::ApproximateBudget(p.delta));
    }
    PrivacyBudget::pure(parts.iter().map(|p| p.epsilon).sum())
}

/// Splits `total` into `ways` equal pure-DP budgets.
///
/// # Panics
///
/// Panics if `ways == 0`.
pub fn split_budget(total: PrivacyBudget, ways: usize) -> Vec<PrivacyBudget> {
    assert!(ways >= 1, "a budget must be split at least one way");
    let part = PrivacyBudget {
        epsilon: total.epsilon / ways as f64,
        delta: total.delta / ways as f64,
    };
    vec![part; ways]
}

/// A 64-bit seed with deterministic child derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed(pub u64);

impl Default for RngSeed {
    fn default() -> Self {
        Self(DEFAULT_SEED)
    }
}

impl RngSeed {
    /// Child seed for the component named `label`, instance `index`.
    pub fn derive(self, label: &str, index: u64) -> RngSeed {
        // FNV-1a over the label, then two rounds of the SplitMix64 finalizer.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        let x = mix64(self.0 ^ h);
        RngSeed(mix64(x ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
    }

    pub fn stream(self) -> NoiseStream {
        NoiseStream::new(self)
    }
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A single-owner deterministic random stream.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha12Rng,
}

impl NoiseStream {
    pub fn new(seed: RngSeed) -> Self {
        Self {
            rng: ChaCha12Rng::seed_from_u64(seed.0),
        }
    }

    /// One draw from Laplace(0, scale) by inverse CDF.
    pub fn laplace(&mut self, scale: LaplaceScale) -> f64 {
        // u in the open interval (-1/2, 1/2), so ln(1 - 2|u|) is finite.
        let u: f64 = self.rng.sample::<f64, _>(Open01) - 0.5;
        -scale.0 * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }

    /// Adds independent Laplace noise to every entry of `values`.
    pub fn perturb(&mut self, values: &mut [f64], scale: LaplaceScale) {
        for v in values {
            *v += self.laplace(scale);
        }
    }

    pub fn rng(&mut self) -> &mut impl Rng {
        &mut self.rng
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}
