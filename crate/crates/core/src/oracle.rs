//! Exact brute-force distance sums used as reference answers.
//!
//! All sums use Neumaier compensated accumulation so the oracle stays more
//! accurate than the structures it checks, even at `n = 2^20`.

use std::ops::Range;

use crate::error::{Error, Result};

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

fn check_dim(point: &[f64], y: &[f64]) -> Result<()> {
    if point.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: point.len(),
        });
    }
    Ok(())
}

fn sum_rows<'a, I, F>(points: I, y: &[f64], dist: F) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
    F: Fn(&[f64], &[f64]) -> f64,
{
    let mut acc = CompensatedSum::new();
    for x in points {
        check_dim(x, y)?;
        acc.add(dist(x, y));
    }
    Ok(acc.value())
}

/// `sum_x ||x - y||_1`.
pub fn exact_l1<'a, I>(points: I, y: &[f64]) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    sum_rows(points, y, |x, y| {
        compensated_sum(x.iter().zip(y).map(|(a, b)| (a - b).abs()))
    })
}

/// `sum_x ||x - y||_2`.
pub fn exact_l2<'a, I>(points: I, y: &[f64]) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    sum_rows(points, y, |x, y| {
        compensated_sum(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b))).sqrt()
    })
}

/// `sum_x ||x - y||_p^p` for integer `p >= 1`.
pub fn exact_lpp<'a, I>(points: I, y: &[f64], p: u32) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    sum_rows(points, y, |x, y| {
        compensated_sum(x.iter().zip(y).map(|(a, b)| (a - b).abs().powi(p as i32)))
    })
}

/// One-dimensional `sum_k |x_k - y|`.
pub fn exact_l1_1d(points: &[f64], y: f64) -> f64 {
    compensated_sum(points.iter().map(|x| (x - y).abs()))
}

/// One-dimensional `sum_k |x_k - y|^p`.
pub fn exact_lpp_1d(points: &[f64], y: f64, p: u32) -> f64 {
    compensated_sum(points.iter().map(|x| (x - y).abs().powi(p as i32)))
}

/// `sum_k |x_k - y|` over points outside the half-open `excluded` interval.
pub fn exact_l1_restricted(points: &[f64], y: f64, excluded: Range<f64>) -> f64 {
    exact_lpp_restricted(points, y, 1, excluded)
}

/// `sum_k |x_k - y|^p` over points outside the half-open `excluded` interval.
pub fn exact_lpp_restricted(points: &[f64], y: f64, p: u32, excluded: Range<f64>) -> f64 {
    compensated_sum(
        points
            .iter()
            .filter(|x| !excluded.contains(x))
            .map(|x| (x - y).abs().powi(p as i32)),
    )
}
