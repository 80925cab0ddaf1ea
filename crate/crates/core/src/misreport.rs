//! Manufacturer misreporting strategies.
//!
//! A strategy is a row-stochastic matrix `r` with `r[i][j]` the probability
//! of reporting potential `j` when the true potential is `i`.

use rand::Rng;

use crate::error::{Error, PolicyViolation, Result};
use crate::market::MarketModel;

const ROW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyClass {
    /// Always report the truth.
    Identity,
    /// Only under-reports: `r[i][j] = 0` for `i < j`.
    Greedy,
    /// Arbitrary stochastic matrix, may over-report.
    General,
}

impl PolicyClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyClass::Identity => "identity",
            PolicyClass::Greedy => "greedy",
            PolicyClass::General => "general",
        }
    }
}

impl std::str::FromStr for PolicyClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" => Ok(PolicyClass::Identity),
            "greedy" => Ok(PolicyClass::Greedy),
            "general" => Ok(PolicyClass::General),
            other => Err(format!("unknown policy class '{other}' (expected identity, greedy or general)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportPolicy {
    rows: Vec<Vec<f64>>,
    class: PolicyClass,
}

impl ReportPolicy {
    /// Truthful reporting over `n` states.
    pub fn identity(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { rows, class: PolicyClass::Identity }
    }

    /// Validates `rows` against the constraints of `class`, collecting every
    /// violation. Rows are never renormalized.
    pub fn new(rows: Vec<Vec<f64>>, class: PolicyClass) -> Result<Self> {
        let n = rows.len();
        let mut bad = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                bad.push(PolicyViolation::NotSquare { expected: n, row: i, len: row.len() });
                continue;
            }
            for (j, &v) in row.iter().enumerate() {
                if v.is_nan() || v < 0.0 {
                    bad.push(PolicyViolation::Negative { row: i, col: j, value: v });
                } else if v > 1.0 {
                    bad.push(PolicyViolation::AboveOne { row: i, col: j, value: v });
                }
                match class {
                    PolicyClass::Greedy if j > i && v != 0.0 => {
                        bad.push(PolicyViolation::OverReport { row: i, col: j, value: v })
                    }
                    PolicyClass::Identity if (i == j && v != 1.0) || (i != j && v != 0.0) => {
                        bad.push(PolicyViolation::NotIdentity { row: i, col: j, value: v })
                    }
                    _ => {}
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL {
                bad.push(PolicyViolation::RowSum { row: i, sum });
            }
        }
        if n == 0 {
            bad.push(PolicyViolation::NotSquare { expected: 1, row: 0, len: 0 });
        }
        if bad.is_empty() {
            Ok(Self { rows, class })
        } else {
            Err(Error::InvalidPolicy(bad))
        }
    }

    /// Classifies an already row-stochastic matrix with the tightest tag.
    pub fn classify(rows: Vec<Vec<f64>>) -> Result<Self> {
        let tag = {
            let n = rows.len();
            let ident = rows.iter().enumerate().all(|(i, r)| {
                r.len() == n && r.iter().enumerate().all(|(j, &v)| v == if i == j { 1.0 } else { 0.0 })
            });
            let greedy = rows.iter().enumerate().all(|(i, r)| r.iter().skip(i + 1).all(|&v| v == 0.0));
            if ident {
                PolicyClass::Identity
            } else if greedy {
                PolicyClass::Greedy
            } else {
                PolicyClass::General
            }
        };
        Self::new(rows, tag)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn class(&self) -> PolicyClass {
        self.class
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    #[inline]
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    /// True when the matrix is the identity, whatever its tag.
    pub fn is_truthful(&self) -> bool {
        self.rows
            .iter()
            .enumerate()
            .all(|(i, r)| r.iter().enumerate().all(|(j, &v)| v == if i == j { 1.0 } else { 0.0 }))
    }

    /// Whether every entry above the diagonal is zero.
    pub fn is_under_reporting(&self) -> bool {
        self.rows.iter().enumerate().all(|(i, r)| r.iter().skip(i + 1).all(|&v| v == 0.0))
    }

    pub fn check_dimension(&self, model: &MarketModel) -> Result<()> {
        if self.len() != model.len() {
            return Err(Error::DimensionMismatch { policy: self.len(), market: model.len() });
        }
        Ok(())
    }

    /// Marginal probability of each report, `sum_i sigma_i r[i][j]`.
    pub fn report_probabilities(&self, model: &MarketModel) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|j| (0..n).map(|i| model.sigma(i) * self.rows[i][j]).sum())
            .collect()
    }
}

/// Long-run gap between the true mean potential and the mean report.
///
/// For under-reporting policies only `i >= j` terms are nonzero, giving a
/// nonnegative value; for general policies the signed sum over all pairs.
pub fn expected_deviation(r: &ReportPolicy, model: &MarketModel) -> f64 {
    let n = r.len();
    let mut f = 0.0;
    for i in 0..n {
        for j in 0..n {
            let p = r.prob(i, j);
            if p != 0.0 {
                f += model.sigma(i) * (model.phi(i) - model.phi(j)) * p;
            }
        }
    }
    f
}

/// Inverse-CDF draw from a probability vector. Zero-probability entries are
/// never returned.
pub fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = k;
        if u < acc {
            return k;
        }
    }
    // rounding left u above the accumulated mass
    last
}

/// Draws the reported state for true state `true_index`.
pub fn sample_report<R: Rng + ?Sized>(true_index: usize, r: &ReportPolicy, rng: &mut R) -> usize {
    sample_index(&r.rows[true_index], rng)
}
