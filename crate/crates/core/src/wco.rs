//! Worst-case optimal (WCO) linear rebates for identical objects.
//!
//! With the other agents' values sorted as `y_1 >= ... >= y_{n-1}`, agent
//! `i` receives `sum_{j=p+1}^{n-1} c_j y_j`. Coefficients and the optimal
//! redistribution index are exact rationals.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::money::{binomial_q, Money};
use crate::profile::BidProfile;

/// Coefficients `c_{p+1}, ..., c_{n-1}` of a linear rebate rule.
#[derive(Clone, Debug, PartialEq)]
pub struct RebateCoefficients {
    pub n: usize,
    pub p: usize,
    /// Index of the first entry of `c` (`p + 1` for WCO).
    pub first_index: usize,
    pub c: Vec<BigRational>,
}

impl RebateCoefficients {
    /// `c_j` by its 1-based index; zero outside the stored range.
    pub fn get(&self, index: usize) -> BigRational {
        index
            .checked_sub(self.first_index)
            .and_then(|k| self.c.get(k))
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }
}

fn check_size(n: usize, p: usize) -> Result<()> {
    if p == 0 || n <= p {
        return Err(Error::InvalidSize {
            n,
            p,
            reason: "requires n > p >= 1".into(),
        });
    }
    Ok(())
}

/// `sum_{j=from}^{n-1} C(n-1, j)`.
fn tail_sum(n: usize, from: usize) -> BigRational {
    (from..n).fold(BigRational::zero(), |acc, j| acc + binomial_q((n - 1) as u64, j as u64))
}

pub fn wco_coefficients(n: usize, p: usize) -> Result<RebateCoefficients> {
    check_size(n, p)?;
    let denom_sum = tail_sum(n, p);
    let lead = BigRational::from_integer(((n - p) as i64).into()) * binomial_q((n - 1) as u64, (p - 1) as u64);
    let c = (p + 1..n)
        .map(|i| {
            let sign = if (i + p - 1).is_multiple_of(2) {
                BigRational::one()
            } else {
                -BigRational::one()
            };
            let denom = BigRational::from_integer((i as i64).into())
                * binomial_q((n - 1) as u64, i as u64)
                * denom_sum.clone();
            sign * lead.clone() * tail_sum(n, i) / denom
        })
        .collect();
    Ok(RebateCoefficients {
        n,
        p,
        first_index: p + 1,
        c,
    })
}

/// Optimal worst-case redistribution index `e* = 1 - C(n-1,p) / sum_{j=p}^{n-1} C(n-1,j)`.
pub fn wco_index(n: usize, p: usize) -> Result<BigRational> {
    check_size(n, p)?;
    Ok(BigRational::one() - binomial_q((n - 1) as u64, p as u64) / tail_sum(n, p))
}

/// Rebate to one agent from the values of the other `n - 1` agents (any order).
pub fn wco_rebate<M: Money>(others: &[M], coeffs: &RebateCoefficients) -> Result<M> {
    if others.len() + 1 != coeffs.n {
        return Err(Error::DimensionMismatch(format!(
            "expected {} other values, found {}",
            coeffs.n - 1,
            others.len()
        )));
    }
    let mut sorted = others.to_vec();
    sort_descending(&mut sorted);
    Ok(linear_rebate(&sorted, coeffs))
}

/// `sum_j c_j y_j` over 1-based positions of the descending `sorted` values.
pub(crate) fn linear_rebate<M: Money>(sorted: &[M], coeffs: &RebateCoefficients) -> M {
    coeffs
        .c
        .iter()
        .enumerate()
        .fold(M::zero(), |acc, (k, c)| {
            let y = &sorted[coeffs.first_index + k - 1];
            if y.is_zero() || c.is_zero() {
                acc
            } else {
                acc + M::from_rational(c) * y.clone()
            }
        })
}

pub(crate) fn sort_descending<M: Money>(values: &mut [M]) {
    values.sort_by(|a, b| b.partial_cmp(a).expect("values are comparable"));
}

/// Rebates to every agent of a profile whose rows are constant.
pub fn wco_rebates<M: Money>(profile: &BidProfile<M>) -> Result<Vec<M>> {
    let values = profile.homogeneous_values()?;
    let coeffs = wco_coefficients(profile.n(), profile.p())?;
    wco_rebates_for_values(&values, &coeffs)
}

pub fn wco_rebates_for_values<M: Money>(values: &[M], coeffs: &RebateCoefficients) -> Result<Vec<M>> {
    (0..values.len())
        .map(|i| {
            let others: Vec<M> = values
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, v)| v.clone())
                .collect();
            wco_rebate(&others, coeffs)
        })
        .collect()
}

/// Whether `sum a_i x_i >= 0` for every `x_1 >= x_2 >= ... >= 0`,
/// i.e. every prefix sum of `a` is nonnegative.
pub fn prefix_dominance(a: &[BigRational]) -> bool {
    prefix_violation(a).is_none()
}

/// First prefix length `j` (1-based) whose sum is negative.
pub fn prefix_violation(a: &[BigRational]) -> Option<usize> {
    let mut sum = BigRational::zero();
    for (k, x) in a.iter().enumerate() {
        sum += x;
        if sum.is_negative() {
            return Some(k + 1);
        }
    }
    None
}

/// A sorted nonnegative `x` with `sum a_i x_i < 0`, when one exists: the
/// indicator of the shortest violating prefix.
pub fn prefix_witness(a: &[BigRational]) -> Option<Vec<BigRational>> {
    let j = prefix_violation(a)?;
    Some(
        (0..a.len())
            .map(|k| if k < j { BigRational::one() } else { BigRational::zero() })
            .collect(),
    )
}
