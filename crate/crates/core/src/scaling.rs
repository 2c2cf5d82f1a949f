//! Linear redistribution when valuations follow a scaling relationship
//! `b[i][j] = gamma[j] * v_i` with public `gamma_1 >= ... >= gamma_p > 0`.
//!
//! The optimal rebate rule solves a small LP in `(e, x_2, ..., x_{n-1})`
//! whose constraint matrix is lower bidiagonal:
//!
//! ```text
//! maximize e
//!   e*beta_{i-1} <= i*x_{i-1} + (n-i)*x_i <= beta_{i-1}    i = 2..n
//!   x >= 0                                  (x_1 = x_n = 0 implicitly)
//! ```
//!
//! For fixed `e` the feasible values of each `x_i` given the rows above it
//! form an interval, so feasibility is decided exactly by propagating those
//! intervals forward. Feasibility is monotone in `e`, which is found by
//! bisection in exact rationals followed by snapping to the simplest
//! rational in the final bracket when that point is itself feasible.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::money::{binomial_q, int, simplest_between, Money};
use crate::profile::BidProfile;
use crate::wco::{linear_rebate, prefix_dominance, RebateCoefficients};

/// Bisection stops once the bracket is narrower than `2^-BISECTION_BITS`.
pub const BISECTION_BITS: u32 = 60;

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    /// Largest feasible redistribution index found.
    pub e_star: BigRational,
    /// Smallest value known to be infeasible (`None` when `e_star = 1`).
    pub infeasible_above: Option<BigRational>,
    /// `x_2, ..., x_{n-1}`.
    pub x: Vec<BigRational>,
    /// `c_2, ..., c_{n-1}` with `c_2 = x_2`, `c_j = x_j - x_{j-1}`.
    pub coefficients: RebateCoefficients,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingModel {
    pub n: usize,
    pub p: usize,
    pub gamma: Vec<BigRational>,
    /// `beta_1, ..., beta_{n-1}`.
    pub beta: Vec<BigRational>,
    pub lp: Option<LpSolution>,
    /// `min(A/B, B/A)` upper bound on the LP value.
    pub bound: Option<BigRational>,
}

impl ScalingModel {
    pub fn new(n: usize, p: usize, gamma: Vec<BigRational>) -> Result<Self> {
        validate_gamma(p, &gamma)?;
        if n <= p + 1 {
            return Err(Error::InvalidSize {
                n,
                p,
                reason: "scaling LP requires n > p + 1".into(),
            });
        }
        let beta = betas(n, &gamma);
        Ok(ScalingModel {
            n,
            p,
            gamma,
            beta,
            lp: None,
            bound: None,
        })
    }

    /// `gamma_j` for 1-based `j`, zero for the virtual objects `j > p`.
    pub fn gamma_at(&self, j: usize) -> BigRational {
        gamma_at(&self.gamma, j)
    }

    fn beta_at(&self, i: usize) -> &BigRational {
        &self.beta[i - 1]
    }

    pub fn solution(&self) -> Result<&LpSolution> {
        self.lp
            .as_ref()
            .ok_or_else(|| Error::Precondition("scaling model has not been solved".into()))
    }
}

fn gamma_at(gamma: &[BigRational], j: usize) -> BigRational {
    if j >= 1 && j <= gamma.len() {
        gamma[j - 1].clone()
    } else {
        BigRational::zero()
    }
}

fn validate_gamma(p: usize, gamma: &[BigRational]) -> Result<()> {
    if gamma.len() != p {
        return Err(Error::InvalidGamma(format!("expected {p} entries, found {}", gamma.len())));
    }
    if gamma.iter().all(Zero::is_zero) {
        return Err(Error::InvalidGamma("all-zero gamma is degenerate".into()));
    }
    if gamma.iter().any(|g| !g.is_positive()) {
        return Err(Error::InvalidGamma("entries must be positive".into()));
    }
    if gamma.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidGamma("entries must be non-increasing".into()));
    }
    Ok(())
}

/// `beta_1 = gamma_1 - gamma_2`, `beta_i = i (gamma_i - gamma_{i+1}) + beta_{i-1}`.
pub fn betas(n: usize, gamma: &[BigRational]) -> Vec<BigRational> {
    let mut beta: Vec<BigRational> = Vec::with_capacity(n.saturating_sub(1));
    for i in 1..n {
        let step = int(i as i64) * (gamma_at(gamma, i) - gamma_at(gamma, i + 1));
        let prev = beta.last().cloned().unwrap_or_else(BigRational::zero);
        beta.push(step + prev);
    }
    beta
}

/// Clarke payments `t_i = sum_{j=i}^{p} (gamma_j - gamma_{j+1}) v_{j+1}` for
/// values sorted in non-increasing order.
pub fn scaling_payments<M: Money>(gamma: &[M], sorted: &[M]) -> Result<Vec<M>> {
    check_sorted(sorted)?;
    let p = gamma.len();
    if sorted.len() <= p {
        return Err(Error::InvalidSize {
            n: sorted.len(),
            p,
            reason: "requires n > p".into(),
        });
    }
    let g = |j: usize| if j <= p { gamma[j - 1].clone() } else { M::zero() };
    Ok((1..=sorted.len())
        .map(|i| {
            (i..=p).fold(M::zero(), |acc, j| acc + (g(j) - g(j + 1)) * sorted[j].clone())
        })
        .collect())
}

fn check_sorted<M: Money>(values: &[M]) -> Result<()> {
    if values.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Unsorted);
    }
    if values.iter().any(|v| !v.is_valid_bid()) {
        return Err(Error::Precondition("values must be nonnegative".into()));
    }
    Ok(())
}

/// Feasible interval `[lo, hi]` of each `x_i` (index 0 is `x_2`) for a fixed
/// `e`, or `None` when the LP restricted to this `e` is infeasible.
fn propagate(model: &ScalingModel, e: &BigRational) -> Option<Vec<(BigRational, BigRational)>> {
    let n = model.n;
    let nq = |k: usize| int(k as i64);
    let mut intervals = Vec::with_capacity(n - 2);
    let beta1 = model.beta_at(1);
    let first = (e * beta1 / nq(n - 2), beta1 / nq(n - 2));
    intervals.push((max0(first.0), first.1));
    for i in 3..n {
        let (lo_prev, hi_prev) = intervals.last().expect("x_2 pushed");
        let beta = model.beta_at(i - 1);
        let lo = max0((e * beta - nq(i) * hi_prev) / nq(n - i));
        let hi = (beta - nq(i) * lo_prev) / nq(n - i);
        if lo > hi {
            return None;
        }
        intervals.push((lo, hi));
    }
    let beta = model.beta_at(n - 1);
    let (lo, hi) = intervals.last().expect("n >= 3");
    let last_lo = (e * beta / nq(n)).max(lo.clone());
    let last_hi = (beta / nq(n)).min(hi.clone());
    if last_lo > last_hi {
        return None;
    }
    let last = intervals.len() - 1;
    intervals[last] = (last_lo, last_hi);
    Some(intervals)
}

fn max0(x: BigRational) -> BigRational {
    if x.is_negative() {
        BigRational::zero()
    } else {
        x
    }
}

/// Deterministic point: walk backwards taking the lowest value compatible
/// with the already fixed successor.
fn recover_x(model: &ScalingModel, e: &BigRational, intervals: &[(BigRational, BigRational)]) -> Vec<BigRational> {
    let n = model.n;
    let nq = |k: usize| int(k as i64);
    let mut x = vec![BigRational::zero(); n - 2];
    x[n - 3] = intervals[n - 3].0.clone();
    // x[k] holds x_{k+2}; row i couples x_{i-1} (x[i-3]) and x_i (x[i-2]).
    for i in (3..n).rev() {
        let beta = model.beta_at(i - 1);
        let next = &x[i - 2];
        let from_row = (e * beta - nq(n - i) * next) / nq(i);
        x[i - 3] = intervals[i - 3].0.clone().max(from_row);
    }
    x
}

fn feasible(model: &ScalingModel, e: &BigRational) -> bool {
    propagate(model, e).is_some()
}

pub fn solve_lp(n: usize, p: usize, gamma: Vec<BigRational>) -> Result<ScalingModel> {
    let mut model = ScalingModel::new(n, p, gamma)?;
    let one = BigRational::one();
    let (e_star, infeasible_above) = if feasible(&model, &one) {
        (one, None)
    } else {
        let mut lo = BigRational::zero();
        let mut hi = one;
        let width = BigRational::new(1.into(), num_traits::pow(num_bigint::BigInt::from(2), BISECTION_BITS as usize));
        while &hi - &lo > width {
            let mid = (&lo + &hi) / int(2);
            if feasible(&model, &mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let snapped = simplest_between(&lo, &hi);
        if snapped != hi && feasible(&model, &snapped) {
            lo = snapped;
        }
        (lo, Some(hi))
    };
    let intervals = propagate(&model, &e_star).expect("e_star feasible");
    let x = recover_x(&model, &e_star, &intervals);
    let c = x
        .iter()
        .enumerate()
        .map(|(k, xk)| if k == 0 { xk.clone() } else { xk - &x[k - 1] })
        .collect();
    model.lp = Some(LpSolution {
        e_star,
        infeasible_above,
        x,
        coefficients: RebateCoefficients {
            n,
            p,
            first_index: 2,
            c,
        },
    });
    model.bound = claim1_bound(n, p, &model.gamma).ok();
    Ok(model)
}

/// `min(A/B, B/A)` with `A = sum_{odd i} beta_{i-1} C(n,i)`,
/// `B = sum_{even i} beta_{i-1} C(n,i)` and `beta_0 = 0`.
pub fn claim1_bound(n: usize, p: usize, gamma: &[BigRational]) -> Result<BigRational> {
    let model = ScalingModel::new(n, p, gamma.to_vec())?;
    let (mut a, mut b) = (BigRational::zero(), BigRational::zero());
    for i in 1..=n {
        let beta = if i == 1 {
            BigRational::zero()
        } else {
            model.beta_at(i - 1).clone()
        };
        let term = beta * binomial_q(n as u64, i as u64);
        if i % 2 == 1 {
            a += term;
        } else {
            b += term;
        }
    }
    if a.is_zero() || b.is_zero() {
        return Err(Error::UndefinedBound(format!("A = {a}, B = {b}")));
    }
    Ok((&a / &b).min(&b / &a))
}

/// Rebates for values sorted in non-increasing order:
/// `r_i = sum_{j=2}^{n-1} c_j y_j` over the other agents' sorted values `y`.
pub fn scaling_rebates<M: Money>(model: &ScalingModel, sorted: &[M]) -> Result<Vec<M>> {
    let lp = model.solution()?;
    check_sorted(sorted)?;
    if sorted.len() != model.n {
        return Err(Error::DimensionMismatch(format!(
            "expected {} values, found {}",
            model.n,
            sorted.len()
        )));
    }
    Ok((0..model.n)
        .map(|i| {
            let others: Vec<M> = sorted
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, v)| v.clone())
                .collect();
            linear_rebate(&others, &lp.coefficients)
        })
        .collect())
}

/// Payments and rebates for values in agent order (any order).
pub fn scaling_outcome_for_values<M: Money>(model: &ScalingModel, values: &[M]) -> Result<(Vec<M>, Vec<M>)> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .expect("comparable")
            .then(a.cmp(&b))
    });
    let sorted: Vec<M> = order.iter().map(|&i| values[i].clone()).collect();
    let gamma: Vec<M> = model.gamma.iter().map(M::from_rational).collect();
    let pay_sorted = scaling_payments(&gamma, &sorted)?;
    let reb_sorted = scaling_rebates(model, &sorted)?;
    let mut payments = vec![M::zero(); values.len()];
    let mut rebates = vec![M::zero(); values.len()];
    for (rank, &agent) in order.iter().enumerate() {
        payments[agent] = pay_sorted[rank].clone();
        rebates[agent] = reb_sorted[rank].clone();
    }
    Ok((payments, rebates))
}

/// Private values `v_i` of a profile of the form `b[i][j] = gamma[j] * v_i`.
pub fn scaling_values<M: Money>(profile: &BidProfile<M>, gamma: &[BigRational]) -> Result<Vec<M>> {
    if gamma.len() != profile.p() {
        return Err(Error::DimensionMismatch(format!(
            "gamma has {} entries, profile has {} objects",
            gamma.len(),
            profile.p()
        )));
    }
    let g: Vec<M> = gamma.iter().map(M::from_rational).collect();
    profile
        .rows()
        .enumerate()
        .map(|(i, row)| {
            let v = row[0].clone() / g[0].clone();
            let consistent = row
                .iter()
                .zip(&g)
                .all(|(b, gj)| b.ties(&(gj.clone() * v.clone())));
            if consistent {
                Ok(v)
            } else {
                Err(Error::NotScalingForm { agent: i + 1 })
            }
        })
        .collect()
}

/// Coefficient vectors (over sorted `v_1..v_n`) whose prefix dominance
/// certifies feasibility, the index `e*`, and individual rationality for
/// every sorted nonnegative value vector.
#[derive(Clone, Debug)]
pub struct Certificate {
    pub surplus_minus_rebates: Vec<BigRational>,
    pub rebates_minus_index: Vec<BigRational>,
    pub per_agent_rebates: Vec<Vec<BigRational>>,
}

impl Certificate {
    pub fn holds(&self) -> bool {
        prefix_dominance(&self.surplus_minus_rebates)
            && prefix_dominance(&self.rebates_minus_index)
            && self.per_agent_rebates.iter().all(|r| prefix_dominance(r))
    }
}

pub fn certificate(model: &ScalingModel) -> Result<Certificate> {
    let lp = model.solution()?;
    let n = model.n;
    let c = |j: usize| lp.coefficients.get(j);
    // Surplus t = sum_{j=2}^{p+1} (j-1)(gamma_{j-1} - gamma_j) v_j.
    let surplus: Vec<BigRational> = (1..=n)
        .map(|j| {
            if j >= 2 {
                int(j as i64 - 1) * (model.gamma_at(j - 1) - model.gamma_at(j))
            } else {
                BigRational::zero()
            }
        })
        .collect();
    let total_rebate: Vec<BigRational> = (1..=n)
        .map(|j| int(j as i64 - 1) * c(j - 1) + int((n - j) as i64) * c(j))
        .collect();
    let per_agent: Vec<Vec<BigRational>> = (1..=n)
        .map(|i| {
            (1..=n)
                .map(|j| match j.cmp(&i) {
                    std::cmp::Ordering::Less => c(j),
                    std::cmp::Ordering::Equal => BigRational::zero(),
                    std::cmp::Ordering::Greater => c(j - 1),
                })
                .collect()
        })
        .collect();
    Ok(Certificate {
        surplus_minus_rebates: surplus.iter().zip(&total_rebate).map(|(t, r)| t - r).collect(),
        rebates_minus_index: surplus
            .iter()
            .zip(&total_rebate)
            .map(|(t, r)| r - &lp.e_star * t)
            .collect(),
        per_agent_rebates: per_agent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::ratio;
    use crate::wco::{wco_coefficients, wco_index, wco_rebates_for_values};

    fn q(v: &[i64]) -> Vec<BigRational> {
        v.iter().map(|&x| ratio(x, 1)).collect()
    }

    #[test]
    fn beta_examples() {
        assert_eq!(betas(5, &q(&[1, 1])), q(&[0, 2, 2, 2]));
        assert_eq!(betas(5, &q(&[2, 1])), q(&[1, 3, 3, 3]));
    }

    #[test]
    fn payment_examples() {
        let t = scaling_payments(&q(&[1, 1]), &q(&[10, 8, 5, 3, 2])).unwrap();
        assert_eq!(t, q(&[5, 5, 0, 0, 0]));
        let t = scaling_payments(&q(&[2, 1]), &q(&[10, 8, 5])).unwrap();
        assert_eq!(t, q(&[13, 5, 0]));
        let z = scaling_payments(&q(&[2, 1]), &q(&[0, 0, 0])).unwrap();
        assert!(z.iter().all(Zero::is_zero));
        assert_eq!(scaling_payments(&q(&[2, 1]), &q(&[1, 8, 5])), Err(Error::Unsorted));
    }

    #[test]
    fn equal_gamma_recovers_wco() {
        let m = solve_lp(5, 2, q(&[1, 1])).unwrap();
        let lp = m.lp.as_ref().unwrap();
        assert_eq!(lp.e_star, ratio(5, 11));
        assert_eq!(lp.coefficients.c, vec![ratio(0, 1), ratio(5, 11), ratio(-3, 11)]);
        let m4 = solve_lp(4, 2, q(&[1, 1])).unwrap();
        assert_eq!(m4.lp.unwrap().e_star, ratio(1, 4));
        assert_eq!(wco_index(4, 2).unwrap(), ratio(1, 4));
    }

    #[test]
    fn unequal_gamma_meets_claim1_bound() {
        assert_eq!(claim1_bound(5, 2, &q(&[2, 1])).unwrap(), ratio(25, 33));
        assert_eq!(claim1_bound(5, 2, &q(&[1, 1])).unwrap(), ratio(5, 11));
        let m = solve_lp(5, 2, q(&[2, 1])).unwrap();
        assert_eq!(m.lp.as_ref().unwrap().e_star, ratio(25, 33));
        assert_eq!(m.bound, Some(ratio(25, 33)));
        assert!(certificate(&m).unwrap().holds());
    }

    #[test]
    fn rejects_bad_instances() {
        assert!(solve_lp(3, 2, q(&[1, 1])).is_err());
        assert!(solve_lp(5, 2, q(&[0, 0])).is_err());
        assert!(solve_lp(5, 2, q(&[1, 2])).is_err());
        assert!(solve_lp(5, 2, q(&[1])).is_err());
        let unsolved = ScalingModel::new(5, 2, q(&[1, 1])).unwrap();
        assert!(scaling_rebates(&unsolved, &q(&[1, 1, 1, 0, 0])).is_err());
    }

    #[test]
    fn rebates_match_wco_for_equal_gamma() {
        let m = solve_lp(5, 2, q(&[1, 1])).unwrap();
        let v = q(&[1, 1, 1, 0, 0]);
        let ours = scaling_rebates(&m, &v).unwrap();
        let wco = wco_rebates_for_values(&v, &wco_coefficients(5, 2).unwrap()).unwrap();
        assert_eq!(ours, wco);
        let zero = scaling_rebates(&m, &q(&[0, 0, 0, 0, 0])).unwrap();
        assert!(zero.iter().all(Zero::is_zero));
    }

    #[test]
    fn unit_profile_fraction_is_bounded() {
        let m = solve_lp(5, 2, q(&[2, 1])).unwrap();
        let v = q(&[1, 1, 1, 1, 1]);
        let r = scaling_rebates(&m, &v).unwrap();
        let t = scaling_payments(&[int(2), int(1)], &v).unwrap();
        let total_r: BigRational = r.iter().sum();
        let total_t: BigRational = t.iter().sum();
        let frac = total_r / total_t;
        assert!(frac >= m.lp.unwrap().e_star && frac <= BigRational::one());
    }
}
