//! Non-linear rebates for heterogeneous objects.
//!
//! BAILEY-CAVALLO returns `t^{-i} / n` to every agent. HETERO returns
//! `sum_{k=1}^{L} alpha_k t^{-i,k-1}` with `L = n - p - 1`, where the
//! weights are chosen so that the rule coincides with WCO whenever the
//! objects are identical.

use num_rational::BigRational;
use num_traits::Zero;

use crate::clarke::{averaged_surplus_table, leave_one_out_surpluses, SurplusCache};
use crate::error::{Error, Result};
use crate::money::{binomial_q, int, Money};
use crate::wco::wco_coefficients;

pub fn bailey_cavallo_rebates<M: Money>(cache: &mut SurplusCache<'_, M>) -> Vec<M> {
    let n = M::from_count(cache.profile().n());
    leave_one_out_surpluses(cache)
        .into_iter()
        .map(|t| t / n.clone())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeteroCoefficients {
    pub n: usize,
    pub p: usize,
    /// `alpha_1, ..., alpha_L`.
    pub alpha: Vec<BigRational>,
}

impl HeteroCoefficients {
    pub fn levels(&self) -> usize {
        self.alpha.len()
    }
}

/// Weight of `x_{p+1+l}` (0-based `l`) in `t^{-i,k-1}` for identical objects:
/// `p * C(p+l, p) * C(n-p-2-l, k-1-l) / C(n-1, k-1)`.
fn homogeneous_weight(n: usize, p: usize, k: usize, l: usize) -> BigRational {
    if l + 1 > k {
        return BigRational::zero();
    }
    int(p as i64)
        * binomial_q((p + l) as u64, p as u64)
        * binomial_q((n - p - 2 - l) as u64, (k - 1 - l) as u64)
        / binomial_q((n - 1) as u64, (k - 1) as u64)
}

/// Weights matching WCO coefficient by coefficient.
///
/// The coefficient of `x_{p+1+l}` in the HETERO rule is
/// `sum_{k=l+1}^{L} alpha_k w(k, l)`, so the system is triangular and is
/// solved from `l = L-1` (only `alpha_L`) down to `l = 0`.
pub fn hetero_alphas(n: usize, p: usize) -> Result<HeteroCoefficients> {
    if p == 0 || n <= p + 1 {
        return Err(Error::InvalidSize {
            n,
            p,
            reason: "HETERO requires n > p + 1".into(),
        });
    }
    let levels = n - p - 1;
    let wco = wco_coefficients(n, p)?;
    let mut alpha = vec![BigRational::zero(); levels];
    for l in (0..levels).rev() {
        let mut rhs = wco.c[l].clone();
        for k in l + 2..=levels {
            rhs -= &alpha[k - 1] * homogeneous_weight(n, p, k, l);
        }
        alpha[l] = rhs / homogeneous_weight(n, p, l + 1, l);
    }
    Ok(HeteroCoefficients { n, p, alpha })
}

/// `t^{-i,k-1}` for identical objects from the other agents' values sorted
/// in non-increasing order, for `k = 1..=n-p-1`.
pub fn homogeneous_averaged_surplus_closed_form<M: Money>(
    n: usize,
    p: usize,
    k: usize,
    sorted_others: &[M],
) -> Result<M> {
    if n <= p + 1 || k == 0 || k > n - p - 1 {
        return Err(Error::Precondition(format!(
            "k = {k} must satisfy 1 <= k <= n - p - 1 (n = {n}, p = {p})"
        )));
    }
    if sorted_others.len() + 1 != n {
        return Err(Error::DimensionMismatch(format!(
            "expected {} other values, found {}",
            n - 1,
            sorted_others.len()
        )));
    }
    Ok((0..k).fold(M::zero(), |acc, l| {
        acc + M::from_rational(&homogeneous_weight(n, p, k, l)) * sorted_others[p + l].clone()
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeteroEvaluation<M> {
    pub rebates: Vec<M>,
    /// `Gamma_2 / Gamma_1 = t^{-i,1} / t^{-i}` per agent, when `L >= 2` and `t^{-i} > 0`.
    pub gamma_ratios: Vec<Option<f64>>,
    /// `t^{-i}` per agent; shared with BAILEY-CAVALLO.
    pub leave_one_out: Vec<M>,
}

pub fn hetero_rebates<M: Money>(
    cache: &mut SurplusCache<'_, M>,
    coeffs: &HeteroCoefficients,
) -> Result<Vec<M>> {
    hetero_evaluate(cache, coeffs).map(|e| e.rebates)
}

pub fn hetero_evaluate<M: Money>(
    cache: &mut SurplusCache<'_, M>,
    coeffs: &HeteroCoefficients,
) -> Result<HeteroEvaluation<M>> {
    let (n, p) = (cache.profile().n(), cache.profile().p());
    if coeffs.n != n || coeffs.p != p {
        return Err(Error::DimensionMismatch(format!(
            "coefficients are for n={}, p={} but the profile has n={n}, p={p}",
            coeffs.n, coeffs.p
        )));
    }
    let levels = coeffs.levels();
    let table = averaged_surplus_table(cache, levels - 1)?;
    let alpha: Vec<M> = coeffs.alpha.iter().map(M::from_rational).collect();
    let rebates = table
        .iter()
        .map(|row| {
            row.iter()
                .zip(&alpha)
                .fold(M::zero(), |acc, (gamma, a)| acc + a.clone() * gamma.clone())
        })
        .collect();
    let gamma_ratios = table
        .iter()
        .map(|row| {
            if levels >= 2 && row[0].is_positive() {
                Some(row[1].as_f64() / row[0].as_f64())
            } else {
                None
            }
        })
        .collect();
    let leave_one_out = table.iter().map(|row| row[0].clone()).collect();
    Ok(HeteroEvaluation {
        rebates,
        gamma_ratios,
        leave_one_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clarke::{averaged_surplus, SurplusCache};
    use crate::money::ratio;
    use crate::profile::BidProfile;
    use crate::wco::wco_rebates;
    use num_traits::{One, Signed};

    fn q(v: &[i64]) -> Vec<BigRational> {
        v.iter().map(|&x| ratio(x, 1)).collect()
    }

    #[test]
    fn known_alpha_values() {
        assert_eq!(hetero_alphas(4, 2).unwrap().alpha, vec![ratio(1, 4)]);
        assert_eq!(hetero_alphas(5, 2).unwrap().alpha, vec![ratio(3, 11), ratio(-2, 11)]);
        assert_eq!(hetero_alphas(5, 3).unwrap().alpha, vec![ratio(1, 5)]);
        let a = hetero_alphas(7, 3).unwrap().alpha;
        let expected = [0.23810, -0.21429, 0.11905];
        for (x, y) in a.iter().zip(expected) {
            assert!((x.as_f64() - y).abs() < 5e-6);
        }
        assert!(hetero_alphas(4, 3).is_err());
    }

    /// The alternating-sum closed form, evaluated literally. It differs from the matching
    /// solution by a factor that depends on (n, p) only.
    fn alternating_sum_form(n: usize, p: usize) -> Vec<BigRational> {
        let levels = n - p - 1;
        let fact = |k: usize| (1..=k).fold(BigRational::one(), |acc, i| acc * int(i as i64));
        let total: BigRational = (p..n).map(|j| binomial_q((n - 1) as u64, j as u64)).sum();
        let chi = binomial_q((n - p) as u64, (p - 1) as u64) / total;
        (1..=levels)
            .map(|i| {
                let sign = if i % 2 == 1 { int(1) } else { int(-1) };
                let inner: BigRational = (0..=levels - i)
                    .map(|j| {
                        let tail: BigRational =
                            (p + i + j..n).map(|l| binomial_q((n - 1) as u64, l as u64)).sum();
                        binomial_q((i + j - 1) as u64, j as u64) * tail
                    })
                    .sum();
                sign * fact(levels - i) * fact(p) / fact(n - i) * chi.clone() * inner
            })
            .collect()
    }

    #[test]
    fn alternating_sum_form_is_proportional() {
        for (n, p) in [(5, 2), (6, 2), (6, 3), (7, 3), (9, 4)] {
            let ours = hetero_alphas(n, p).unwrap().alpha;
            let literal = alternating_sum_form(n, p);
            let factor = &ours[0] / &literal[0];
            assert_ne!(factor, BigRational::one());
            for (a, b) in ours.iter().zip(&literal) {
                assert_eq!(a / b, factor);
            }
        }
    }

    #[test]
    fn alpha_signs_alternate() {
        for n in 3..=14usize {
            for p in 1..=8usize.min(n - 2) {
                let a = hetero_alphas(n, p).unwrap().alpha;
                for (k, x) in a.iter().enumerate() {
                    assert_eq!(x.is_positive(), k % 2 == 0, "n={n} p={p} k={}", k + 1);
                }
            }
        }
    }

    #[test]
    fn bailey_cavallo_examples() {
        let prof = BidProfile::homogeneous(&q(&[10, 8, 5]), 1).unwrap();
        let mut cache = SurplusCache::new(&prof).unwrap();
        assert_eq!(
            bailey_cavallo_rebates(&mut cache),
            vec![ratio(5, 3), ratio(5, 3), ratio(8, 3)]
        );
        let a = BidProfile::from_rows(vec![q(&[4, 5]), q(&[2, 1]), q(&[1, 4]), q(&[1, 0])]).unwrap();
        let mut cache = SurplusCache::new(&a).unwrap();
        assert_eq!(
            bailey_cavallo_rebates(&mut cache),
            vec![ratio(1, 4), ratio(3, 4), ratio(1, 4), ratio(5, 4)]
        );
        let z = BidProfile::homogeneous(&q(&[0, 0, 0]), 2).unwrap();
        let mut cache = SurplusCache::new(&z).unwrap();
        assert!(bailey_cavallo_rebates(&mut cache).iter().all(Zero::is_zero));
    }

    #[test]
    fn hetero_examples() {
        let prof = BidProfile::homogeneous(&q(&[5, 4, 3, 2, 1]), 2).unwrap();
        let coeffs = hetero_alphas(5, 2).unwrap();
        let mut cache = SurplusCache::new(&prof).unwrap();
        let r = hetero_rebates(&mut cache, &coeffs).unwrap();
        assert_eq!(r[0], ratio(7, 11));
        assert_eq!(r, wco_rebates(&prof).unwrap());

        let three = BidProfile::homogeneous(&q(&[10, 8, 5]), 1).unwrap();
        let coeffs = hetero_alphas(3, 1).unwrap();
        assert_eq!(coeffs.alpha, vec![ratio(1, 3)]);
        let mut cache = SurplusCache::new(&three).unwrap();
        assert_eq!(
            hetero_rebates(&mut cache, &coeffs).unwrap(),
            vec![ratio(5, 3), ratio(5, 3), ratio(8, 3)]
        );

        let z = BidProfile::homogeneous(&q(&[0, 0, 0, 0, 0]), 2).unwrap();
        let mut cache = SurplusCache::new(&z).unwrap();
        let coeffs = hetero_alphas(5, 2).unwrap();
        assert!(hetero_rebates(&mut cache, &coeffs).unwrap().iter().all(Zero::is_zero));
    }

    #[test]
    fn hetero_dimension_mismatch() {
        let prof = BidProfile::homogeneous(&q(&[5, 4, 3, 2]), 2).unwrap();
        let mut cache = SurplusCache::new(&prof).unwrap();
        let coeffs = hetero_alphas(5, 2).unwrap();
        assert!(matches!(hetero_rebates(&mut cache, &coeffs), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn closed_form_matches_enumeration() {
        let x = q(&[8, 5, 3]);
        assert_eq!(homogeneous_averaged_surplus_closed_form(4, 1, 2, &x).unwrap(), ratio(11, 3));
        let x = q(&[4, 3, 2, 1]);
        assert_eq!(homogeneous_averaged_surplus_closed_form(5, 2, 2, &x).unwrap(), ratio(5, 2));
        assert_eq!(homogeneous_averaged_surplus_closed_form(5, 2, 1, &x).unwrap(), ratio(4, 1));
        assert!(homogeneous_averaged_surplus_closed_form(5, 2, 3, &x).is_err());

        // Agent 0 with value 9 is removed; the others are x.
        let prof = BidProfile::homogeneous(&q(&[9, 4, 3, 2, 1]), 2).unwrap();
        let mut cache = SurplusCache::new(&prof).unwrap();
        for k in 1..=2 {
            assert_eq!(
                averaged_surplus(&mut cache, 0, k - 1).unwrap(),
                homogeneous_averaged_surplus_closed_form(5, 2, k, &x).unwrap()
            );
        }
    }
}
