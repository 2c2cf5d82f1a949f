//! Clarke pivotal payments and surpluses of agent subsets.

use crate::assignment::{optimal_allocation_among, optimal_value, TieBreak};
use crate::error::{Error, Result};
use crate::money::{binomial, Money};
use crate::profile::{AgentSet, Allocation, BidProfile};

/// Largest agent count for which a [`SurplusCache`] will allocate its tables.
pub const MAX_CACHED_AGENTS: usize = 16;

/// Efficient allocation together with each agent's Clarke payment.
#[derive(Clone, Debug, PartialEq)]
pub struct ClarkeOutcome<M> {
    pub allocation: Allocation<M>,
    /// Indexed by agent over all `n` agents; absent agents pay zero.
    pub payments: Vec<M>,
    pub surplus: M,
}

/// `t_i = v_i(k*) - (v(k*) - v(k*_{-i}))` for every present agent.
pub fn clarke_payments<M: Money>(profile: &BidProfile<M>, present: AgentSet) -> ClarkeOutcome<M> {
    clarke_payments_with(profile, present, TieBreak::LexSmallest)
}

pub fn clarke_payments_with<M: Money>(
    profile: &BidProfile<M>,
    present: AgentSet,
    tie_break: TieBreak,
) -> ClarkeOutcome<M> {
    let allocation = optimal_allocation_among(profile, present, tie_break);
    let mut payments = vec![M::zero(); profile.n()];
    let mut surplus = M::zero();
    for (agent, object) in allocation.pairs.iter().copied() {
        let without = optimal_value(profile, present.without(agent));
        let own = profile.bid(agent, object).clone();
        let pay = own - (allocation.value.clone() - without);
        // Non-winners always pay exactly zero; winners never pay a negative amount.
        let pay = if pay.is_negative() { M::zero() } else { pay };
        surplus = surplus + pay.clone();
        payments[agent] = pay;
    }
    ClarkeOutcome {
        allocation,
        payments,
        surplus,
    }
}

/// Total Clarke payment collected from the `present` agents.
///
/// Computed as `sum_i v(k*_{-i}) - (|S| - 1) v(k*)`, which depends on optimal
/// values only and so is independent of the tie-break.
pub fn clarke_surplus<M: Money>(profile: &BidProfile<M>, present: AgentSet) -> M {
    surplus_from_values(present, |s| optimal_value(profile, s))
}

fn surplus_from_values<M: Money>(present: AgentSet, mut value: impl FnMut(AgentSet) -> M) -> M {
    if present.is_empty() {
        return M::zero();
    }
    let full = value(present);
    let leave_one_out = present
        .iter()
        .fold(M::zero(), |acc, j| acc + value(present.without(j)));
    let s = leave_one_out - full * M::from_count(present.len() - 1);
    // Exact arithmetic never goes below zero; floats may by a rounding error.
    if s.is_negative() {
        M::zero()
    } else {
        s
    }
}

/// Memo of optimal values and Clarke surpluses keyed by the set of present agents.
pub struct SurplusCache<'a, M> {
    profile: &'a BidProfile<M>,
    values: Vec<Option<M>>,
    surpluses: Vec<Option<M>>,
}

impl<'a, M: Money> SurplusCache<'a, M> {
    pub fn new(profile: &'a BidProfile<M>) -> Result<Self> {
        if profile.n() > MAX_CACHED_AGENTS {
            return Err(Error::InvalidSize {
                n: profile.n(),
                p: profile.p(),
                reason: format!("subset surplus tables support at most {MAX_CACHED_AGENTS} agents"),
            });
        }
        let size = 1usize << profile.n();
        Ok(SurplusCache {
            profile,
            values: vec![None; size],
            surpluses: vec![None; size],
        })
    }

    pub fn profile(&self) -> &'a BidProfile<M> {
        self.profile
    }

    pub fn value(&mut self, present: AgentSet) -> M {
        let key = present.bits() as usize;
        if let Some(v) = &self.values[key] {
            return v.clone();
        }
        let v = optimal_value(self.profile, present);
        self.values[key] = Some(v.clone());
        v
    }

    pub fn surplus(&mut self, present: AgentSet) -> M {
        let key = present.bits() as usize;
        if let Some(s) = &self.surpluses[key] {
            return s.clone();
        }
        let s = surplus_from_values(present, |set| self.value(set));
        self.surpluses[key] = Some(s.clone());
        s
    }

    /// Number of subsets whose surplus has been computed.
    pub fn cached_surpluses(&self) -> usize {
        self.surpluses.iter().filter(|s| s.is_some()).count()
    }
}

/// `t^{-i}`: surplus with agent `i` absent, for every agent.
pub fn leave_one_out_surpluses<M: Money>(cache: &mut SurplusCache<'_, M>) -> Vec<M> {
    let all = cache.profile().agents();
    (0..cache.profile().n()).map(|i| cache.surplus(all.without(i))).collect()
}

/// All `k`-element subsets of `set`, in lexicographic order of members.
pub fn combinations(set: AgentSet, k: usize) -> impl Iterator<Item = AgentSet> {
    let members: Vec<usize> = set.iter().collect();
    let m = members.len();
    let mut idx: Option<Vec<usize>> = if k <= m { Some((0..k).collect()) } else { None };
    std::iter::from_fn(move || {
        let current = idx.as_mut()?;
        let out: AgentSet = current.iter().map(|&i| members[i]).collect();
        // Advance to the next combination.
        let mut pos = k;
        loop {
            if pos == 0 {
                idx = None;
                break;
            }
            pos -= 1;
            if current[pos] < m - k + pos {
                current[pos] += 1;
                for q in pos + 1..k {
                    current[q] = current[q - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    })
}

fn check_averaging_range(n: usize, p: usize, agent: usize, k: usize) -> Result<()> {
    if agent >= n {
        return Err(Error::Precondition(format!("agent {} out of range", agent + 1)));
    }
    if n < p + 2 || k > n - p - 2 {
        return Err(Error::Precondition(format!(
            "k = {k} must satisfy 0 <= k <= n - p - 2 (n = {n}, p = {p})"
        )));
    }
    Ok(())
}

/// `t^{-i,k}`: mean surplus over every way of removing agent `i` and `k` others.
pub fn averaged_surplus<M: Money>(
    cache: &mut SurplusCache<'_, M>,
    agent: usize,
    k: usize,
) -> Result<M> {
    let (n, p) = (cache.profile().n(), cache.profile().p());
    check_averaging_range(n, p, agent, k)?;
    let others = cache.profile().agents().without(agent);
    let mut sum = M::zero();
    for removed in combinations(others, k) {
        sum = sum + cache.surplus(others.difference(removed));
    }
    let count = binomial((n - 1) as u64, k as u64);
    Ok(sum / M::from_rational(&count.into()))
}

/// `table[i][k] = t^{-i,k}` for every agent and `k = 0..=max_k`.
///
/// One pass over subsets: a present set `S` with `|S| = n - 1 - k`
/// contributes its surplus to every absent agent `i` at level `k`.
pub fn averaged_surplus_table<M: Money>(
    cache: &mut SurplusCache<'_, M>,
    max_k: usize,
) -> Result<Vec<Vec<M>>> {
    let (n, p) = (cache.profile().n(), cache.profile().p());
    check_averaging_range(n, p, 0, max_k)?;
    let mut sums = vec![vec![M::zero(); max_k + 1]; n];
    let all = cache.profile().agents();
    for bits in 0..(1u64 << n) {
        let present = AgentSet::from_bits(bits);
        let size = present.len();
        if size + 1 > n || n - 1 - size > max_k {
            continue;
        }
        let k = n - 1 - size;
        let s = cache.surplus(present);
        if s.is_zero() {
            continue;
        }
        for i in all.difference(present).iter() {
            sums[i][k] = sums[i][k].clone() + s.clone();
        }
    }
    for row in sums.iter_mut() {
        for (k, cell) in row.iter_mut().enumerate() {
            let count = binomial((n - 1) as u64, k as u64);
            *cell = cell.clone() / M::from_rational(&count.into());
        }
    }
    Ok(sums)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::ratio;
    use num_rational::BigRational;
    use num_traits::Zero;

    fn worked_example() -> BidProfile<BigRational> {
        BidProfile::from_rows(vec![
            vec![4.0, 5.0],
            vec![2.0, 1.0],
            vec![1.0, 4.0],
            vec![1.0, 0.0],
        ])
        .unwrap()
        .to_exact()
    }

    fn q(v: &[i64]) -> Vec<BigRational> {
        v.iter().map(|&x| ratio(x, 1)).collect()
    }

    #[test]
    fn worked_example_payments() {
        let prof = worked_example();
        let out = clarke_payments(&prof, prof.agents());
        assert_eq!(out.payments, q(&[2, 0, 3, 0]));
        assert_eq!(out.surplus, ratio(5, 1));
        assert_eq!(clarke_surplus(&prof, prof.agents()), ratio(5, 1));
        assert_eq!(clarke_surplus(&prof, AgentSet::from_iter([1, 2, 3])), ratio(1, 1));
    }

    #[test]
    fn single_object_second_price() {
        let prof = BidProfile::homogeneous(&q(&[10, 8, 5]), 1).unwrap();
        let out = clarke_payments(&prof, prof.agents());
        assert_eq!(out.payments, q(&[8, 0, 0]));
        let four = BidProfile::homogeneous(&q(&[10, 8, 5, 3]), 1).unwrap();
        assert_eq!(clarke_surplus(&four, AgentSet::from_iter([1, 2, 3])), ratio(5, 1));
    }

    #[test]
    fn adversarial_profile_surplus() {
        let prof = BidProfile::from_rows(vec![q(&[3, 2]), q(&[2, 1]), q(&[0, 0]), q(&[0, 0])]).unwrap();
        assert_eq!(clarke_payments(&prof, prof.agents()).surplus, ratio(1, 1));
    }

    #[test]
    fn zero_profile_has_zero_surplus() {
        let prof = BidProfile::homogeneous(&q(&[0, 0, 0, 0]), 2).unwrap();
        for bits in 1..16u64 {
            assert!(clarke_surplus(&prof, AgentSet::from_bits(bits)).is_zero());
        }
    }

    #[test]
    fn averaged_surplus_examples() {
        let prof = BidProfile::homogeneous(&q(&[10, 8, 5, 3]), 1).unwrap();
        let mut cache = SurplusCache::new(&prof).unwrap();
        assert_eq!(averaged_surplus(&mut cache, 0, 1).unwrap(), ratio(11, 3));
        assert_eq!(
            averaged_surplus(&mut cache, 2, 0).unwrap(),
            clarke_surplus(&prof, prof.agents().without(2))
        );
        assert!(averaged_surplus(&mut cache, 0, 3).is_err());
        assert!(averaged_surplus(&mut cache, 9, 0).is_err());
        assert!(averaged_surplus_table(&mut cache, 2).is_err());
        let table = averaged_surplus_table(&mut cache, 1).unwrap();
        for i in 0..4 {
            for k in 0..=1 {
                assert_eq!(table[i][k], averaged_surplus(&mut cache, i, k).unwrap());
            }
        }
    }

    #[test]
    fn combinations_enumerate() {
        let all: Vec<_> = combinations(AgentSet::full(4), 2).collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], AgentSet::from_iter([0, 1]));
        assert_eq!(combinations(AgentSet::full(3), 0).count(), 1);
        assert_eq!(combinations(AgentSet::full(3), 4).count(), 0);
        assert_eq!(combinations(AgentSet::from_iter([1, 5, 7]), 3).count(), 1);
    }

    #[test]
    fn cache_is_bounded() {
        let prof = BidProfile::homogeneous(&[1.0; 17], 1).unwrap();
        assert!(SurplusCache::new(&prof).is_err());
    }
}
