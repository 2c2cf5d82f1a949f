//! Domain types: bid profiles, agent sets, allocations and mechanism outcomes.

use std::fmt;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::{f64_to_decimal_rational, Money};

/// Largest agent count an [`AgentSet`] can address.
pub const MAX_AGENTS: usize = 64;

/// A set of agent indices (0-based), stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct AgentSet(u64);

impl AgentSet {
    pub const fn empty() -> Self {
        AgentSet(0)
    }

    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_AGENTS);
        if n == MAX_AGENTS {
            AgentSet(u64::MAX)
        } else {
            AgentSet((1u64 << n) - 1)
        }
    }

    pub const fn from_bits(bits: u64) -> Self {
        AgentSet(bits)
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, agent: usize) -> bool {
        agent < MAX_AGENTS && self.0 >> agent & 1 == 1
    }

    pub fn with(self, agent: usize) -> Self {
        AgentSet(self.0 | 1 << agent)
    }

    pub fn without(self, agent: usize) -> Self {
        AgentSet(self.0 & !(1 << agent))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: AgentSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn difference(self, other: AgentSet) -> Self {
        AgentSet(self.0 & !other.0)
    }

    /// Members in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }
}

impl FromIterator<usize> for AgentSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        iter.into_iter().fold(AgentSet::empty(), AgentSet::with)
    }
}

impl fmt::Debug for AgentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// The `n x p` matrix of nonnegative bids; row `i` is agent `i`, column `j` object `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct BidProfile<M = f64> {
    n: usize,
    p: usize,
    bids: Vec<M>,
}

impl<M: Money> BidProfile<M> {
    pub fn new(n: usize, p: usize, rows: Vec<Vec<M>>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::InvalidProfile("n and p must both be at least 1".into()));
        }
        if n > MAX_AGENTS {
            return Err(Error::InvalidProfile(format!("at most {MAX_AGENTS} agents supported")));
        }
        if rows.len() != n {
            return Err(Error::InvalidProfile(format!("expected {n} rows, found {}", rows.len())));
        }
        let mut bids = Vec::with_capacity(n * p);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != p {
                return Err(Error::InvalidProfile(format!(
                    "row {} has {} entries, expected {p}",
                    i + 1,
                    row.len()
                )));
            }
            for (j, b) in row.into_iter().enumerate() {
                if !b.is_valid_bid() {
                    return Err(Error::InvalidProfile(format!(
                        "bid of agent {} for object {} must be finite and nonnegative",
                        i + 1,
                        j + 1
                    )));
                }
                bids.push(b);
            }
        }
        Ok(BidProfile { n, p, bids })
    }

    /// Rows given without explicit dimensions.
    pub fn from_rows(rows: Vec<Vec<M>>) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        Self::new(n, p, rows)
    }

    /// Identical objects: every agent bids its scalar value on all `p` objects.
    pub fn homogeneous(values: &[M], p: usize) -> Result<Self> {
        let rows = values.iter().map(|v| vec![v.clone(); p]).collect();
        Self::new(values.len(), p, rows)
    }

    /// Scaling relationship: `b[i][j] = gamma[j] * values[i]`.
    pub fn scaled(gamma: &[M], values: &[M]) -> Result<Self> {
        let rows = values
            .iter()
            .map(|v| gamma.iter().map(|g| g.clone() * v.clone()).collect())
            .collect();
        Self::new(values.len(), gamma.len(), rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn bid(&self, agent: usize, object: usize) -> &M {
        &self.bids[agent * self.p + object]
    }

    pub fn row(&self, agent: usize) -> &[M] {
        &self.bids[agent * self.p..(agent + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[M]> {
        self.bids.chunks(self.p)
    }

    pub fn agents(&self) -> AgentSet {
        AgentSet::full(self.n)
    }

    /// Per-agent scalar values of a profile whose rows are constant (exact comparison).
    pub fn homogeneous_values(&self) -> Result<Vec<M>> {
        self.rows()
            .enumerate()
            .map(|(i, row)| {
                if row.iter().all(|b| *b == row[0]) {
                    Ok(row[0].clone())
                } else {
                    Err(Error::NotHomogeneous { agent: i + 1 })
                }
            })
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.bids.iter().all(|b| b.is_zero())
    }

    pub fn map<N: Money>(&self, mut f: impl FnMut(&M) -> N) -> BidProfile<N> {
        BidProfile {
            n: self.n,
            p: self.p,
            bids: self.bids.iter().map(&mut f).collect(),
        }
    }

    /// Same bids with object columns reordered: new column `j` is old column `perm[j]`.
    pub fn permute_objects(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.p);
        let rows = self
            .rows()
            .map(|row| perm.iter().map(|&j| row[j].clone()).collect())
            .collect();
        Self::new(self.n, self.p, rows).expect("permutation keeps validity")
    }

    /// Same bids with agents reordered: new agent `i` is old agent `perm[i]`.
    pub fn permute_agents(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n);
        let rows = perm.iter().map(|&i| self.row(i).to_vec()).collect();
        Self::new(self.n, self.p, rows).expect("permutation keeps validity")
    }

    pub fn with_bid(&self, agent: usize, object: usize, value: M) -> Result<Self> {
        let mut rows: Vec<Vec<M>> = self.rows().map(<[M]>::to_vec).collect();
        rows[agent][object] = value;
        Self::new(self.n, self.p, rows)
    }

    pub fn as_f64(&self) -> BidProfile<f64> {
        self.map(Money::as_f64)
    }

    pub fn to_file(&self) -> ProfileFile {
        ProfileFile {
            n: self.n,
            p: self.p,
            bids: self.rows().map(|r| r.iter().map(Money::as_f64).collect()).collect(),
        }
    }
}

impl BidProfile<f64> {
    pub fn from_file(file: ProfileFile) -> Result<Self> {
        Self::new(file.n, file.p, file.bids)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProfileFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidProfile(e.to_string()))?;
        Self::from_file(file)
    }

    /// Exact rational copy; each entry is read as its shortest decimal rendering.
    pub fn to_exact(&self) -> BidProfile<BigRational> {
        self.map(|b| f64_to_decimal_rational(*b).expect("validated finite"))
    }
}

/// On-disk profile schema: `{"n": int, "p": int, "bids": [[number, ...], ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub n: usize,
    pub p: usize,
    pub bids: Vec<Vec<f64>>,
}

impl ProfileFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }
}

/// An injective assignment of objects to agents, `(agent, object)` pairs sorted by agent.
#[derive(Clone, Debug, PartialEq)]
pub struct Allocation<M = f64> {
    pub pairs: Vec<(usize, usize)>,
    pub value: M,
}

impl<M: Money> Allocation<M> {
    pub fn empty() -> Self {
        Allocation {
            pairs: Vec::new(),
            value: M::zero(),
        }
    }

    pub fn from_pairs(profile: &BidProfile<M>, mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        let value = pairs
            .iter()
            .fold(M::zero(), |acc, &(i, j)| acc + profile.bid(i, j).clone());
        Allocation { pairs, value }
    }

    pub fn object_of(&self, agent: usize) -> Option<usize> {
        self.pairs.iter().find(|(i, _)| *i == agent).map(|&(_, j)| j)
    }

    pub fn winners(&self) -> AgentSet {
        self.pairs.iter().map(|&(i, _)| i).collect()
    }

    pub fn contains_agent(&self, agent: usize) -> bool {
        self.object_of(agent).is_some()
    }

    /// Agent's own valuation of this allocation.
    pub fn value_to(&self, profile: &BidProfile<M>, agent: usize) -> M {
        self.object_of(agent)
            .map_or_else(M::zero, |j| profile.bid(agent, j).clone())
    }

    /// No agent or object used twice.
    pub fn is_injective(&self) -> bool {
        let mut agents = std::collections::HashSet::new();
        let mut objects = std::collections::HashSet::new();
        self.pairs
            .iter()
            .all(|&(i, j)| agents.insert(i) && objects.insert(j))
    }
}

/// Result of running a redistribution mechanism on one profile.
#[derive(Clone, Debug, PartialEq)]
pub struct MechanismOutcome<M = f64> {
    pub allocation: Allocation<M>,
    /// Clarke payment per agent.
    pub payments: Vec<M>,
    pub rebates: Vec<M>,
    pub surplus: M,
    /// `sum(rebates) / surplus`, `None` when the surplus is zero.
    pub fraction: Option<f64>,
}

impl<M: Money> MechanismOutcome<M> {
    pub fn total_rebate(&self) -> M {
        self.rebates.iter().fold(M::zero(), |acc, r| acc + r.clone())
    }

    /// `sum(rebates) <= surplus + tol`.
    pub fn is_feasible(&self, tol: f64) -> bool {
        (self.total_rebate() - self.surplus.clone()).as_f64() <= tol
    }

    /// Every rebate `>= -tol`.
    pub fn is_individually_rational(&self, tol: f64) -> bool {
        self.rebates.iter().all(|r| r.as_f64() >= -tol)
    }

    /// Net payment `t_i - r_i` made by each agent.
    pub fn net_payments(&self) -> Vec<M> {
        self.payments
            .iter()
            .zip(&self.rebates)
            .map(|(t, r)| t.clone() - r.clone())
            .collect()
    }
}
