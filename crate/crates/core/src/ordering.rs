//! Total preorder over agents induced by a heterogeneous bid profile.
//!
//! Every allocation that assigns all objects (all agents when `n < p`),
//! one per agent, is listed by value. For a pair `i, j`, allocations
//! holding both are discarded; the remaining ones are scanned level by level
//! from the highest value. The first level that holds `i` or `j` decides the
//! pair if only one of them appears at that level; otherwise the whole level
//! is discarded and the scan continues. Running out of levels means `i ≡ j`.

use std::cmp::Ordering;

use crate::assignment::enumerate_allocations;
use crate::error::{Error, Result};
use crate::money::Money;
use crate::profile::{AgentSet, BidProfile};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentRanking {
    /// Equivalence classes of 0-based agents, best first; members ascending.
    pub classes: Vec<Vec<usize>>,
}

impl AgentRanking {
    /// Position of the class holding `agent`.
    pub fn class_of(&self, agent: usize) -> Option<usize> {
        self.classes.iter().position(|c| c.contains(&agent))
    }

    /// Agents in ranked order, ties kept in index order.
    pub fn order(&self) -> Vec<usize> {
        self.classes.iter().flatten().copied().collect()
    }
}

/// Allocations grouped into value levels, highest first. Each level holds
/// the agent sets of its allocations.
pub struct AllocationLevels {
    levels: Vec<Vec<AgentSet>>,
}

impl AllocationLevels {
    pub fn new<M: Money>(profile: &BidProfile<M>) -> Result<Self> {
        let mut all: Vec<(M, AgentSet)> = enumerate_allocations(profile)?
            .into_iter()
            .map(|a| (a.value, a.pairs.iter().map(|&(agent, _)| agent).collect()))
            .collect();
        all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
        let mut levels: Vec<Vec<AgentSet>> = Vec::new();
        let mut leader: Option<M> = None;
        for (value, set) in all {
            match &leader {
                Some(l) if l.ties(&value) => levels.last_mut().expect("level exists").push(set),
                _ => {
                    leader = Some(value);
                    levels.push(vec![set]);
                }
            }
        }
        Ok(AllocationLevels { levels })
    }

    /// `Greater` for `i ≻ j`, `Less` for `j ≻ i`, `Equal` for `i ≡ j`.
    pub fn compare(&self, i: usize, j: usize) -> Ordering {
        if i == j {
            return Ordering::Equal;
        }
        for level in &self.levels {
            let mut has_i = false;
            let mut has_j = false;
            for set in level {
                let (a, b) = (set.contains(i), set.contains(j));
                if a && b {
                    continue;
                }
                has_i |= a;
                has_j |= b;
            }
            match (has_i, has_j) {
                (true, false) => return Ordering::Greater,
                (false, true) => return Ordering::Less,
                _ => {}
            }
        }
        Ordering::Equal
    }
}

/// Pairwise relation between two agents; see [`AllocationLevels::compare`].
pub fn pairwise_relation<M: Money>(profile: &BidProfile<M>, i: usize, j: usize) -> Result<Ordering> {
    Ok(AllocationLevels::new(profile)?.compare(i, j))
}

/// Ranks all agents. Fails with [`Error::Intransitive`] if the pairwise
/// relation is not transitive on this profile.
pub fn rank_agents<M: Money>(profile: &BidProfile<M>) -> Result<AgentRanking> {
    let levels = AllocationLevels::new(profile)?;
    let n = profile.n();
    let mut rel = vec![vec![Ordering::Equal; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let c = levels.compare(i, j);
            rel[i][j] = c;
            rel[j][i] = c.reverse();
        }
    }
    // `a ≽ b` and `b ≽ c` must give `a ≽ c`.
    for a in 0..n {
        for b in 0..n {
            if rel[a][b] == Ordering::Less {
                continue;
            }
            for c in 0..n {
                if rel[b][c] != Ordering::Less && rel[a][c] == Ordering::Less {
                    return Err(Error::Intransitive(a + 1, b + 1, c + 1));
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| rel[b][a].then(a.cmp(&b)));
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for a in order {
        match classes.last_mut() {
            Some(class) if rel[class[0]][a] == Ordering::Equal => class.push(a),
            _ => classes.push(vec![a]),
        }
    }
    Ok(AgentRanking { classes })
}
