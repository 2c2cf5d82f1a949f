//! Allocatively efficient assignment: exact maximum-weight bipartite matching
//! between objects and agents, plus brute-force enumeration for oracles.

use crate::error::{Error, Result};
use crate::money::Money;
use crate::profile::{AgentSet, Allocation, BidProfile};

/// Default limit on the number of allocations [`enumerate_allocations`] will produce.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Rule for choosing among several optimal allocations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TieBreak {
    /// Lexicographically smallest sorted `(agent, object)` list.
    #[default]
    LexSmallest,
    /// Lexicographically smallest after reversing both agent and object indices.
    Reversed,
}

/// Maximum-weight matching on a dense `rows x cols` matrix with `rows <= cols`.
///
/// Shortest augmenting path Hungarian method with row/column potentials,
/// minimizing the negated weights. Returns the matched column of each row.
fn hungarian_rows<M: Money>(weights: &[M], rows: usize, cols: usize) -> Vec<usize> {
    debug_assert!(rows <= cols);
    // 1-based internally, index 0 is the virtual root.
    let cost = |r: usize, c: usize| -> M { -weights[(r - 1) * cols + (c - 1)].clone() };
    let mut u = vec![M::zero(); rows + 1];
    let mut v = vec![M::zero(); cols + 1];
    let mut matched_row = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    let mut minv: Vec<Option<M>> = vec![None; cols + 1];
    let mut used = vec![false; cols + 1];

    for r in 1..=rows {
        matched_row[0] = r;
        let mut col0 = 0usize;
        minv.iter_mut().for_each(|m| *m = None);
        used.iter_mut().for_each(|u| *u = false);
        loop {
            used[col0] = true;
            let row0 = matched_row[col0];
            let mut delta: Option<M> = None;
            let mut col1 = 0usize;
            for c in 1..=cols {
                if used[c] {
                    continue;
                }
                let cur = cost(row0, c) - u[row0].clone() - v[c].clone();
                if minv[c].as_ref().is_none_or(|m| cur < *m) {
                    minv[c] = Some(cur);
                    way[c] = col0;
                }
                let m = minv[c].as_ref().expect("set above");
                if delta.as_ref().is_none_or(|d| *m < *d) {
                    delta = Some(m.clone());
                    col1 = c;
                }
            }
            let delta = delta.expect("rows <= cols leaves a free column");
            for c in 0..=cols {
                if used[c] {
                    let row = matched_row[c];
                    u[row] = u[row].clone() + delta.clone();
                    v[c] = v[c].clone() - delta.clone();
                } else if let Some(m) = minv[c].as_mut() {
                    *m = m.clone() - delta.clone();
                }
            }
            col0 = col1;
            if matched_row[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            matched_row[col0] = matched_row[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; rows];
    for c in 1..=cols {
        if matched_row[c] != 0 {
            row_to_col[matched_row[c] - 1] = c - 1;
        }
    }
    row_to_col
}

/// Optimal pairs `(agent, object)` between the listed agents and objects.
fn max_assignment<M: Money>(
    profile: &BidProfile<M>,
    agents: &[usize],
    objects: &[usize],
) -> Vec<(usize, usize)> {
    if agents.is_empty() || objects.is_empty() {
        return Vec::new();
    }
    if objects.len() <= agents.len() {
        let weights: Vec<M> = objects
            .iter()
            .flat_map(|&o| agents.iter().map(move |&a| profile.bid(a, o).clone()))
            .collect();
        hungarian_rows(&weights, objects.len(), agents.len())
            .into_iter()
            .enumerate()
            .map(|(r, c)| (agents[c], objects[r]))
            .collect()
    } else {
        let weights: Vec<M> = agents
            .iter()
            .flat_map(|&a| objects.iter().map(move |&o| profile.bid(a, o).clone()))
            .collect();
        hungarian_rows(&weights, agents.len(), objects.len())
            .into_iter()
            .enumerate()
            .map(|(r, c)| (agents[r], objects[c]))
            .collect()
    }
}

fn assignment_value<M: Money>(profile: &BidProfile<M>, agents: &[usize], objects: &[usize]) -> M {
    max_assignment(profile, agents, objects)
        .into_iter()
        .fold(M::zero(), |acc, (a, o)| acc + profile.bid(a, o).clone())
}

/// Value `v(k*)` of an efficient allocation among the `present` agents.
pub fn optimal_value<M: Money>(profile: &BidProfile<M>, present: AgentSet) -> M {
    let agents: Vec<usize> = present.iter().filter(|&a| a < profile.n()).collect();
    let objects: Vec<usize> = (0..profile.p()).collect();
    assignment_value(profile, &agents, &objects)
}

/// Efficient allocation over all agents not in `excluded`, ties broken by
/// the lexicographically smallest sorted `(agent, object)` list.
pub fn optimal_allocation<M: Money>(profile: &BidProfile<M>, excluded: AgentSet) -> Allocation<M> {
    optimal_allocation_among(profile, profile.agents().difference(excluded), TieBreak::LexSmallest)
}

pub fn optimal_allocation_among<M: Money>(
    profile: &BidProfile<M>,
    present: AgentSet,
    tie_break: TieBreak,
) -> Allocation<M> {
    match tie_break {
        TieBreak::LexSmallest => lex_smallest_optimum(profile, present),
        TieBreak::Reversed => {
            let n = profile.n();
            let p = profile.p();
            let agent_rev: Vec<usize> = (0..n).rev().collect();
            let object_rev: Vec<usize> = (0..p).rev().collect();
            let mirrored = profile.permute_agents(&agent_rev).permute_objects(&object_rev);
            let mirrored_present: AgentSet = present.iter().map(|a| n - 1 - a).collect();
            let alloc = lex_smallest_optimum(&mirrored, mirrored_present);
            let pairs = alloc
                .pairs
                .into_iter()
                .map(|(a, o)| (n - 1 - a, p - 1 - o))
                .collect();
            Allocation::from_pairs(profile, pairs)
        }
    }
}

fn lex_smallest_optimum<M: Money>(profile: &BidProfile<M>, present: AgentSet) -> Allocation<M> {
    let agents: Vec<usize> = present.iter().filter(|&a| a < profile.n()).collect();
    let mut remaining: Vec<usize> = (0..profile.p()).collect();
    let target = assignment_value(profile, &agents, &remaining);
    let mut acc = M::zero();
    let mut pairs = Vec::new();

    for (idx, &agent) in agents.iter().enumerate() {
        if remaining.is_empty() {
            break;
        }
        let later = &agents[idx + 1..];
        let mut best: Option<(usize, M)> = None;
        let mut chosen = None;
        for (pos, &object) in remaining.iter().enumerate() {
            let rest: Vec<usize> = remaining.iter().copied().filter(|&o| o != object).collect();
            let total = acc.clone() + profile.bid(agent, object).clone() + assignment_value(profile, later, &rest);
            if total.ties(&target) {
                chosen = Some(pos);
                break;
            }
            if best.as_ref().is_none_or(|(_, v)| total > *v) {
                best = Some((pos, total));
            }
        }
        let must_assign = later.len() < remaining.len();
        if chosen.is_none() && must_assign {
            // Only reachable through floating point drift.
            chosen = best.map(|(pos, _)| pos);
        }
        if let Some(pos) = chosen {
            let object = remaining.remove(pos);
            acc = acc + profile.bid(agent, object).clone();
            pairs.push((agent, object));
        }
    }
    Allocation::from_pairs(profile, pairs)
}

/// `P(m, k) = m! / (m - k)!`, saturating.
fn falling_factorial(m: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((m - i) as u128))
}

/// Number of full allocations `max(n,p)! / (max(n,p) - min(n,p))!`.
pub fn allocation_count(n: usize, p: usize) -> u128 {
    if p <= n {
        falling_factorial(n, p)
    } else {
        falling_factorial(p, n)
    }
}

/// Every injective assignment that places `min(n, p)` pairs, each with its value.
pub fn enumerate_allocations<M: Money>(profile: &BidProfile<M>) -> Result<Vec<Allocation<M>>> {
    enumerate_allocations_among(profile, profile.agents(), DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_allocations_among<M: Money>(
    profile: &BidProfile<M>,
    present: AgentSet,
    cap: u128,
) -> Result<Vec<Allocation<M>>> {
    let agents: Vec<usize> = present.iter().filter(|&a| a < profile.n()).collect();
    let p = profile.p();
    let count = allocation_count(agents.len(), p);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let mut out = Vec::with_capacity(count as usize);
    if agents.is_empty() {
        out.push(Allocation::empty());
        return Ok(out);
    }
    let mut pairs = Vec::new();
    if p <= agents.len() {
        let mut taken = vec![false; agents.len()];
        objects_to_agents(profile, &agents, 0, &mut taken, &mut pairs, &mut out);
    } else {
        let mut taken = vec![false; p];
        agents_to_objects(profile, &agents, 0, &mut taken, &mut pairs, &mut out);
    }
    Ok(out)
}

fn objects_to_agents<M: Money>(
    profile: &BidProfile<M>,
    agents: &[usize],
    object: usize,
    taken: &mut [bool],
    pairs: &mut Vec<(usize, usize)>,
    out: &mut Vec<Allocation<M>>,
) {
    if object == profile.p() {
        out.push(Allocation::from_pairs(profile, pairs.clone()));
        return;
    }
    for (k, &agent) in agents.iter().enumerate() {
        if taken[k] {
            continue;
        }
        taken[k] = true;
        pairs.push((agent, object));
        objects_to_agents(profile, agents, object + 1, taken, pairs, out);
        pairs.pop();
        taken[k] = false;
    }
}

fn agents_to_objects<M: Money>(
    profile: &BidProfile<M>,
    agents: &[usize],
    idx: usize,
    taken: &mut [bool],
    pairs: &mut Vec<(usize, usize)>,
    out: &mut Vec<Allocation<M>>,
) {
    if idx == agents.len() {
        out.push(Allocation::from_pairs(profile, pairs.clone()));
        return;
    }
    for object in 0..profile.p() {
        if taken[object] {
            continue;
        }
        taken[object] = true;
        pairs.push((agents[idx], object));
        agents_to_objects(profile, agents, idx + 1, taken, pairs, out);
        pairs.pop();
        taken[object] = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_example() -> BidProfile<f64> {
        BidProfile::from_rows(vec![
            vec![4.0, 5.0],
            vec![2.0, 1.0],
            vec![1.0, 4.0],
            vec![1.0, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn worked_example_optimum() {
        let a = optimal_allocation(&worked_example(), AgentSet::empty());
        assert_eq!(a.pairs, vec![(0, 0), (2, 1)]);
        assert_eq!(a.value, 8.0);
    }

    #[test]
    fn zero_bids_use_lexicographic_tie_break() {
        let z = BidProfile::homogeneous(&[0.0; 5], 3).unwrap();
        let a = optimal_allocation(&z, AgentSet::empty());
        assert_eq!(a.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(a.value, 0.0);
    }

    #[test]
    fn tie_between_two_optima() {
        // (1,2),(2,1): 2+3 = 5 and (2,1),(3,2): 3+2 = 5 tie; the first list is smaller.
        let prof = BidProfile::from_rows(vec![vec![1.0, 2.0], vec![3.0, 1.0], vec![2.0, 2.0]]).unwrap();
        let a = optimal_allocation(&prof, AgentSet::empty());
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(a.value, 5.0);
        let r = optimal_allocation_among(&prof, prof.agents(), TieBreak::Reversed);
        assert_eq!(r.value, 5.0);
        assert_eq!(r.pairs, vec![(1, 0), (2, 1)]);
    }

    #[test]
    fn excluded_agents_and_empty_set() {
        let prof = worked_example();
        let a = optimal_allocation(&prof, AgentSet::from_iter([0]));
        assert_eq!(a.value, 6.0);
        assert!(!a.contains_agent(0));
        let none = optimal_allocation(&prof, prof.agents());
        assert!(none.pairs.is_empty());
        assert_eq!(none.value, 0.0);
    }

    #[test]
    fn more_objects_than_agents() {
        let prof = BidProfile::from_rows(vec![vec![1.0, 9.0, 3.0], vec![0.0, 8.0, 2.0]]).unwrap();
        let a = optimal_allocation(&prof, AgentSet::empty());
        assert_eq!(a.value, 11.0);
        assert_eq!(a.pairs.len(), 2);
        assert_eq!(enumerate_allocations(&prof).unwrap().len(), 6);
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_allocations(&worked_example()).unwrap().len(), 12);
        let sq = BidProfile::homogeneous(&[1.0, 2.0, 3.0], 3).unwrap();
        assert_eq!(enumerate_allocations(&sq).unwrap().len(), 6);
        let best = enumerate_allocations(&worked_example())
            .unwrap()
            .into_iter()
            .map(|a| a.value)
            .fold(f64::MIN, f64::max);
        assert_eq!(best, 8.0);
    }

    #[test]
    fn enumeration_cap() {
        let big = BidProfile::homogeneous(&[1.0; 12], 8).unwrap();
        assert!(matches!(
            enumerate_allocations(&big),
            Err(Error::EnumerationCap { count: 19_958_400, .. })
        ));
    }
}
