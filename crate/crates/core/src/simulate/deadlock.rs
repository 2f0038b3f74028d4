use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::model::Rank;

/// A rank that cannot make progress and what it is blocked on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockedRank {
    pub rank: Rank,
    pub on: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeadlockReport {
    pub time: f64,
    /// Ascending by rank.
    pub blocked: Vec<BlockedRank>,
    /// Wait-for cycle starting at its lowest rank; the first rank is not repeated.
    pub cycle: Option<Vec<Rank>>,
    /// Blocked ranks whose every wait-for target has terminated.
    pub orphans: Vec<Rank>,
}

impl DeadlockReport {
    pub fn blocked_ranks(&self) -> Vec<Rank> {
        self.blocked.iter().map(|b| b.rank).collect()
    }

    pub fn is_orphan_wait(&self) -> bool {
        self.cycle.is_none() && !self.orphans.is_empty()
    }
}

impl fmt::Display for DeadlockReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "deadlock at t={:.3}us", self.time)?;
        match &self.cycle {
            Some(c) => {
                let path: Vec<String> = c.iter().chain(c.first()).map(|r| format!("P{r}")).collect();
                write!(f, ": cycle {}", path.join(" → "))?;
            }
            None if !self.orphans.is_empty() => f.write_str(": orphan wait")?,
            None => {}
        }
        for b in &self.blocked {
            let tag = if self.orphans.contains(&b.rank) { " (orphan wait)" } else { "" };
            write!(f, "\n  P{} blocked on {}{tag}", b.rank, b.on)?;
        }
        Ok(())
    }
}

/// Classify a quiescent blocked state. `edges` are wait-for edges `(waiter, awaited)`;
/// targets outside the blocked set are terminated ranks. The reported cycle is the first
/// found by depth-first search from the lowest blocked rank, visiting successors in
/// ascending order.
pub fn detect_deadlock_state(mut blocked: Vec<BlockedRank>, edges: &[(Rank, Rank)], time: f64) -> DeadlockReport {
    blocked.sort_by_key(|b| b.rank);
    let set: BTreeSet<Rank> = blocked.iter().map(|b| b.rank).collect();
    let mut succ: BTreeMap<Rank, BTreeSet<Rank>> = BTreeMap::new();
    for &(a, b) in edges {
        if set.contains(&a) {
            succ.entry(a).or_default().insert(b);
        }
    }
    let orphans =
        set.iter().copied().filter(|r| succ.get(r).is_none_or(|s| s.iter().all(|t| !set.contains(t)))).collect();

    let mut color: BTreeMap<Rank, u8> = BTreeMap::new();
    let mut cycle = None;
    for &start in &set {
        if color.contains_key(&start) {
            continue;
        }
        let mut path = Vec::new();
        if let Some(c) = dfs(start, &succ, &set, &mut color, &mut path) {
            cycle = Some(c);
            break;
        }
    }
    DeadlockReport { time, blocked, cycle, orphans }
}

fn dfs(
    u: Rank,
    succ: &BTreeMap<Rank, BTreeSet<Rank>>,
    set: &BTreeSet<Rank>,
    color: &mut BTreeMap<Rank, u8>,
    path: &mut Vec<Rank>,
) -> Option<Vec<Rank>> {
    color.insert(u, 1);
    path.push(u);
    for &v in succ.get(&u).into_iter().flatten() {
        if !set.contains(&v) {
            continue;
        }
        match color.get(&v) {
            Some(1) => {
                let at = path.iter().position(|&x| x == v).expect("on path");
                let mut c = path[at..].to_vec();
                let min = c.iter().enumerate().min_by_key(|(_, r)| **r).map(|(i, _)| i).unwrap_or(0);
                c.rotate_left(min);
                return Some(c);
            }
            Some(_) => {}
            None => {
                if let Some(c) = dfs(v, succ, set, color, path) {
                    return Some(c);
                }
            }
        }
    }
    path.pop();
    color.insert(u, 2);
    None
}
