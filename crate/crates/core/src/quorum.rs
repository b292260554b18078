//! Static analysis of trust structures: Byzantine quorum arithmetic, the
//! trust-list overlap condition for round-voting ledgers, and threshold
//! slice trees with exhaustive quorum-intersection checking.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::Rational64;
use thiserror::Error;

use crate::types::NodeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QuorumError {
    #[error("agreement unattainable: requires n > 3f, got n={n}, f={f}")]
    AgreementUnattainable { n: u64, f: u64 },
}

/// Smallest Byzantine quorum: strictly more than `(n+f)/2` nodes, i.e.
/// `floor((n+f)/2) + 1`. Rejects systems where agreement is unattainable
/// (`n <= 3f`).
pub fn min_byzantine_quorum(n: u64, f: u64) -> Result<u64, QuorumError> {
    if n <= 3 * f {
        return Err(QuorumError::AgreementUnattainable { n, f });
    }
    Ok((n + f) / 2 + 1)
}

/// The strict lower bound on pairwise trust-list overlap that rules out
/// forks: `2 (1 - rho) m`, with `rho` given in percent and `m` the size of
/// the larger list. Exact rational arithmetic; the condition is
/// `overlap > bound`.
pub fn ripple_required_overlap(rho_pct: u32, m: u64) -> Rational64 {
    Rational64::new(2 * (100 - rho_pct as i64) * m as i64, 100)
}

/// Declarative trust structure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QuorumSpec {
    Uniform { n: u64, f: u64 },
    UnlMap { lists: BTreeMap<NodeId, BTreeSet<NodeId>> },
    SliceTree { slices: BTreeMap<NodeId, SliceNode> },
}

/// A threshold tree: leaves are members, groups are satisfied when at least
/// the threshold of their children are satisfied. Percent thresholds round
/// up to whole members (67% of 4 is 3).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SliceNode {
    Member(NodeId),
    Group {
        threshold: Threshold,
        children: Vec<SliceNode>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Threshold {
    Percent(u32),
    Count(u32),
}

impl Threshold {
    pub fn required_of(&self, len: usize) -> usize {
        match self {
            Threshold::Count(c) => *c as usize,
            Threshold::Percent(p) => {
                ((*p as usize * len) + 99) / 100
            }
        }
    }
}

impl SliceNode {
    /// Recursive threshold evaluation: a member is satisfied when it voted,
    /// a group when at least its threshold of children are satisfied.
    pub fn satisfied(&self, voters: &BTreeSet<NodeId>) -> bool {
        match self {
            SliceNode::Member(id) => voters.contains(id),
            SliceNode::Group {
                threshold,
                children,
            } => {
                let got = children.iter().filter(|c| c.satisfied(voters)).count();
                got >= threshold.required_of(children.len())
            }
        }
    }

    pub fn members(&self, into: &mut BTreeSet<NodeId>) {
        match self {
            SliceNode::Member(id) => {
                into.insert(*id);
            }
            SliceNode::Group { children, .. } => {
                for c in children {
                    c.members(into);
                }
            }
        }
    }
}

/// Convenience wrapper matching the protocol hook: is this node's slice
/// tree satisfied by the given voter set?
pub fn stellar_slice_satisfied(tree: &SliceNode, voters: &BTreeSet<NodeId>) -> bool {
    tree.satisfied(voters)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QuorumVerdict {
    Pass,
    Fail { witness: String },
    Inconclusive { reason: String },
}

impl QuorumVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, QuorumVerdict::Pass)
    }
}

impl fmt::Display for QuorumVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuorumVerdict::Pass => write!(f, "PASS"),
            QuorumVerdict::Fail { witness } => write!(f, "FAIL: {witness}"),
            QuorumVerdict::Inconclusive { reason } => write!(f, "INCONCLUSIVE: {reason}"),
        }
    }
}

/// Pairwise overlap check for trust-list maps: every pair of lists must
/// share strictly more than `2 (1 - rho) m` nodes, `m` the larger list's
/// size. The first violating pair is the witness.
pub fn check_unl_config(
    lists: &BTreeMap<NodeId, BTreeSet<NodeId>>,
    rho_pct: u32,
) -> QuorumVerdict {
    let nodes: Vec<NodeId> = lists.keys().copied().collect();
    for (i, a) in nodes.iter().enumerate() {
        for b in nodes.iter().skip(i + 1) {
            let la = &lists[a];
            let lb = &lists[b];
            let overlap = la.intersection(lb).count() as i64;
            let m = la.len().max(lb.len()) as u64;
            let bound = ripple_required_overlap(rho_pct, m);
            if Rational64::from_integer(overlap) <= bound {
                return QuorumVerdict::Fail {
                    witness: format!(
                        "lists of {a} and {b} overlap in {overlap} nodes, bound is {} (m={m}, rho={rho_pct}%)",
                        bound
                    ),
                };
            }
        }
    }
    QuorumVerdict::Pass
}

/// Exhaustive quorum-intersection check for slice systems. A quorum is a
/// non-empty node set satisfying the slice of each of its members; the
/// system is safe when every two quorums intersect. Member counts above the
/// enumeration bound return inconclusive rather than guessing.
pub fn check_slice_intersection(slices: &BTreeMap<NodeId, SliceNode>) -> QuorumVerdict {
    let mut members: BTreeSet<NodeId> = slices.keys().copied().collect();
    for tree in slices.values() {
        tree.members(&mut members);
    }
    let universe: Vec<NodeId> = members.into_iter().collect();
    let bits = universe.len();
    if bits > 20 {
        return QuorumVerdict::Inconclusive {
            reason: format!("{bits} members exceed the enumeration bound of 20"),
        };
    }
    let is_quorum = |mask: u32| -> bool {
        if mask == 0 {
            return false;
        }
        let set: BTreeSet<NodeId> = universe
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, id)| *id)
            .collect();
        set.iter().all(|id| match slices.get(id) {
            Some(tree) => tree.satisfied(&set),
            None => true, // nodes without a declared slice are easy to convince
        })
    };
    // Collect minimal-ish quorums: filter to quorums, then check pairwise
    // disjointness by masks.
    let mut quorums: Vec<u32> = Vec::new();
    for mask in 1u32..(1 << bits) {
        if is_quorum(mask) {
            // Skip supersets of an already-known quorum: any disjoint pair
            // of quorums implies a disjoint pair involving minimal ones.
            if quorums.iter().any(|q| q & mask == *q) {
                continue;
            }
            quorums.push(mask);
        }
    }
    for (i, a) in quorums.iter().enumerate() {
        for b in quorums.iter().skip(i) {
            if a & b == 0 {
                let name = |mask: u32| -> String {
                    universe
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| mask & (1 << k) != 0)
                        .map(|(_, id)| id.to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                };
                return QuorumVerdict::Fail {
                    witness: format!("disjoint quorums {{{}}} and {{{}}}", name(*a), name(*b)),
                };
            }
        }
    }
    QuorumVerdict::Pass
}

/// Uniform `n`, `f` systems expressed as slice trees: every node's slice is
/// "any `floor((n+f)/2)+1` of all".
pub fn uniform_as_slices(n: u64, f: u64) -> Result<BTreeMap<NodeId, SliceNode>, QuorumError> {
    let q = min_byzantine_quorum(n, f)?;
    let all: Vec<SliceNode> = (0..n).map(|i| SliceNode::Member(NodeId(i as u8))).collect();
    Ok((0..n)
        .map(|i| {
            (
                NodeId(i as u8),
                SliceNode::Group {
                    threshold: Threshold::Count(q as u32),
                    children: all.clone(),
                },
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(xs: &[u8]) -> BTreeSet<NodeId> {
        xs.iter().map(|i| NodeId(*i)).collect()
    }

    #[test]
    fn quorum_formula_matches_reported_values() {
        assert_eq!(min_byzantine_quorum(4, 1), Ok(3));
        assert_eq!(min_byzantine_quorum(7, 2), Ok(5));
        assert_eq!(
            min_byzantine_quorum(3, 1),
            Err(QuorumError::AgreementUnattainable { n: 3, f: 1 })
        );
        // 2f+1 whenever n = 3f+1.
        for f in 1..=4u64 {
            assert_eq!(min_byzantine_quorum(3 * f + 1, f), Ok(2 * f + 1));
        }
    }

    #[test]
    fn quorum_intersection_exhaustive_up_to_twelve() {
        // Any two quorums of size floor((n+f)/2)+1 among n nodes intersect
        // in at least f+1 nodes: checked over all subset pairs.
        for n in 1..=12u32 {
            for f in 0..((n as u64 + 2) / 3) {
                let Ok(q) = min_byzantine_quorum(n as u64, f) else {
                    continue;
                };
                let q = q as u32;
                let masks: Vec<u32> =
                    (0u32..1 << n).filter(|m| m.count_ones() == q).collect();
                for a in &masks {
                    for b in &masks {
                        assert!(
                            (a & b).count_ones() as u64 >= f + 1,
                            "n={n} f={f} quorums {a:b} {b:b}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn overlap_bound_values() {
        assert_eq!(ripple_required_overlap(80, 10), Rational64::new(4, 1));
        assert_eq!(ripple_required_overlap(100, 7), Rational64::new(0, 1));
        // rho=50%, m=8: the bound equals the whole list, flagging the
        // configuration as unsatisfiable.
        assert_eq!(ripple_required_overlap(50, 8), Rational64::new(8, 1));
    }

    #[test]
    fn unl_check_passes_mutual_trust_and_fails_cliques() {
        // Five validators trusting exactly each other.
        let all = ids(&[0, 1, 2, 3, 4]);
        let lists: BTreeMap<NodeId, BTreeSet<NodeId>> =
            all.iter().map(|v| (*v, all.clone())).collect();
        assert!(check_unl_config(&lists, 80).passed());

        let mut cliques = BTreeMap::new();
        for v in [0u8, 1, 2] {
            cliques.insert(NodeId(v), ids(&[0, 1, 2]));
        }
        for v in [3u8, 4, 5] {
            cliques.insert(NodeId(v), ids(&[3, 4, 5]));
        }
        assert!(matches!(
            check_unl_config(&cliques, 80),
            QuorumVerdict::Fail { .. }
        ));
    }

    #[test]
    fn unl_check_monotone_under_shared_validator() {
        // Adding a common validator to every list never turns pass into
        // fail: overlap grows by one, the bound by at most 2(1-rho).
        let base: BTreeMap<NodeId, BTreeSet<NodeId>> = [
            (NodeId(0), ids(&[0, 1, 2, 3])),
            (NodeId(1), ids(&[0, 1, 2, 4])),
            (NodeId(2), ids(&[1, 2, 3, 4])),
        ]
        .into_iter()
        .collect();
        for rho in [60u32, 70, 80, 90, 100] {
            if check_unl_config(&base, rho).passed() {
                let grown: BTreeMap<NodeId, BTreeSet<NodeId>> = base
                    .iter()
                    .map(|(k, v)| {
                        let mut v = v.clone();
                        v.insert(NodeId(9));
                        (*k, v)
                    })
                    .collect();
                assert!(
                    check_unl_config(&grown, rho).passed(),
                    "rho={rho}: adding a shared validator broke the check"
                );
            }
        }
    }

    #[test]
    fn slice_evaluation_is_monotone() {
        let tree = SliceNode::Group {
            threshold: Threshold::Percent(67),
            children: vec![
                SliceNode::Member(NodeId(0)),
                SliceNode::Member(NodeId(1)),
                SliceNode::Member(NodeId(2)),
                SliceNode::Member(NodeId(3)),
            ],
        };
        assert!(!tree.satisfied(&ids(&[])));
        assert!(!tree.satisfied(&ids(&[0, 1])));
        assert!(tree.satisfied(&ids(&[0, 1, 2])));
        assert!(tree.satisfied(&ids(&[0, 1, 2, 3])));
    }

    #[test]
    fn uniform_slices_intersect_and_split_brains_fail() {
        let slices = uniform_as_slices(4, 1).unwrap();
        assert!(check_slice_intersection(&slices).passed());

        // Two self-satisfying groups.
        let g1 = SliceNode::Group {
            threshold: Threshold::Count(2),
            children: vec![SliceNode::Member(NodeId(0)), SliceNode::Member(NodeId(1))],
        };
        let g2 = SliceNode::Group {
            threshold: Threshold::Count(2),
            children: vec![SliceNode::Member(NodeId(2)), SliceNode::Member(NodeId(3))],
        };
        let split: BTreeMap<NodeId, SliceNode> = [
            (NodeId(0), g1.clone()),
            (NodeId(1), g1),
            (NodeId(2), g2.clone()),
            (NodeId(3), g2),
        ]
        .into_iter()
        .collect();
        assert!(matches!(
            check_slice_intersection(&split),
            QuorumVerdict::Fail { .. }
        ));
    }
}
