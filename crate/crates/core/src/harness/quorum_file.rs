//! Quorum-structure files for the `check-quorum` verb: uniform `n`/`f`
//! systems, trust-list maps with an overlap parameter, and threshold slice
//! trees built from named groups.

use std::collections::{BTreeMap, BTreeSet};

use crate::quorum::{
    check_slice_intersection, check_unl_config, min_byzantine_quorum, ripple_required_overlap,
    uniform_as_slices, QuorumVerdict, SliceNode, Threshold,
};
use crate::scenario::ScenarioError;
use crate::types::{parse_node, NodeId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QuorumFile {
    Uniform {
        n: u64,
        f: u64,
    },
    Unl {
        rho_pct: u32,
        lists: BTreeMap<NodeId, BTreeSet<NodeId>>,
    },
    Slices {
        slices: BTreeMap<NodeId, SliceNode>,
    },
}

fn perr(line: usize, field: &str, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        field: field.into(),
        msg: msg.into(),
    }
}

pub fn parse(text: &str) -> Result<QuorumFile, ScenarioError> {
    let mut kind = None;
    let mut n = None;
    let mut f = None;
    let mut rho = None;
    let mut lists: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    let mut groups: Vec<(usize, String, u32, Vec<String>)> = Vec::new();
    let mut slices: Vec<(usize, NodeId, String)> = Vec::new();

    for (ln0, raw) in text.lines().enumerate() {
        let ln = ln0 + 1;
        let line = match raw.find('#') {
            Some(p) => raw[..p].trim(),
            None => raw.trim(),
        };
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("unl ") {
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| perr(ln, "unl", "expected `unl <X> = <list>`"))?;
            let node =
                parse_node(k.trim()).ok_or_else(|| perr(ln, "unl", "bad node name"))?;
            let mut set = BTreeSet::new();
            for tok in v.split_whitespace() {
                set.insert(parse_node(tok).ok_or_else(|| perr(ln, "unl", "bad node name"))?);
            }
            lists.insert(node, set);
            continue;
        }
        if let Some(rest) = line.strip_prefix("group ") {
            // group <name> = <pct>% of <child> <child> ...
            let (name, v) = rest
                .split_once('=')
                .ok_or_else(|| perr(ln, "group", "expected `group <name> = <pct>% of ...`"))?;
            let v = v.trim();
            let (pct_part, children_part) = v
                .split_once(" of ")
                .ok_or_else(|| perr(ln, "group", "missing `of`"))?;
            let pct: u32 = pct_part
                .trim()
                .trim_end_matches('%')
                .parse()
                .map_err(|_| perr(ln, "group", "bad percentage"))?;
            let children = children_part
                .split_whitespace()
                .map(|s| s.to_string())
                .collect();
            groups.push((ln, name.trim().to_string(), pct, children));
            continue;
        }
        if let Some(rest) = line.strip_prefix("slice ") {
            let (node, v) = rest
                .split_once('=')
                .ok_or_else(|| perr(ln, "slice", "expected `slice <X> = <group>`"))?;
            let node =
                parse_node(node.trim()).ok_or_else(|| perr(ln, "slice", "bad node name"))?;
            slices.push((ln, node, v.trim().to_string()));
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| perr(ln, line, "expected `key = value`"))?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "kind" => kind = Some((ln, v.to_string())),
            "n" => n = Some(v.parse::<u64>().map_err(|_| perr(ln, "n", "bad number"))?),
            "f" => f = Some(v.parse::<u64>().map_err(|_| perr(ln, "f", "bad number"))?),
            "rho" => {
                rho = Some(
                    v.trim_end_matches('%')
                        .parse::<u32>()
                        .map_err(|_| perr(ln, "rho", "bad percentage"))?,
                )
            }
            other => return Err(perr(ln, other, "unknown key")),
        }
    }

    let (kline, kind) = kind.ok_or_else(|| ScenarioError::Invalid {
        field: "kind".into(),
        msg: "missing required key".into(),
    })?;
    match kind.as_str() {
        "uniform" => {
            let n = n.ok_or_else(|| perr(kline, "n", "required for uniform"))?;
            let f = f.ok_or_else(|| perr(kline, "f", "required for uniform"))?;
            Ok(QuorumFile::Uniform { n, f })
        }
        "unl" => {
            if lists.is_empty() {
                return Err(perr(kline, "unl", "at least one list required"));
            }
            for (node, list) in &lists {
                if list.is_empty() {
                    return Err(ScenarioError::Invalid {
                        field: "unl".into(),
                        msg: format!("empty trust list for {node}"),
                    });
                }
            }
            Ok(QuorumFile::Unl {
                rho_pct: rho.unwrap_or(80),
                lists,
            })
        }
        "slices" => {
            let mut by_name: BTreeMap<String, (u32, Vec<String>)> = BTreeMap::new();
            for (ln, name, pct, children) in &groups {
                if by_name
                    .insert(name.clone(), (*pct, children.clone()))
                    .is_some()
                {
                    return Err(perr(*ln, "group", format!("duplicate group `{name}`")));
                }
            }
            fn build(
                name: &str,
                by_name: &BTreeMap<String, (u32, Vec<String>)>,
                depth: usize,
                line: usize,
            ) -> Result<SliceNode, ScenarioError> {
                if depth > 16 {
                    return Err(perr(line, "group", format!("cycle through `{name}`")));
                }
                if let Some((pct, children)) = by_name.get(name) {
                    let nodes = children
                        .iter()
                        .map(|c| build(c, by_name, depth + 1, line))
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(SliceNode::Group {
                        threshold: Threshold::Percent(*pct),
                        children: nodes,
                    })
                } else if let Some(id) = parse_node(name) {
                    Ok(SliceNode::Member(id))
                } else {
                    Err(perr(line, "group", format!("unknown name `{name}`")))
                }
            }
            let mut out = BTreeMap::new();
            for (ln, node, root) in &slices {
                out.insert(*node, build(root, &by_name, 0, *ln)?);
            }
            if out.is_empty() {
                return Err(perr(kline, "slice", "at least one slice required"));
            }
            Ok(QuorumFile::Slices { slices: out })
        }
        other => Err(perr(kline, "kind", format!("unknown kind `{other}`"))),
    }
}

/// Runs the appropriate analysis and returns report lines.
pub fn analyze(file: &QuorumFile) -> (Vec<String>, bool) {
    let mut lines = Vec::new();
    let mut ok = true;
    match file {
        QuorumFile::Uniform { n, f } => match min_byzantine_quorum(*n, *f) {
            Ok(q) => {
                lines.push(format!("minimum byzantine quorum: {q} of n={n}, f={f}"));
                let slices = uniform_as_slices(*n, *f).expect("checked above");
                let v = check_slice_intersection(&slices);
                ok &= v.passed();
                lines.push(format!("quorum intersection: {v}"));
            }
            Err(e) => {
                ok = false;
                lines.push(format!("FAIL: {e}"));
            }
        },
        QuorumFile::Unl { rho_pct, lists } => {
            let m = lists.values().map(|l| l.len()).max().unwrap_or(0) as u64;
            lines.push(format!(
                "required pairwise overlap: more than {} (rho={rho_pct}%, m={m})",
                ripple_required_overlap(*rho_pct, m)
            ));
            let v = check_unl_config(lists, *rho_pct);
            ok &= v.passed();
            lines.push(format!("overlap condition: {v}"));
        }
        QuorumFile::Slices { slices } => {
            let v = check_slice_intersection(slices);
            ok &= match v {
                QuorumVerdict::Pass => true,
                _ => false,
            };
            lines.push(format!("slice quorum intersection: {v}"));
        }
    }
    (lines, ok)
}
