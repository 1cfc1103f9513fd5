//! Two-stage path analysis.
//!
//! Stage 1 walks each path with a counter per resource: +1 on a node that
//! acquires it, -1 on a node that releases it. A path ending with a positive
//! counter is leak-risky.
//!
//! Stage 2 visits if-statements from the last line upwards. For an if whose
//! condition validates the resource, paths through it are grouped by the
//! prefix leading to it and split by the branch taken. When one side of a
//! group is entirely risky and the other entirely clean, the risky side is the
//! branch where the resource was never reachable, and its paths are cleared.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::cfg::{build_cfg, Attribution, Cfg, EdgeLabel, NodeId, NodeKind};
use crate::frontend::{MethodSnippet, SourceError};
use crate::intent::{normalize_var, IntentionKind, IntentionSet};
use crate::paths::{enumerate, ControlFlowPath, PathError, PathRenderer, DEFAULT_MAX_PATHS};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Paths(#[from] PathError),
}

impl AnalysisError {
    pub fn line(&self) -> Option<u32> {
        match self {
            Self::Source(e) => e.line(),
            Self::Paths(_) => None,
        }
    }
}

/// Paths through one validating if-statement that share everything up to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchPair {
    pub prefix: Vec<NodeId>,
    /// Indices of paths leaving the if along its first (true) edge.
    pub first: Vec<usize>,
    /// Indices of paths leaving along the second (false) edge.
    pub second: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagateOutcome {
    ClearedFirst,
    ClearedSecond,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub path_id: usize,
    /// Line-interval form, e.g. `[160-185, 187-190]`.
    pub intervals: String,
    pub lines: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LeakVerdict {
    pub resource: String,
    pub leaked: bool,
    pub witness: Option<Witness>,
    pub acquire_sites: Vec<u32>,
}

/// A reported leak, serialized as one JSON object per line by the CLI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LeakReport {
    pub resource: String,
    pub acquire_lines: Vec<u32>,
    pub witness_lines: Vec<u32>,
    pub method_id: String,
    #[serde(skip)]
    pub witness_intervals: String,
}

/// Stage 1: sets `risky` on every path from its acquire/release balance.
pub fn stage1(cfg: &Cfg, paths: &mut [ControlFlowPath], res: &str, intents: &IntentionSet) {
    stage1_with(&cfg.attribute(intents), paths, normalize_var(res));
}

fn stage1_with(attr: &Attribution, paths: &mut [ControlFlowPath], res: &str) {
    for path in paths.iter_mut() {
        let mut counter: i64 = 0;
        for &node in path.nodes() {
            if attr.has(node, IntentionKind::Acquire, res) {
                counter += 1;
            } else if attr.has(node, IntentionKind::Release, res) {
                counter -= 1;
            }
        }
        path.risky = Some(counter > 0);
    }
}

/// Stage 2: clears false-alarm paths below validating if-statements.
pub fn stage2(cfg: &Cfg, paths: &mut [ControlFlowPath], res: &str, intents: &IntentionSet) {
    stage2_with(cfg, &cfg.attribute(intents), paths, normalize_var(res));
}

fn stage2_with(cfg: &Cfg, attr: &Attribution, paths: &mut [ControlFlowPath], res: &str) {
    let mut ifs: Vec<NodeId> = paths
        .iter()
        .flat_map(|p| p.nodes().iter().copied())
        .filter(|&n| cfg.node(n).kind == NodeKind::IfBranch)
        .collect();
    ifs.sort_by_key(|&n| std::cmp::Reverse((cfg.node(n).span.start, n)));
    ifs.dedup();
    for ifstmt in ifs {
        if !attr.has(ifstmt, IntentionKind::Validate, res) {
            continue;
        }
        for pair in branch_pairs(paths, ifstmt) {
            propagate(&pair, paths);
        }
    }
}

/// Groups the paths through `ifstmt` by the prefix up to its first
/// occurrence and splits each group by the edge taken out of it. Groups with
/// an empty side are dropped.
pub fn branch_pairs(paths: &[ControlFlowPath], ifstmt: NodeId) -> Vec<BranchPair> {
    type Key<'a> = (&'a [NodeId], &'a [EdgeLabel]);
    let mut groups: BTreeMap<Key<'_>, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, p) in paths.iter().enumerate() {
        let Some(pos) = p.position(ifstmt) else {
            continue;
        };
        let key = (&p.nodes()[..=pos], &p.labels()[..pos]);
        let entry = groups.entry(key).or_default();
        match p.labels()[pos] {
            EdgeLabel::True => entry.0.push(i),
            _ => entry.1.push(i),
        }
    }
    groups
        .into_iter()
        .filter(|(_, (a, b))| !a.is_empty() && !b.is_empty())
        .map(|((prefix, _), (first, second))| BranchPair {
            prefix: prefix.to_vec(),
            first,
            second,
        })
        .collect()
}

/// Clears the risky side of a pair when that side is entirely risky and the
/// other side has no risky path.
pub fn propagate(pair: &BranchPair, paths: &mut [ControlFlowPath]) -> PropagateOutcome {
    let all = |side: &[usize], paths: &[ControlFlowPath]| side.iter().all(|&i| paths[i].is_risky());
    let none =
        |side: &[usize], paths: &[ControlFlowPath]| !side.iter().any(|&i| paths[i].is_risky());
    if all(&pair.first, paths) && none(&pair.second, paths) {
        for &i in &pair.first {
            paths[i].risky = Some(false);
        }
        PropagateOutcome::ClearedFirst
    } else if none(&pair.first, paths) && all(&pair.second, paths) {
        for &i in &pair.second {
            paths[i].risky = Some(false);
        }
        PropagateOutcome::ClearedSecond
    } else {
        PropagateOutcome::Unchanged
    }
}

/// Runs both stages for `res` on private copies of `paths`.
pub fn detect(
    res: &str,
    paths: &[ControlFlowPath],
    intents: &IntentionSet,
    cfg: &Cfg,
) -> LeakVerdict {
    detect_with(res, paths, intents, cfg, &cfg.attribute(intents))
}

fn detect_with(
    res: &str,
    paths: &[ControlFlowPath],
    intents: &IntentionSet,
    cfg: &Cfg,
    attr: &Attribution,
) -> LeakVerdict {
    let res = normalize_var(res);
    let mut work = paths.to_vec();
    stage1_with(attr, &mut work, res);
    stage2_with(cfg, attr, &mut work, res);
    let witness = work.iter().find(|p| p.is_risky()).map(|p| Witness {
        path_id: p.id,
        intervals: PathRenderer::new(cfg, paths).render(p),
        lines: p.lines(cfg),
    });
    LeakVerdict {
        resource: res.to_string(),
        leaked: witness.is_some(),
        witness,
        acquire_sites: intents
            .for_var(res)
            .filter(|i| i.kind() == IntentionKind::Acquire)
            .map(|i| i.lineno())
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub max_paths: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            max_paths: DEFAULT_MAX_PATHS,
        }
    }
}

/// Everything computed for one method.
#[derive(Debug, Clone)]
pub struct MethodAnalysis {
    pub method_id: String,
    pub cfg: Cfg,
    pub paths: Vec<ControlFlowPath>,
    pub verdicts: Vec<LeakVerdict>,
    /// Resources dropped because a try-with-resources header declares them.
    pub suppressed: Vec<String>,
    pub reports: Vec<LeakReport>,
}

pub fn analyze(
    snippet: &MethodSnippet,
    intents: &IntentionSet,
    options: &AnalysisOptions,
) -> Result<MethodAnalysis, AnalysisError> {
    let cfg = build_cfg(snippet)?;
    let paths = enumerate(&cfg, intents, options.max_paths)?;
    let attr = cfg.attribute(intents);
    let method_id = snippet.symbol();
    let mut verdicts = Vec::new();
    let mut suppressed = Vec::new();
    let mut reports = Vec::new();
    for res in intents.acquired_resources() {
        let verdict = detect_with(res, &paths, intents, &cfg, &attr);
        if snippet.is_declared_resource(res) {
            suppressed.push(res.to_string());
        } else if let Some(w) = &verdict.witness {
            reports.push(LeakReport {
                resource: verdict.resource.clone(),
                acquire_lines: verdict.acquire_sites.clone(),
                witness_lines: w.lines.clone(),
                method_id: method_id.clone(),
                witness_intervals: w.intervals.clone(),
            });
        }
        verdicts.push(verdict);
    }
    Ok(MethodAnalysis {
        method_id,
        cfg,
        paths,
        verdicts,
        suppressed,
        reports,
    })
}

/// Leak reports for one method, after the try-with-resources filter.
pub fn analyze_method(
    snippet: &MethodSnippet,
    intents: &IntentionSet,
    options: &AnalysisOptions,
) -> Result<Vec<LeakReport>, AnalysisError> {
    analyze(snippet, intents, options).map(|a| a.reports)
}
