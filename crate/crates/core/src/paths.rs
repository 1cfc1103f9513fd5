//! Entry→exit path enumeration.
//!
//! [`enumerate`] applies two reductions:
//!
//! * loops: each loop body is entered at most once per path; `while`/`for`
//!   loops produce both the skip and the single-iteration variant, `do-while`
//!   only the single iteration;
//! * resource-independent branches: when no branch of a multi-way node
//!   acquires or releases anything and none returns or throws, only the first
//!   branch is followed.
//!
//! [`enumerate_exhaustive`] keeps every branch and only bounds loops; it is the
//! reference the pruned enumeration is checked against.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::cfg::{Cfg, EdgeLabel, LoopKind, NodeId, NodeKind};
use crate::intent::IntentionSet;

pub const DEFAULT_MAX_PATHS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("path explosion: more than {ceiling} paths")]
    Explosion { ceiling: usize },
    #[error("loop bound must be at least 1")]
    InvalidLoopBound,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ControlFlowPath {
    pub id: usize,
    nodes: Vec<NodeId>,
    /// `labels[i]` is the label of the edge `nodes[i] -> nodes[i + 1]`.
    labels: Vec<EdgeLabel>,
    pub risky: Option<bool>,
}

impl ControlFlowPath {
    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn labels(&self) -> &[EdgeLabel] {
        &self.labels
    }

    pub fn is_risky(&self) -> bool {
        self.risky == Some(true)
    }

    pub fn position(&self, node: NodeId) -> Option<usize> {
        self.nodes.iter().position(|&n| n == node)
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.position(node).is_some()
    }

    /// Start lines of the statement nodes along the path.
    pub fn lines(&self, cfg: &Cfg) -> Vec<u32> {
        self.nodes
            .iter()
            .filter(|&&n| n != cfg.entry() && n != cfg.exit())
            .map(|&n| cfg.node(n).span.start)
            .collect()
    }

    /// Checks the first/last node and edge adjacency against `cfg`.
    pub fn is_well_formed(&self, cfg: &Cfg) -> bool {
        self.nodes.first() == Some(&cfg.entry())
            && self.nodes.last() == Some(&cfg.exit())
            && self.labels.len() + 1 == self.nodes.len()
            && self
                .nodes
                .windows(2)
                .zip(&self.labels)
                .all(|(w, &l)| cfg.successors(w[0]).contains(&(w[1], l)))
    }
}

/// Pruned enumeration driven by the intentions.
pub fn enumerate(
    cfg: &Cfg,
    intents: &IntentionSet,
    max_paths: usize,
) -> Result<Vec<ControlFlowPath>, PathError> {
    let attribution = cfg.attribute(intents);
    let prunable = cfg
        .nodes()
        .iter()
        .map(|n| {
            let out = cfg.successors(n.id);
            out.len() > 1
                && (0..out.len()).all(|i| {
                    cfg.branch_region(n.id, i).iter().all(|&r| {
                        cfg.node(r).kind != NodeKind::Return && !attribution.changes_count(r)
                    })
                })
        })
        .collect();
    Walker::new(cfg, 1, prunable, max_paths).run()
}

/// Every path with at most `loop_bound` iterations per loop entry.
pub fn enumerate_exhaustive(
    cfg: &Cfg,
    loop_bound: u32,
    max_paths: usize,
) -> Result<Vec<ControlFlowPath>, PathError> {
    if loop_bound == 0 {
        return Err(PathError::InvalidLoopBound);
    }
    Walker::new(cfg, loop_bound, vec![false; cfg.len()], max_paths).run()
}

struct Walker<'c> {
    cfg: &'c Cfg,
    bound: u32,
    prunable: Vec<bool>,
    max_paths: usize,
    /// Loop index keyed by header.
    header_loop: BTreeMap<NodeId, usize>,
    iterations: Vec<u32>,
    nodes: Vec<NodeId>,
    labels: Vec<EdgeLabel>,
    paths: Vec<ControlFlowPath>,
}

impl<'c> Walker<'c> {
    fn new(cfg: &'c Cfg, bound: u32, prunable: Vec<bool>, max_paths: usize) -> Self {
        let header_loop = cfg
            .loops()
            .iter()
            .enumerate()
            .map(|(i, l)| (l.header, i))
            .collect();
        Self {
            cfg,
            bound,
            prunable,
            max_paths,
            header_loop,
            iterations: vec![0; cfg.loops().len()],
            nodes: Vec::new(),
            labels: Vec::new(),
            paths: Vec::new(),
        }
    }

    fn run(mut self) -> Result<Vec<ControlFlowPath>, PathError> {
        self.nodes.push(self.cfg.entry());
        self.walk(self.cfg.entry())?;
        Ok(self.paths)
    }

    /// Applies loop bookkeeping for the edge `from -> to`. Returns the saved
    /// counters to restore afterwards, or `None` when the edge would exceed
    /// the loop bound.
    fn step(&mut self, from: NodeId, to: NodeId, label: EdgeLabel) -> Option<Vec<(usize, u32)>> {
        let mut saved = Vec::new();
        if label == EdgeLabel::LoopBody {
            if let Some(&li) = self.header_loop.get(&from) {
                if self.iterations[li] >= self.bound {
                    return None;
                }
                saved.push((li, self.iterations[li]));
                self.iterations[li] += 1;
            }
        }
        for (li, lp) in self.cfg.loops().iter().enumerate() {
            let from_outside = from != lp.header && !lp.in_body(from);
            if !from_outside {
                continue;
            }
            let reset = match lp.kind {
                LoopKind::DoWhile => (to == lp.body_entry).then_some(1),
                _ => (to == lp.header).then_some(0),
            };
            if let Some(value) = reset {
                saved.push((li, self.iterations[li]));
                self.iterations[li] = value;
            }
        }
        Some(saved)
    }

    fn walk(&mut self, at: NodeId) -> Result<bool, PathError> {
        if at == self.cfg.exit() {
            if self.paths.len() == self.max_paths {
                return Err(PathError::Explosion {
                    ceiling: self.max_paths,
                });
            }
            self.paths.push(ControlFlowPath {
                id: self.paths.len(),
                nodes: self.nodes.clone(),
                labels: self.labels.clone(),
                risky: None,
            });
            return Ok(true);
        }
        let prune = self.prunable[at.index()];
        let mut any = false;
        for &(next, label) in self.cfg.successors(at) {
            let Some(saved) = self.step(at, next, label) else {
                continue;
            };
            self.nodes.push(next);
            self.labels.push(label);
            let found = self.walk(next);
            self.nodes.pop();
            self.labels.pop();
            for (li, v) in saved.into_iter().rev() {
                self.iterations[li] = v;
            }
            any |= found?;
            // A pruned branch keeps the first successor that reaches the exit.
            if prune && any {
                break;
            }
        }
        Ok(any)
    }
}

/// Formats paths as line-interval lists such as `[160-185, 186, 187-190]`.
///
/// A path is cut into segments wherever the given path set diverges (a node
/// left along more than one edge) or re-joins (a node entered along more
/// than one edge); each segment shows the first and last line it covers.
pub struct PathRenderer<'c> {
    cfg: &'c Cfg,
    out_edges: BTreeMap<NodeId, BTreeSet<(NodeId, EdgeLabel)>>,
    in_edges: BTreeMap<NodeId, BTreeSet<(NodeId, EdgeLabel)>>,
}

impl<'c> PathRenderer<'c> {
    pub fn new(cfg: &'c Cfg, paths: &[ControlFlowPath]) -> Self {
        let mut out_edges: BTreeMap<_, BTreeSet<_>> = BTreeMap::new();
        let mut in_edges: BTreeMap<_, BTreeSet<_>> = BTreeMap::new();
        for p in paths {
            for (w, &l) in p.nodes.windows(2).zip(&p.labels) {
                out_edges.entry(w[0]).or_default().insert((w[1], l));
                in_edges.entry(w[1]).or_default().insert((w[0], l));
            }
        }
        Self {
            cfg,
            out_edges,
            in_edges,
        }
    }

    pub fn segments(&self, path: &ControlFlowPath) -> Vec<(u32, u32)> {
        let many = |m: &BTreeMap<NodeId, BTreeSet<(NodeId, EdgeLabel)>>, n: NodeId| {
            m.get(&n).is_some_and(|s| s.len() > 1)
        };
        let mut segments: Vec<(u32, u32)> = Vec::new();
        for (i, &n) in path.nodes.iter().enumerate() {
            let span = self.cfg.node(n).span;
            let cut = i == 0 || many(&self.out_edges, path.nodes[i - 1]) || many(&self.in_edges, n);
            match segments.last_mut() {
                Some(seg) if !cut => {
                    seg.0 = seg.0.min(span.start);
                    seg.1 = seg.1.max(span.end);
                }
                _ => segments.push((span.start, span.end)),
            }
        }
        segments
    }

    pub fn render(&self, path: &ControlFlowPath) -> String {
        let mut out = String::from("[");
        for (i, (a, b)) in self.segments(path).into_iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            if a == b {
                let _ = write!(out, "{a}");
            } else {
                let _ = write!(out, "{a}-{b}");
            }
        }
        out.push(']');
        out
    }
}

/// All paths rendered with one shared [`PathRenderer`].
pub fn render_paths(cfg: &Cfg, paths: &[ControlFlowPath]) -> Vec<String> {
    let r = PathRenderer::new(cfg, paths);
    paths.iter().map(|p| r.render(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::build_cfg;
    use crate::frontend::parse_method;
    use crate::intent::Intention;

    fn cfg_of(src: &str) -> Cfg {
        build_cfg(&parse_method(src, 1).unwrap()).unwrap()
    }

    fn set(items: &[Intention]) -> IntentionSet {
        items.iter().cloned().collect()
    }

    const DIAMOND: &str = "void m() {\n  if (x)\n    a();\n  else\n    b();\n  c();\n}";

    #[test]
    fn straight_line_has_one_path() {
        let cfg = cfg_of("void m() {\n  a();\n  b();\n}");
        assert_eq!(enumerate_exhaustive(&cfg, 1, 10).unwrap().len(), 1);
        assert_eq!(enumerate(&cfg, &IntentionSet::new(), 10).unwrap().len(), 1);
    }

    #[test]
    fn diamond_has_two_paths_and_prunes_to_one() {
        let cfg = cfg_of(DIAMOND);
        let all = enumerate_exhaustive(&cfg, 1, 10).unwrap();
        assert_eq!(all.len(), 2);
        let pruned = enumerate(&cfg, &IntentionSet::new(), 10).unwrap();
        assert_eq!(pruned.len(), 1);
        assert_eq!(pruned[0].lines(&cfg), [2, 3, 6]);
    }

    #[test]
    fn resource_touching_branch_is_kept() {
        let cfg = cfg_of(DIAMOND);
        let kept = enumerate(&cfg, &set(&[Intention::release("r", 5).unwrap()]), 10).unwrap();
        assert_eq!(kept.len(), 2);
        // Validate alone does not keep branches alive.
        let pruned = enumerate(&cfg, &set(&[Intention::validate("r", 2).unwrap()]), 10).unwrap();
        assert_eq!(pruned.len(), 1);
    }

    #[test]
    fn returning_branch_is_kept() {
        let cfg = cfg_of("void m() {\n  if (x)\n    return;\n  c();\n}");
        assert_eq!(enumerate(&cfg, &IntentionSet::new(), 10).unwrap().len(), 2);
    }

    #[test]
    fn double_diamonds_have_four_paths() {
        let sequential = cfg_of("void m() {\n  if (x) a(); else b();\n  if (y) c(); else d();\n}");
        assert_eq!(enumerate_exhaustive(&sequential, 1, 10).unwrap().len(), 4);
        let nested = cfg_of(
            "void m() {\n  if (x) {\n    if (y) a(); else b();\n  } else {\n    if (z) c(); else d();\n  }\n}",
        );
        assert_eq!(enumerate_exhaustive(&nested, 1, 10).unwrap().len(), 4);
    }

    #[test]
    fn while_loop_yields_skip_and_single_iteration() {
        let cfg = cfg_of("void m() {\n  while (x) {\n    r.close();\n  }\n}");
        let intents = set(&[Intention::release("r", 3).unwrap()]);
        let paths = enumerate(&cfg, &intents, 10).unwrap();
        let lines: Vec<_> = paths.iter().map(|p| p.lines(&cfg)).collect();
        assert_eq!(lines, [vec![2, 3, 2], vec![2]]);
        for p in &paths {
            assert!(p.is_well_formed(&cfg));
            for n in p.nodes() {
                assert!(p.nodes().iter().filter(|m| *m == n).count() <= 2);
            }
        }
    }

    #[test]
    fn do_while_runs_its_body_once() {
        let cfg = cfg_of("void m() {\n  do {\n    r.close();\n  } while (x);\n}");
        let intents = set(&[Intention::release("r", 3).unwrap()]);
        let paths = enumerate(&cfg, &intents, 10).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].lines(&cfg), [3, 4]);
        let two = enumerate_exhaustive(&cfg, 2, 10).unwrap();
        assert_eq!(two.len(), 2);
    }

    #[test]
    fn loop_bound_counts_per_entry() {
        let cfg = cfg_of("void m() {\n  while (x) {\n    while (y) {\n      a();\n    }\n  }\n}");
        // Outer skip; outer once with inner skip; outer once with inner once.
        assert_eq!(enumerate_exhaustive(&cfg, 1, 100).unwrap().len(), 3);
        assert_eq!(
            enumerate_exhaustive(&cfg, 0, 100),
            Err(PathError::InvalidLoopBound)
        );
    }

    #[test]
    fn ceiling_is_enforced() {
        let src = "void m() {\n  if (a) x();\n  if (b) x();\n  if (c) x();\n}";
        let cfg = cfg_of(src);
        assert_eq!(enumerate_exhaustive(&cfg, 1, 8).unwrap().len(), 8);
        assert_eq!(
            enumerate_exhaustive(&cfg, 1, 7),
            Err(PathError::Explosion { ceiling: 7 })
        );
    }

    #[test]
    fn pruned_branch_skips_dead_ends() {
        // The first branch loops back into a header whose only way out is the
        // break in the second branch.
        let src = "void m() {\n  while (true) {\n    if (x) {\n      a();\n    } else {\n      break;\n    }\n  }\n}";
        let cfg = cfg_of(src);
        let paths = enumerate(&cfg, &IntentionSet::new(), 10).unwrap();
        assert_eq!(paths.len(), 1);
    }

    #[test]
    fn renders_divergence_and_joins() {
        let cfg = cfg_of(DIAMOND);
        let paths = enumerate_exhaustive(&cfg, 1, 10).unwrap();
        assert_eq!(
            render_paths(&cfg, &paths),
            ["[1-2, 3, 6-7]", "[1-2, 5, 6-7]"]
        );
        let single = enumerate(&cfg, &IntentionSet::new(), 10).unwrap();
        assert_eq!(render_paths(&cfg, &single), ["[1-7]"]);
    }
}
