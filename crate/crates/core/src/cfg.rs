//! Statement-level control-flow graphs for Java methods.
//!
//! Nodes are statements or branch headers; edges carry the role of the branch
//! they implement. `finally` blocks are copied onto every route that leaves
//! their `try` (normal completion, `return`, `throw`, `break`, `continue`), so
//! each copy sits on exactly the paths that execute it. Exceptions are not
//! modeled beyond a `Catch` edge from the try entry to each catch body.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use petgraph::algo::dominators;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::Serialize;
use tree_sitter::Node;

use crate::frontend::{MethodSnippet, SourceError};
use crate::intent::{Intention, IntentionKind, IntentionSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Inclusive range of file lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LineSpan {
    pub start: u32,
    pub end: u32,
}

impl LineSpan {
    pub fn new(start: u32, end: u32) -> Self {
        Self {
            start,
            end: end.max(start),
        }
    }

    pub fn line(line: u32) -> Self {
        Self::new(line, line)
    }

    pub fn contains(&self, line: u32) -> bool {
        (self.start..=self.end).contains(&line)
    }
}

impl fmt::Display for LineSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.start == self.end {
            write!(f, "{}", self.start)
        } else {
            write!(f, "{}-{}", self.start, self.end)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Entry,
    Exit,
    Statement,
    IfBranch,
    SwitchBranch,
    LoopHeader,
    /// Head of a `try` with catch clauses; its `Catch` edges lead to the handlers.
    TryEntry,
    /// Plain statement inside a `finally` block.
    FinallyMember,
    /// `return` or `throw`.
    Return,
}

impl NodeKind {
    pub fn is_branching(self) -> bool {
        matches!(
            self,
            Self::IfBranch | Self::SwitchBranch | Self::LoopHeader | Self::TryEntry
        )
    }

    fn as_str(self) -> &'static str {
        match self {
            Self::Entry => "entry",
            Self::Exit => "exit",
            Self::Statement => "statement",
            Self::IfBranch => "if-branch",
            Self::SwitchBranch => "switch-branch",
            Self::LoopHeader => "loop-header",
            Self::TryEntry => "try-entry",
            Self::FinallyMember => "finally-block-member",
            Self::Return => "return",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeLabel {
    Seq,
    True,
    False,
    Case,
    LoopBody,
    LoopExit,
    Catch,
}

impl EdgeLabel {
    fn as_str(self) -> &'static str {
        match self {
            Self::Seq => "seq",
            Self::True => "true",
            Self::False => "false",
            Self::Case => "case",
            Self::LoopBody => "loop-body",
            Self::LoopExit => "loop-exit",
            Self::Catch => "catch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoopKind {
    While,
    For,
    ForEach,
    DoWhile,
}

#[derive(Debug, Clone, Serialize)]
pub struct LoopInfo {
    pub header: NodeId,
    pub kind: LoopKind,
    /// First node of the body; for an empty do-while body this is the header.
    pub body_entry: NodeId,
    /// Node ids created for the body form the half-open range `body.0..body.1`.
    pub body: (u32, u32),
}

impl LoopInfo {
    pub fn in_body(&self, id: NodeId) -> bool {
        (self.body.0..self.body.1).contains(&id.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CfgNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub span: LineSpan,
    /// First line of source text, for dumps.
    pub label: String,
    /// Start byte of the syntax node this came from; copies of one `finally`
    /// statement share it.
    pub origin: usize,
    pub in_finally: bool,
}

#[derive(Debug, Clone)]
pub struct Cfg {
    nodes: Vec<CfgNode>,
    succs: Vec<Vec<(NodeId, EdgeLabel)>>,
    preds: Vec<Vec<(NodeId, EdgeLabel)>>,
    entry: NodeId,
    exit: NodeId,
    loops: Vec<LoopInfo>,
    ipdom: Vec<Option<NodeId>>,
}

impl Cfg {
    pub fn entry(&self) -> NodeId {
        self.entry
    }

    pub fn exit(&self) -> NodeId {
        self.exit
    }

    pub fn nodes(&self) -> &[CfgNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &CfgNode {
        &self.nodes[id.index()]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn successors(&self, id: NodeId) -> &[(NodeId, EdgeLabel)] {
        &self.succs[id.index()]
    }

    pub fn predecessors(&self, id: NodeId) -> &[(NodeId, EdgeLabel)] {
        &self.preds[id.index()]
    }

    pub fn edge_count(&self) -> usize {
        self.succs.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, EdgeLabel)> + '_ {
        self.succs
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().map(move |&(d, l)| (NodeId(i as u32), d, l)))
    }

    pub fn loops(&self) -> &[LoopInfo] {
        &self.loops
    }

    pub fn loop_with_header(&self, id: NodeId) -> Option<&LoopInfo> {
        self.loops.iter().find(|l| l.header == id)
    }

    pub fn if_nodes(&self) -> impl Iterator<Item = &CfgNode> + '_ {
        self.nodes.iter().filter(|n| n.kind == NodeKind::IfBranch)
    }

    /// Immediate post-dominator (the exit has none).
    pub fn ipdom(&self, id: NodeId) -> Option<NodeId> {
        self.ipdom[id.index()]
    }

    /// Nodes that may execute after taking the `succ_index`-th edge out of
    /// `branch` and before control reaches the branch's immediate
    /// post-dominator (or returns to `branch` itself).
    pub fn branch_region(&self, branch: NodeId, succ_index: usize) -> BTreeSet<NodeId> {
        let stop = self.ipdom(branch);
        let mut seen = BTreeSet::new();
        let (start, _) = self.succs[branch.index()][succ_index];
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            if Some(n) == stop || n == branch || !seen.insert(n) {
                continue;
            }
            stack.extend(self.successors(n).iter().map(|&(d, _)| d));
        }
        seen
    }

    /// Structural checks: single entry/exit, every node on an entry→exit
    /// walk, and the out-degree rules for if and statement nodes.
    pub fn validate(&self) -> Result<(), String> {
        let count = |k: NodeKind| self.nodes.iter().filter(|n| n.kind == k).count();
        if count(NodeKind::Entry) != 1 || count(NodeKind::Exit) != 1 {
            return Err("expected exactly one entry and one exit".into());
        }
        let forward = self.reach(self.entry, |id| self.successors(id));
        let backward = self.reach(self.exit, |id| self.predecessors(id));
        for node in &self.nodes {
            if !forward.contains(&node.id) {
                return Err(format!("{} unreachable from entry", node.id));
            }
            if !backward.contains(&node.id) {
                return Err(format!("{} cannot reach exit", node.id));
            }
            let out = self.successors(node.id);
            match node.kind {
                NodeKind::IfBranch => {
                    let mut labels: Vec<_> = out.iter().map(|&(_, l)| l).collect();
                    labels.sort();
                    if labels != [EdgeLabel::True, EdgeLabel::False] {
                        return Err(format!("{} is an if without true/false edges", node.id));
                    }
                }
                NodeKind::Statement
                | NodeKind::FinallyMember
                | NodeKind::Return
                | NodeKind::Entry
                    if out.len() != 1 =>
                {
                    return Err(format!("{} has {} successors", node.id, out.len()));
                }
                NodeKind::Exit if !out.is_empty() => {
                    return Err("exit has successors".into());
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn reach<'a>(
        &'a self,
        from: NodeId,
        next: impl Fn(NodeId) -> &'a [(NodeId, EdgeLabel)],
    ) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![from];
        while let Some(n) = stack.pop() {
            if seen.insert(n) {
                stack.extend(next(n).iter().map(|&(d, _)| d));
            }
        }
        seen
    }

    /// Text dump: one `node` line per node, then one `edge` line per edge.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let _ = writeln!(
                out,
                "node {} {} {}{} {}",
                n.id.0,
                n.kind.as_str(),
                n.span,
                if n.in_finally { " finally" } else { "" },
                n.label
            );
        }
        for (src, dst, label) in self.edges() {
            let _ = writeln!(out, "edge {} -> {} {}", src.0, dst.0, label.as_str());
        }
        out
    }

    /// Assigns each intention to the nodes it describes.
    ///
    /// Acquire and Release attach to the innermost statement whose span holds
    /// the line, preferring plain statements over branch headers and the
    /// earliest such statement in source order; every `finally` copy of that
    /// statement receives it. Validate attaches to if-branch nodes whose
    /// condition spans the line, or failing that, whose condition ends on the
    /// line just before it.
    pub fn attribute(&self, intents: &IntentionSet) -> Attribution {
        let mut per_node: Vec<Vec<Intention>> = vec![Vec::new(); self.nodes.len()];
        for intent in intents {
            let line = intent.lineno();
            let targets: Vec<NodeId> = match intent.kind() {
                IntentionKind::Validate => {
                    let exact: Vec<_> = self
                        .if_nodes()
                        .filter(|n| n.span.contains(line))
                        .map(|n| n.id)
                        .collect();
                    if exact.is_empty() {
                        self.if_nodes()
                            .filter(|n| n.span.end + 1 == line)
                            .map(|n| n.id)
                            .collect()
                    } else {
                        exact
                    }
                }
                IntentionKind::Acquire | IntentionKind::Release => {
                    let best = self
                        .nodes
                        .iter()
                        .filter(|n| {
                            !matches!(n.kind, NodeKind::Entry | NodeKind::Exit)
                                && n.span.contains(line)
                        })
                        .min_by_key(|n| (n.kind.is_branching(), n.origin))
                        .map(|n| n.origin);
                    match best {
                        Some(origin) => self
                            .nodes
                            .iter()
                            .filter(|n| {
                                n.origin == origin
                                    && !matches!(n.kind, NodeKind::Entry | NodeKind::Exit)
                                    && n.span.contains(line)
                            })
                            .map(|n| n.id)
                            .collect(),
                        None => Vec::new(),
                    }
                }
            };
            for t in targets {
                per_node[t.index()].push(intent.clone());
            }
        }
        Attribution { per_node }
    }
}

/// Intentions attached to CFG nodes; see [`Cfg::attribute`].
#[derive(Debug, Clone)]
pub struct Attribution {
    per_node: Vec<Vec<Intention>>,
}

impl Attribution {
    pub fn at(&self, id: NodeId) -> &[Intention] {
        &self.per_node[id.index()]
    }

    pub fn has(&self, id: NodeId, kind: IntentionKind, var: &str) -> bool {
        self.at(id)
            .iter()
            .any(|i| i.kind() == kind && i.var() == var)
    }

    /// True when the node acquires or releases any resource.
    pub fn changes_count(&self, id: NodeId) -> bool {
        self.at(id).iter().any(|i| i.kind().is_count_changing())
    }
}

type Frontier = Vec<(NodeId, EdgeLabel)>;

enum ScopeKind {
    Loop,
    Switch,
    Labeled,
}

struct JumpScope {
    kind: ScopeKind,
    label: Option<String>,
    breaks: Frontier,
    continues: Frontier,
    /// Number of enclosing finally scopes when this scope opened.
    finally_depth: usize,
}

struct FinallyScope<'t> {
    block: Node<'t>,
}

struct Builder<'s> {
    snip: &'s MethodSnippet,
    nodes: Vec<CfgNode>,
    succs: Vec<Vec<(NodeId, EdgeLabel)>>,
    preds: Vec<Vec<(NodeId, EdgeLabel)>>,
    scopes: Vec<JumpScope>,
    finally: Vec<FinallyScope<'s>>,
    returns: Frontier,
    loops: Vec<LoopInfo>,
    finally_depth: usize,
    pending_label: Option<String>,
}

const CONTROL_KINDS: &[&str] = &[
    "if_statement",
    "while_statement",
    "for_statement",
    "enhanced_for_statement",
    "do_statement",
    "switch_expression",
    "try_statement",
    "try_with_resources_statement",
    "return_statement",
    "throw_statement",
    "break_statement",
    "continue_statement",
    "yield_statement",
];

/// Builds the control-flow graph of a parsed method.
pub fn build_cfg(snippet: &MethodSnippet) -> Result<Cfg, SourceError> {
    let body = snippet.body().ok_or(SourceError::NotAMethod {
        line: snippet.first_line(),
    })?;
    let mut b = Builder {
        snip: snippet,
        nodes: Vec::new(),
        succs: Vec::new(),
        preds: Vec::new(),
        scopes: Vec::new(),
        finally: Vec::new(),
        returns: Vec::new(),
        loops: Vec::new(),
        finally_depth: 0,
        pending_label: None,
    };
    let entry = b.add(
        NodeKind::Entry,
        LineSpan::line(snippet.first_line()),
        "entry".into(),
        0,
        &[],
    );
    let out = b.stmt(body, vec![(entry, EdgeLabel::Seq)])?;
    let mut to_exit = out;
    to_exit.append(&mut b.returns);
    let exit = b.add(
        NodeKind::Exit,
        LineSpan::line(snippet.last_line()),
        "exit".into(),
        usize::MAX,
        &to_exit,
    );
    let ipdom = post_dominators(&b.succs, exit);
    Ok(Cfg {
        nodes: b.nodes,
        succs: b.succs,
        preds: b.preds,
        entry,
        exit,
        loops: b.loops,
        ipdom,
    })
}

fn post_dominators(succs: &[Vec<(NodeId, EdgeLabel)>], exit: NodeId) -> Vec<Option<NodeId>> {
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(succs.len(), 0);
    for _ in 0..succs.len() {
        g.add_node(());
    }
    for (i, out) in succs.iter().enumerate() {
        for &(d, _) in out {
            g.update_edge(NodeIndex::new(d.index()), NodeIndex::new(i), ());
        }
    }
    let doms = dominators::simple_fast(&g, NodeIndex::new(exit.index()));
    (0..succs.len())
        .map(|i| {
            doms.immediate_dominator(NodeIndex::new(i))
                .map(|d| NodeId(d.index() as u32))
        })
        .collect()
}

impl<'s> Builder<'s> {
    fn add(
        &mut self,
        kind: NodeKind,
        span: LineSpan,
        label: String,
        origin: usize,
        frontier: &[(NodeId, EdgeLabel)],
    ) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        let kind = if kind == NodeKind::Statement && self.finally_depth > 0 {
            NodeKind::FinallyMember
        } else {
            kind
        };
        self.nodes.push(CfgNode {
            id,
            kind,
            span,
            label,
            origin,
            in_finally: self.finally_depth > 0,
        });
        self.succs.push(Vec::new());
        self.preds.push(Vec::new());
        self.connect(frontier, id);
        id
    }

    fn connect(&mut self, frontier: &[(NodeId, EdgeLabel)], to: NodeId) {
        for &(from, label) in frontier {
            if self.succs[from.index()].contains(&(to, label)) {
                continue;
            }
            // Successors stay ordered by label; equal labels keep source order.
            let out = &mut self.succs[from.index()];
            let at = out
                .iter()
                .position(|&(_, l)| l > label)
                .unwrap_or(out.len());
            out.insert(at, (to, label));
            self.preds[to.index()].push((from, label));
        }
    }

    fn next_id(&self) -> u32 {
        self.nodes.len() as u32
    }

    fn span(&self, from: Node<'_>, to: Node<'_>) -> LineSpan {
        LineSpan::new(self.snip.line_of(from), self.snip.end_line_of(to))
    }

    fn label(&self, node: Node<'_>) -> String {
        let text = self.snip.text(node);
        let first = text.lines().next().unwrap_or_default().trim();
        first.chars().take(60).collect()
    }

    fn unsupported(&self, node: Node<'_>, construct: &str) -> SourceError {
        SourceError::Unsupported {
            construct: construct.to_string(),
            line: self.snip.line_of(node),
        }
    }

    /// Rejects lambda bodies that contain their own control flow.
    fn check_opaque(&self, node: Node<'_>) -> Result<(), SourceError> {
        let mut bad = None;
        crate::frontend::visit(node, &mut |n| {
            if bad.is_some() || n.kind() != "lambda_expression" {
                return;
            }
            if let Some(body) = n.child_by_field_name("body") {
                if body.kind() == "block" {
                    crate::frontend::visit(body, &mut |inner| {
                        if bad.is_none() && CONTROL_KINDS.contains(&inner.kind()) {
                            bad = Some(inner);
                        }
                    });
                }
            }
        });
        match bad {
            Some(n) => Err(self.unsupported(n, "lambda body with control flow")),
            None => Ok(()),
        }
    }

    fn simple(&mut self, node: Node<'_>, frontier: Frontier) -> Result<Frontier, SourceError> {
        self.check_opaque(node)?;
        let id = self.add(
            NodeKind::Statement,
            self.span(node, node),
            self.label(node),
            node.start_byte(),
            &frontier,
        );
        Ok(vec![(id, EdgeLabel::Seq)])
    }

    /// Span from `node`'s first line through the end of `header_end`.
    fn header(
        &mut self,
        kind: NodeKind,
        node: Node<'_>,
        header_end: Node<'_>,
        frontier: &[(NodeId, EdgeLabel)],
    ) -> Result<NodeId, SourceError> {
        self.check_opaque(header_end)?;
        Ok(self.add(
            kind,
            self.span(node, header_end),
            self.label(node),
            node.start_byte(),
            frontier,
        ))
    }

    fn stmt(&mut self, node: Node<'s>, frontier: Frontier) -> Result<Frontier, SourceError> {
        if frontier.is_empty() {
            // Unreachable code is dropped.
            return Ok(frontier);
        }
        if node.is_extra() {
            return Ok(frontier);
        }
        let label = self.pending_label.take();
        match node.kind() {
            "block" | "constructor_body" => {
                let mut cursor = node.walk();
                let children: Vec<_> = node.named_children(&mut cursor).collect();
                let mut cur = frontier;
                for child in children {
                    cur = self.stmt(child, cur)?;
                }
                Ok(cur)
            }
            "expression_statement"
            | "local_variable_declaration"
            | "assert_statement"
            | "explicit_constructor_invocation" => self.simple(node, frontier),
            "class_declaration"
            | "interface_declaration"
            | "enum_declaration"
            | "record_declaration"
            | "local_class_declaration"
            | ";" => Ok(frontier),
            "if_statement" => self.if_stmt(node, frontier),
            "while_statement" => self.while_stmt(node, frontier, label),
            "for_statement" => self.for_stmt(node, frontier, label),
            "enhanced_for_statement" => self.foreach_stmt(node, frontier, label),
            "do_statement" => self.do_stmt(node, frontier, label),
            "switch_expression" => self.switch_stmt(node, frontier, label),
            "try_statement" | "try_with_resources_statement" => self.try_stmt(node, frontier),
            "return_statement" | "throw_statement" => {
                self.check_opaque(node)?;
                let id = self.add(
                    NodeKind::Return,
                    self.span(node, node),
                    self.label(node),
                    node.start_byte(),
                    &frontier,
                );
                let routed = self.route_through_finally(vec![(id, EdgeLabel::Seq)], 0)?;
                self.returns.extend(routed);
                Ok(Vec::new())
            }
            "break_statement" => {
                let target = self.jump_target(node, false)?;
                let depth = self.scopes[target].finally_depth;
                let routed = self.route_through_finally(frontier, depth)?;
                self.scopes[target].breaks.extend(routed);
                Ok(Vec::new())
            }
            "continue_statement" => {
                let target = self.jump_target(node, true)?;
                let depth = self.scopes[target].finally_depth;
                let routed = self.route_through_finally(frontier, depth)?;
                self.scopes[target].continues.extend(routed);
                Ok(Vec::new())
            }
            "yield_statement" => {
                let out = self.simple(node, frontier)?;
                let target = self
                    .scopes
                    .iter()
                    .rposition(|s| matches!(s.kind, ScopeKind::Switch))
                    .ok_or_else(|| self.unsupported(node, "yield outside switch"))?;
                let depth = self.scopes[target].finally_depth;
                let routed = self.route_through_finally(out, depth)?;
                self.scopes[target].breaks.extend(routed);
                Ok(Vec::new())
            }
            "labeled_statement" => {
                let mut cursor = node.walk();
                let children: Vec<_> = node.named_children(&mut cursor).collect();
                let name = children
                    .iter()
                    .find(|c| c.kind() == "identifier")
                    .map(|c| self.snip.text(*c).to_string());
                let inner = children
                    .iter()
                    .find(|c| c.kind() != "identifier" && !c.is_extra())
                    .copied();
                let Some(inner) = inner else {
                    return Ok(frontier);
                };
                if matches!(
                    inner.kind(),
                    "while_statement" | "for_statement" | "enhanced_for_statement" | "do_statement"
                ) {
                    self.pending_label = name;
                    self.stmt(inner, frontier)
                } else {
                    self.open_scope(ScopeKind::Labeled, name);
                    let mut out = self.stmt(inner, frontier)?;
                    let scope = self.scopes.pop().expect("scope pushed above");
                    out.extend(scope.breaks);
                    Ok(out)
                }
            }
            "synchronized_statement" => {
                let body = node
                    .child_by_field_name("body")
                    .ok_or_else(|| self.unsupported(node, "synchronized without body"))?;
                let lock = node.named_child(0).unwrap_or(node);
                let id = self.header(NodeKind::Statement, node, lock, &frontier)?;
                self.stmt(body, vec![(id, EdgeLabel::Seq)])
            }
            other => Err(self.unsupported(node, other)),
        }
    }

    fn open_scope(&mut self, kind: ScopeKind, label: Option<String>) {
        self.scopes.push(JumpScope {
            kind,
            label,
            breaks: Vec::new(),
            continues: Vec::new(),
            finally_depth: self.finally.len(),
        });
    }

    fn jump_target(&self, node: Node<'_>, is_continue: bool) -> Result<usize, SourceError> {
        let mut cursor = node.walk();
        let label = node
            .named_children(&mut cursor)
            .find(|c| c.kind() == "identifier")
            .map(|c| self.snip.text(c).to_string());
        let found = match &label {
            Some(name) => self
                .scopes
                .iter()
                .rposition(|s| s.label.as_deref() == Some(name.as_str())),
            None if is_continue => self
                .scopes
                .iter()
                .rposition(|s| matches!(s.kind, ScopeKind::Loop)),
            None => self
                .scopes
                .iter()
                .rposition(|s| matches!(s.kind, ScopeKind::Loop | ScopeKind::Switch)),
        };
        match found {
            Some(i) if !is_continue || matches!(self.scopes[i].kind, ScopeKind::Loop) => Ok(i),
            _ => Err(self.unsupported(
                node,
                if is_continue {
                    "continue without enclosing loop"
                } else {
                    "break without target"
                },
            )),
        }
    }

    /// Threads `frontier` through copies of every finally block opened after
    /// `depth`, innermost first.
    fn route_through_finally(
        &mut self,
        mut frontier: Frontier,
        depth: usize,
    ) -> Result<Frontier, SourceError> {
        for level in (depth..self.finally.len()).rev() {
            if frontier.is_empty() {
                break;
            }
            frontier = self.finally_copy(level, frontier)?;
        }
        Ok(frontier)
    }

    /// Builds one copy of the finally block at `level`, with only the finally
    /// scopes outside it in effect.
    fn finally_copy(&mut self, level: usize, frontier: Frontier) -> Result<Frontier, SourceError> {
        let block = self.finally[level].block;
        let saved = self.finally.split_off(level);
        let saved_returns = std::mem::take(&mut self.returns);
        self.finally_depth += 1;
        let result = self.stmt(block, frontier);
        self.finally_depth -= 1;
        let inner_returns = std::mem::replace(&mut self.returns, saved_returns);
        self.returns.extend(inner_returns);
        self.finally.extend(saved);
        result
    }

    fn if_stmt(&mut self, node: Node<'s>, frontier: Frontier) -> Result<Frontier, SourceError> {
        let cond = node
            .child_by_field_name("condition")
            .ok_or_else(|| self.unsupported(node, "if without condition"))?;
        let h = self.header(NodeKind::IfBranch, node, cond, &frontier)?;
        let mut out = match node.child_by_field_name("consequence") {
            Some(c) => self.stmt(c, vec![(h, EdgeLabel::True)])?,
            None => vec![(h, EdgeLabel::True)],
        };
        match node.child_by_field_name("alternative") {
            Some(alt) => out.extend(self.stmt(alt, vec![(h, EdgeLabel::False)])?),
            None => out.push((h, EdgeLabel::False)),
        }
        Ok(out)
    }

    fn loop_common(
        &mut self,
        kind: LoopKind,
        h: NodeId,
        body: Option<Node<'s>>,
        always_true: bool,
        label: Option<String>,
    ) -> Result<Frontier, SourceError> {
        self.open_scope(ScopeKind::Loop, label);
        let start = self.next_id();
        let mut body_out = match body {
            Some(b) => self.stmt(b, vec![(h, EdgeLabel::LoopBody)])?,
            None => vec![(h, EdgeLabel::LoopBody)],
        };
        let end = self.next_id();
        let scope = self.scopes.pop().expect("loop scope pushed above");
        body_out.extend(scope.continues);
        self.connect(&body_out, h);
        let body_entry = if end > start { NodeId(start) } else { h };
        self.loops.push(LoopInfo {
            header: h,
            kind,
            body_entry,
            body: (start, end),
        });
        let mut out = scope.breaks;
        if !(always_true && !out.is_empty()) {
            out.push((h, EdgeLabel::LoopExit));
        }
        Ok(out)
    }

    fn while_stmt(
        &mut self,
        node: Node<'s>,
        frontier: Frontier,
        label: Option<String>,
    ) -> Result<Frontier, SourceError> {
        let cond = node
            .child_by_field_name("condition")
            .ok_or_else(|| self.unsupported(node, "while without condition"))?;
        let h = self.header(NodeKind::LoopHeader, node, cond, &frontier)?;
        let always_true = is_true_literal(self.snip.text(cond));
        self.loop_common(
            LoopKind::While,
            h,
            node.child_by_field_name("body"),
            always_true,
            label,
        )
    }

    fn for_stmt(
        &mut self,
        node: Node<'s>,
        mut frontier: Frontier,
        label: Option<String>,
    ) -> Result<Frontier, SourceError> {
        let mut cursor = node.walk();
        let inits: Vec<_> = node.children_by_field_name("init", &mut cursor).collect();
        for init in inits {
            frontier = self.simple(init, frontier)?;
        }
        let body = node.child_by_field_name("body");
        let header_end = close_paren_before(node, body).unwrap_or(node);
        let h = self.header(NodeKind::LoopHeader, node, header_end, &frontier)?;
        let always_true = node
            .child_by_field_name("condition")
            .is_none_or(|c| is_true_literal(self.snip.text(c)));
        self.loop_common(LoopKind::For, h, body, always_true, label)
    }

    fn foreach_stmt(
        &mut self,
        node: Node<'s>,
        frontier: Frontier,
        label: Option<String>,
    ) -> Result<Frontier, SourceError> {
        let body = node.child_by_field_name("body");
        let header_end = close_paren_before(node, body).unwrap_or(node);
        let h = self.header(NodeKind::LoopHeader, node, header_end, &frontier)?;
        self.loop_common(LoopKind::ForEach, h, body, false, label)
    }

    fn do_stmt(
        &mut self,
        node: Node<'s>,
        frontier: Frontier,
        label: Option<String>,
    ) -> Result<Frontier, SourceError> {
        let cond = node
            .child_by_field_name("condition")
            .ok_or_else(|| self.unsupported(node, "do without condition"))?;
        self.open_scope(ScopeKind::Loop, label);
        let start = self.next_id();
        let mut body_out = match node.child_by_field_name("body") {
            Some(b) => self.stmt(b, frontier.clone())?,
            None => frontier.clone(),
        };
        let end = self.next_id();
        let scope = self.scopes.pop().expect("loop scope pushed above");
        body_out.extend(scope.continues);
        let mut out = scope.breaks;
        if body_out.is_empty() {
            // The body never completes normally, so the condition is dead.
            return Ok(out);
        }
        let while_kw = find_child(node, "while").unwrap_or(cond);
        self.check_opaque(cond)?;
        let h = self.add(
            NodeKind::LoopHeader,
            self.span(while_kw, cond),
            self.label(while_kw),
            node.start_byte(),
            &body_out,
        );
        let body_entry = if end > start { NodeId(start) } else { h };
        self.connect(&[(h, EdgeLabel::LoopBody)], body_entry);
        self.loops.push(LoopInfo {
            header: h,
            kind: LoopKind::DoWhile,
            body_entry,
            body: (start, end),
        });
        let always_true = is_true_literal(self.snip.text(cond));
        if !(always_true && !out.is_empty()) {
            out.push((h, EdgeLabel::LoopExit));
        }
        Ok(out)
    }

    fn switch_stmt(
        &mut self,
        node: Node<'s>,
        frontier: Frontier,
        label: Option<String>,
    ) -> Result<Frontier, SourceError> {
        let cond = node
            .child_by_field_name("condition")
            .ok_or_else(|| self.unsupported(node, "switch without selector"))?;
        let body = node
            .child_by_field_name("body")
            .ok_or_else(|| self.unsupported(node, "switch without body"))?;
        let h = self.header(NodeKind::SwitchBranch, node, cond, &frontier)?;
        self.open_scope(ScopeKind::Switch, label);
        let mut cursor = body.walk();
        let arms: Vec<_> = body
            .named_children(&mut cursor)
            .filter(|c| !c.is_extra())
            .collect();
        let mut has_default = false;
        let mut fallthrough: Frontier = Vec::new();
        let mut out: Frontier = Vec::new();
        for arm in arms {
            let mut c = arm.walk();
            let parts: Vec<_> = arm
                .named_children(&mut c)
                .filter(|p| !p.is_extra())
                .collect();
            let mut incoming = vec![(h, EdgeLabel::Case)];
            for p in parts.iter().filter(|p| p.kind() == "switch_label") {
                if self.snip.text(*p).trim_start().starts_with("default") {
                    has_default = true;
                }
            }
            let stmts: Vec<_> = parts
                .into_iter()
                .filter(|p| p.kind() != "switch_label")
                .collect();
            match arm.kind() {
                "switch_block_statement_group" => {
                    incoming.append(&mut fallthrough);
                    let mut cur = incoming;
                    for s in stmts {
                        cur = self.stmt(s, cur)?;
                    }
                    fallthrough = cur;
                }
                "switch_rule" => {
                    let mut cur = incoming;
                    for s in stmts {
                        cur = self.stmt(s, cur)?;
                    }
                    out.extend(cur);
                }
                other => return Err(self.unsupported(arm, other)),
            }
        }
        out.extend(fallthrough);
        let scope = self.scopes.pop().expect("switch scope pushed above");
        out.extend(scope.breaks);
        if !has_default {
            out.push((h, EdgeLabel::Case));
        }
        Ok(out)
    }

    fn try_stmt(&mut self, node: Node<'s>, frontier: Frontier) -> Result<Frontier, SourceError> {
        let body = node
            .child_by_field_name("body")
            .ok_or_else(|| self.unsupported(node, "try without body"))?;
        let resources = node.child_by_field_name("resources");
        let mut cursor = node.walk();
        let children: Vec<_> = node.named_children(&mut cursor).collect();
        let catches: Vec<_> = children
            .iter()
            .copied()
            .filter(|c| c.kind() == "catch_clause")
            .collect();
        let finally_block = children
            .iter()
            .find(|c| c.kind() == "finally_clause")
            .and_then(|f| {
                let mut c = f.walk();
                let block = f.named_children(&mut c).find(|b| b.kind() == "block");
                block
            });

        let try_kw = find_child(node, "try").unwrap_or(node);
        let head_end = resources.unwrap_or(try_kw);
        let entry = if !catches.is_empty() {
            Some(self.header(NodeKind::TryEntry, node, head_end, &frontier)?)
        } else if resources.is_some() {
            Some(self.header(NodeKind::Statement, node, head_end, &frontier)?)
        } else {
            None
        };

        if let Some(block) = finally_block {
            self.finally.push(FinallyScope { block });
        }
        let body_in = match entry {
            Some(e) => vec![(e, EdgeLabel::Seq)],
            None => frontier,
        };
        let mut normal = self.stmt(body, body_in)?;
        for catch in catches {
            let cbody = catch
                .child_by_field_name("body")
                .ok_or_else(|| self.unsupported(catch, "catch without body"))?;
            let e = entry.expect("try entry exists when catches exist");
            normal.extend(self.stmt(cbody, vec![(e, EdgeLabel::Catch)])?);
        }
        if finally_block.is_some() {
            let level = self.finally.len() - 1;
            let out = if normal.is_empty() {
                Vec::new()
            } else {
                self.finally_copy(level, normal)?
            };
            self.finally.pop();
            Ok(out)
        } else {
            Ok(normal)
        }
    }
}

fn is_true_literal(text: &str) -> bool {
    text.trim()
        .trim_start_matches('(')
        .trim_end_matches(')')
        .trim()
        == "true"
}

fn find_child<'t>(node: Node<'t>, kind: &str) -> Option<Node<'t>> {
    let mut cursor = node.walk();
    let found = node.children(&mut cursor).find(|c| c.kind() == kind);
    found
}

/// The `)` that closes a loop header, i.e. the last `)` before the body.
fn close_paren_before<'t>(node: Node<'t>, body: Option<Node<'t>>) -> Option<Node<'t>> {
    let limit = body.map_or(usize::MAX, |b| b.start_byte());
    let mut cursor = node.walk();
    let found = node
        .children(&mut cursor)
        .filter(|c| c.kind() == ")" && c.end_byte() <= limit)
        .last();
    found
}

/// Nodes grouped by the syntax node they came from, in source order.
pub fn nodes_by_origin(cfg: &Cfg) -> BTreeMap<usize, Vec<NodeId>> {
    let mut map: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
    for n in cfg.nodes() {
        map.entry(n.origin).or_default().push(n.id);
    }
    map
}
