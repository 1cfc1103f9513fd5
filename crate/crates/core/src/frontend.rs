//! Java method parsing.
//!
//! A [`MethodSnippet`] is the text of one method (or a lone body block)
//! together with its tree-sitter parse. Line numbers always refer to the
//! original file: a snippet whose first line sits at line 160 of its file
//! reports line 160 for its header.

use std::fmt;

use serde::Serialize;
use sha2::{Digest, Sha256};
use tree_sitter::{Node, Parser, Tree};

const WRAP_PREFIX: &str = "class __LeakscopeSnippet { ";
const WRAP_SUFFIX: &str = "\n}\n";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SourceError {
    #[error("line {line}: syntax error near `{near}`")]
    Syntax { line: u32, near: String },
    #[error("line {line}: expected a single method declaration or body block")]
    NotAMethod { line: u32 },
    #[error("line {line}: unsupported construct: {construct}")]
    Unsupported { construct: String, line: u32 },
    #[error("no such method: {0}")]
    NoSuchMethod(String),
}

impl SourceError {
    pub fn line(&self) -> Option<u32> {
        match self {
            Self::Syntax { line, .. }
            | Self::NotAMethod { line }
            | Self::Unsupported { line, .. } => Some(*line),
            Self::NoSuchMethod(_) => None,
        }
    }
}

/// A variable introduced in a try-with-resources header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeclaredResource {
    pub var: String,
    pub line: u32,
}

pub struct MethodSnippet {
    source: String,
    first_line: u32,
    wrapped: String,
    tree: Tree,
    name: Option<String>,
    declared_resources: Vec<DeclaredResource>,
}

impl fmt::Debug for MethodSnippet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MethodSnippet")
            .field("name", &self.name)
            .field("first_line", &self.first_line)
            .field("lines", &self.line_count())
            .field("declared_resources", &self.declared_resources)
            .finish()
    }
}

impl Clone for MethodSnippet {
    fn clone(&self) -> Self {
        Self {
            source: self.source.clone(),
            first_line: self.first_line,
            wrapped: self.wrapped.clone(),
            tree: self.tree.clone(),
            name: self.name.clone(),
            declared_resources: self.declared_resources.clone(),
        }
    }
}

fn java_parser() -> Parser {
    let mut parser = Parser::new();
    parser
        .set_language(&tree_sitter_java::LANGUAGE.into())
        .expect("bundled Java grammar matches the tree-sitter runtime");
    parser
}

fn first_error(root: Node<'_>) -> Option<Node<'_>> {
    if !root.has_error() {
        return None;
    }
    let mut cursor = root.walk();
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        if node.is_error() || node.is_missing() {
            return Some(node);
        }
        if node.has_error() {
            let children: Vec<_> = node.children(&mut cursor).collect();
            stack.extend(children.into_iter().rev());
        }
    }
    None
}

/// Parses one method declaration (or a bare `{ ... }` body) whose first line
/// is `first_line` in its file.
pub fn parse_method(source: &str, first_line: u32) -> Result<MethodSnippet, SourceError> {
    let first_line = first_line.max(1);
    let wrapped = format!("{WRAP_PREFIX}{source}{WRAP_SUFFIX}");
    let tree = java_parser()
        .parse(&wrapped, None)
        .expect("parser has a language and no timeout");
    let last_line = first_line + source.lines().count().saturating_sub(1) as u32;

    if let Some(bad) = first_error(tree.root_node()) {
        let line = (first_line + bad.start_position().row as u32).min(last_line);
        let near = if bad.is_missing() {
            format!("missing {}", bad.kind())
        } else {
            bad.utf8_text(wrapped.as_bytes())
                .unwrap_or_default()
                .lines()
                .next()
                .unwrap_or_default()
                .chars()
                .take(40)
                .collect()
        };
        return Err(SourceError::Syntax { line, near });
    }

    let mut snippet = MethodSnippet {
        source: source.to_string(),
        first_line,
        wrapped,
        tree,
        name: None,
        declared_resources: Vec::new(),
    };
    let member = snippet
        .member()
        .ok_or(SourceError::NotAMethod { line: first_line })?;
    snippet.name = member
        .child_by_field_name("name")
        .map(|n| snippet.text(n).to_string());
    snippet.declared_resources = collect_declared_resources(&snippet);
    Ok(snippet)
}

/// Every method and constructor with a body in a Java compilation unit,
/// in source order.
pub fn extract_methods(file_source: &str) -> Result<Vec<MethodSnippet>, SourceError> {
    let tree = java_parser()
        .parse(file_source, None)
        .expect("parser has a language and no timeout");
    if let Some(bad) = first_error(tree.root_node()) {
        return Err(SourceError::Syntax {
            line: bad.start_position().row as u32 + 1,
            near: if bad.is_missing() {
                format!("missing {}", bad.kind())
            } else {
                bad.kind().to_string()
            },
        });
    }
    let mut out = Vec::new();
    let mut stack = vec![tree.root_node()];
    let mut found = Vec::new();
    while let Some(node) = stack.pop() {
        if matches!(
            node.kind(),
            "method_declaration" | "constructor_declaration"
        ) && node.child_by_field_name("body").is_some()
        {
            found.push(node);
        }
        let mut cursor = node.walk();
        stack.extend(node.named_children(&mut cursor));
    }
    found.sort_by_key(|n| n.start_byte());
    for node in found {
        let text = &file_source[node.start_byte()..node.end_byte()];
        out.push(parse_method(text, node.start_position().row as u32 + 1)?);
    }
    Ok(out)
}

/// Picks methods by name, or by a line number that falls inside them.
pub fn select_methods(methods: Vec<MethodSnippet>, selector: Option<&str>) -> Vec<MethodSnippet> {
    let Some(sel) = selector else {
        return methods;
    };
    if let Ok(line) = sel.parse::<u32>() {
        methods
            .into_iter()
            .filter(|m| (m.first_line()..=m.last_line()).contains(&line))
            .collect()
    } else {
        methods
            .into_iter()
            .filter(|m| m.name() == Some(sel))
            .collect()
    }
}

impl MethodSnippet {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn first_line(&self) -> u32 {
        self.first_line
    }

    pub fn last_line(&self) -> u32 {
        self.first_line + self.line_count().saturating_sub(1)
    }

    pub fn line_count(&self) -> u32 {
        self.source.lines().count().max(1) as u32
    }

    /// Method name; `None` for a bare body block.
    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    /// `name@first_line`, used as a symbolic identifier.
    pub fn symbol(&self) -> String {
        format!("{}@{}", self.name().unwrap_or("<block>"), self.first_line)
    }

    pub fn declared_resources(&self) -> &[DeclaredResource] {
        &self.declared_resources
    }

    pub fn is_declared_resource(&self, var: &str) -> bool {
        let var = crate::intent::normalize_var(var);
        self.declared_resources.iter().any(|r| r.var == var)
    }

    /// Source lines prefixed with their file line numbers (`"160: ..."`).
    pub fn numbered_code(&self) -> String {
        let mut out = String::new();
        for (i, line) in self.source.lines().enumerate() {
            out.push_str(&format!("{}: {}\n", self.first_line + i as u32, line));
        }
        out
    }

    /// Hex SHA-256 of the numbered code; identical text at a different file
    /// position hashes differently.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.numbered_code().as_bytes()))
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    /// The method declaration (or initializer block) inside the wrapper class.
    pub fn member(&self) -> Option<Node<'_>> {
        let class = self.tree.root_node().named_child(0)?;
        let body = class.child_by_field_name("body")?;
        let mut cursor = body.walk();
        let members: Vec<_> = body
            .named_children(&mut cursor)
            .filter(|n| !n.is_extra())
            .collect();
        match members.as_slice() {
            [m] if matches!(m.kind(), "method_declaration" | "constructor_declaration") => {
                m.child_by_field_name("body").map(|_| *m)
            }
            [m] if m.kind() == "block" => Some(*m),
            _ => None,
        }
    }

    /// The statement block of the method.
    pub fn body(&self) -> Option<Node<'_>> {
        let member = self.member()?;
        if member.kind() == "block" {
            Some(member)
        } else {
            member.child_by_field_name("body")
        }
    }

    /// File line of a node's first row.
    pub fn line_of(&self, node: Node<'_>) -> u32 {
        self.first_line + node.start_position().row as u32
    }

    /// File line of a node's last row.
    pub fn end_line_of(&self, node: Node<'_>) -> u32 {
        self.first_line + node.end_position().row as u32
    }

    pub fn text(&self, node: Node<'_>) -> &str {
        node.utf8_text(self.wrapped.as_bytes()).unwrap_or_default()
    }

    /// Declared type of a local variable, parameter or resource named `var`.
    pub fn declared_type_of(&self, var: &str) -> Option<String> {
        let var = crate::intent::normalize_var(var);
        let member = self.member()?;
        let mut found = None;
        visit(member, &mut |node| {
            if found.is_some() {
                return;
            }
            match node.kind() {
                "local_variable_declaration" | "field_declaration" => {
                    let ty = node.child_by_field_name("type");
                    let mut cursor = node.walk();
                    for decl in node.children_by_field_name("declarator", &mut cursor) {
                        if decl
                            .child_by_field_name("name")
                            .is_some_and(|n| self.text(n) == var)
                        {
                            found = ty.map(|t| self.text(t).to_string());
                        }
                    }
                }
                "formal_parameter" | "resource" | "catch_formal_parameter"
                    if node
                        .child_by_field_name("name")
                        .is_some_and(|n| self.text(n) == var) =>
                {
                    found = node
                        .child_by_field_name("type")
                        .map(|t| self.text(t).to_string());
                }
                _ => {}
            }
        });
        found
    }

    /// Texts of every value assigned to `var` (declarator initializers and
    /// plain assignments), in source order.
    pub fn initializer_texts(&self, var: &str) -> Vec<String> {
        let var = crate::intent::normalize_var(var);
        let Some(member) = self.member() else {
            return Vec::new();
        };
        let mut out = Vec::new();
        visit(member, &mut |node| match node.kind() {
            "variable_declarator" | "resource" => {
                if node
                    .child_by_field_name("name")
                    .is_some_and(|n| self.text(n) == var)
                {
                    if let Some(v) = node.child_by_field_name("value") {
                        out.push(self.text(v).to_string());
                    }
                }
            }
            "assignment_expression" => {
                let lhs = node.child_by_field_name("left");
                if lhs.is_some_and(|l| crate::intent::normalize_var(self.text(l)) == var) {
                    if let Some(v) = node.child_by_field_name("right") {
                        out.push(self.text(v).to_string());
                    }
                }
            }
            _ => {}
        });
        out
    }
}

/// Pre-order walk over named nodes.
pub(crate) fn visit<'t>(root: Node<'t>, f: &mut dyn FnMut(Node<'t>)) {
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        f(node);
        let mut cursor = node.walk();
        let children: Vec<_> = node.named_children(&mut cursor).collect();
        stack.extend(children.into_iter().rev());
    }
}

fn collect_declared_resources(snippet: &MethodSnippet) -> Vec<DeclaredResource> {
    let Some(member) = snippet.member() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    visit(member, &mut |node| {
        if node.kind() != "resource" {
            return;
        }
        let var = match node.child_by_field_name("name") {
            Some(name) => snippet.text(name).to_string(),
            None => crate::intent::normalize_var(snippet.text(node)).to_string(),
        };
        out.push(DeclaredResource {
            var,
            line: snippet.line_of(node),
        });
    });
    out
}
