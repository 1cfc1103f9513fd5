//! Offline intention inference by syntactic pattern matching.
//!
//! The knowledge table lists resource types, calls that hand out a resource,
//! and methods that acquire, release or probe one. Matching runs over the
//! parse tree of the method, so results are deterministic.

use std::collections::BTreeSet;

use serde::Deserialize;
use tree_sitter::Node;

use crate::frontend::{visit, MethodSnippet};
use crate::intent::{Intention, IntentionKind, IntentionSet};

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnowledgeTable {
    /// Type-name suffixes whose construction acquires a resource.
    pub resource_type_suffixes: Vec<String>,
    /// Types matching a suffix that hold no system resource.
    pub ignored_types: Vec<String>,
    /// Calls returning a fresh resource. `Type.method` restricts the
    /// receiver; a bare name matches any receiver.
    pub acquiring_calls: Vec<String>,
    /// Methods that acquire their receiver (`lock.lock()`).
    pub acquiring_methods: Vec<String>,
    /// Methods that release their receiver (`f.close()`).
    pub releasing_methods: Vec<String>,
    /// Static helpers that release their first argument.
    pub releasing_functions: Vec<String>,
    /// Methods on the resource whose result tells whether it is usable.
    pub probing_methods: Vec<String>,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for KnowledgeTable {
    fn default() -> Self {
        Self {
            resource_type_suffixes: strings(&[
                "Stream",
                "Reader",
                "Writer",
                "Socket",
                "ServerSocket",
                "Scanner",
                "Channel",
                "RandomAccessFile",
                "ZipFile",
                "JarFile",
                "Formatter",
                "PrintStream",
            ]),
            ignored_types: strings(&[
                "ByteArrayInputStream",
                "ByteArrayOutputStream",
                "StringReader",
                "StringWriter",
                "CharArrayReader",
                "CharArrayWriter",
            ]),
            acquiring_calls: strings(&[
                "AndroidHttpClient.newInstance",
                "DriverManager.getConnection",
                "getConnection",
                "openConnection",
                "query",
                "rawQuery",
                "managedQuery",
                "getWritableDatabase",
                "getReadableDatabase",
                "openOrCreateDatabase",
                "openDatabase",
                "openFileInput",
                "openFileOutput",
                "openInputStream",
                "openOutputStream",
                "getInputStream",
                "getOutputStream",
                "Camera.open",
                "MediaPlayer.create",
                "VelocityTracker.obtain",
                "Parcel.obtain",
                "TypedArray.obtain",
                "obtainStyledAttributes",
                "newWakeLock",
                "createTempFile",
            ]),
            acquiring_methods: strings(&["lock", "lockInterruptibly", "tryLock", "acquire"]),
            releasing_methods: strings(&[
                "close",
                "unlock",
                "release",
                "recycle",
                "disconnect",
                "shutdown",
                "shutdownNow",
                "dispose",
                "abort",
            ]),
            releasing_functions: strings(&["closeQuietly", "closeSilently", "safeClose"]),
            probing_methods: strings(&["isOpen", "isClosed", "isHeld", "isConnected", "isLocked"]),
        }
    }
}

impl KnowledgeTable {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    fn is_resource_type(&self, ty: &str) -> bool {
        let base = simple_type_name(ty);
        !self.ignored_types.iter().any(|t| t == base)
            && self
                .resource_type_suffixes
                .iter()
                .any(|s| base.ends_with(s.as_str()))
    }

    fn is_acquiring_call(&self, receiver: Option<&str>, name: &str) -> bool {
        let receiver = receiver.map(|r| r.rsplit('.').next().unwrap_or(r));
        self.acquiring_calls
            .iter()
            .any(|entry| match entry.rsplit_once('.') {
                Some((ty, method)) => method == name && receiver == Some(ty),
                None => entry == name,
            })
    }
}

/// `java.io.FileInputStream<T>` → `FileInputStream`.
fn simple_type_name(ty: &str) -> &str {
    let ty = ty.split('<').next().unwrap_or(ty).trim();
    ty.rsplit('.').next().unwrap_or(ty)
}

/// A plain variable or `this.field` target.
fn variable_of(snippet: &MethodSnippet, node: Node<'_>) -> Option<String> {
    match node.kind() {
        "identifier" => Some(snippet.text(node).to_string()),
        "field_access" => {
            let object = node.child_by_field_name("object")?;
            let field = node.child_by_field_name("field")?;
            (object.kind() == "this").then(|| snippet.text(field).to_string())
        }
        "parenthesized_expression" => variable_of(snippet, node.named_child(0)?),
        _ => None,
    }
}

fn unwrap_value(node: Node<'_>) -> Node<'_> {
    match node.kind() {
        "cast_expression" => node.child_by_field_name("value").map_or(node, unwrap_value),
        "parenthesized_expression" => node.named_child(0).map_or(node, unwrap_value),
        _ => node,
    }
}

fn collapse(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

struct Matcher<'a> {
    snippet: &'a MethodSnippet,
    table: &'a KnowledgeTable,
    out: IntentionSet,
}

impl Matcher<'_> {
    fn push(&mut self, kind: IntentionKind, var: &str, node: Node<'_>) {
        let line = self.snippet.line_of(node);
        if let Ok(i) = Intention::new(kind, var, line) {
            self.out
                .insert(i.with_call_text(collapse(self.snippet.text(node))));
        }
    }

    fn acquiring_value(&self, value: Node<'_>) -> bool {
        let value = unwrap_value(value);
        match value.kind() {
            "object_creation_expression" => value
                .child_by_field_name("type")
                .is_some_and(|t| self.table.is_resource_type(self.snippet.text(t))),
            "method_invocation" => {
                let name = value
                    .child_by_field_name("name")
                    .map(|n| self.snippet.text(n))
                    .unwrap_or_default();
                let receiver = value
                    .child_by_field_name("object")
                    .map(|o| self.snippet.text(o));
                self.table.is_acquiring_call(receiver, name)
            }
            _ => false,
        }
    }

    fn binding(&mut self, target: Option<String>, value: Option<Node<'_>>) {
        if let (Some(var), Some(value)) = (target, value) {
            if self.acquiring_value(value) {
                self.push(IntentionKind::Acquire, &var, unwrap_value(value));
            }
        }
    }

    fn invocation(&mut self, node: Node<'_>) {
        let name = node
            .child_by_field_name("name")
            .map(|n| self.snippet.text(n).to_string())
            .unwrap_or_default();
        let receiver = node.child_by_field_name("object");
        let args = node.child_by_field_name("arguments");
        let arg_count = args.map_or(0, |a| a.named_child_count());
        if let Some(var) = receiver.and_then(|r| variable_of(self.snippet, r)) {
            if self.table.acquiring_methods.contains(&name) {
                self.push(IntentionKind::Acquire, &var, node);
            } else if self.table.releasing_methods.contains(&name) {
                self.push(IntentionKind::Release, &var, node);
            }
        }
        if self.table.releasing_functions.contains(&name) && arg_count >= 1 {
            let first = args.and_then(|a| a.named_child(0));
            if let Some(var) = first.and_then(|a| variable_of(self.snippet, a)) {
                self.push(IntentionKind::Release, &var, node);
            }
        }
    }

    fn scan(&mut self, member: Node<'_>) {
        visit(member, &mut |node| match node.kind() {
            "variable_declarator" => {
                let target = node
                    .child_by_field_name("name")
                    .map(|n| self.snippet.text(n).to_string());
                self.binding(target, node.child_by_field_name("value"));
            }
            "assignment_expression" => {
                let target = node
                    .child_by_field_name("left")
                    .and_then(|l| variable_of(self.snippet, l));
                self.binding(target, node.child_by_field_name("right"));
            }
            "method_invocation" => self.invocation(node),
            _ => {}
        });
    }

    /// Null checks and probe calls on known resources inside if conditions.
    fn scan_validations(&mut self, member: Node<'_>) {
        let resources: BTreeSet<String> = self.out.iter().map(|i| i.var().to_string()).collect();
        let mut found = Vec::new();
        visit(member, &mut |node| {
            if node.kind() != "if_statement" {
                return;
            }
            let Some(cond) = node.child_by_field_name("condition") else {
                return;
            };
            visit(cond, &mut |n| {
                if let Some(var) = self.probed_var(n) {
                    if resources.contains(&var) {
                        found.push((var, n));
                    }
                }
            });
        });
        for (var, n) in found {
            self.push(IntentionKind::Validate, &var, n);
        }
    }

    fn probed_var(&self, n: Node<'_>) -> Option<String> {
        match n.kind() {
            "binary_expression" => {
                let op = n
                    .child_by_field_name("operator")
                    .map(|o| self.snippet.text(o));
                if op != Some("!=") {
                    return None;
                }
                let left = n.child_by_field_name("left")?;
                let right = n.child_by_field_name("right")?;
                let var = if right.kind() == "null_literal" {
                    left
                } else if left.kind() == "null_literal" {
                    right
                } else {
                    return None;
                };
                variable_of(self.snippet, var)
            }
            "method_invocation" => {
                let name = self.snippet.text(n.child_by_field_name("name")?);
                if !self.table.probing_methods.iter().any(|m| m == name) {
                    return None;
                }
                variable_of(self.snippet, n.child_by_field_name("object")?)
            }
            _ => None,
        }
    }
}

/// Infers intentions from `table` alone.
pub fn rule_based_infer(snippet: &MethodSnippet, table: &KnowledgeTable) -> IntentionSet {
    let Some(member) = snippet.member() else {
        return IntentionSet::new();
    };
    let mut m = Matcher {
        snippet,
        table,
        out: IntentionSet::new(),
    };
    m.scan(member);
    m.scan_validations(member);
    m.out
}
