//! Resource-oriented intentions and the textual answer format that carries them.
//!
//! An [`Intention`] states that one source line acquires, releases, or
//! validates the reachability of a resource held in a variable. Providers
//! report intentions as plain text lines of the form
//!
//! ```text
//! line <N>: <text> acquires <var> resource
//! line <N>: <text> releases <var> resource
//! line <N>: <text> validates reachability of <var> resource
//! ```
//!
//! [`parse_answer`] extracts those lines from arbitrary provider output and
//! [`render_answer`] produces them back.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntentionKind {
    Acquire,
    Release,
    Validate,
}

impl IntentionKind {
    pub const ALL: [IntentionKind; 3] = [Self::Acquire, Self::Release, Self::Validate];

    /// Acquire and Release change the live-resource count on a path.
    pub fn is_count_changing(self) -> bool {
        matches!(self, Self::Acquire | Self::Release)
    }
}

impl fmt::Display for IntentionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Acquire => "ACQUIRE",
            Self::Release => "RELEASE",
            Self::Validate => "VALIDATE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IntentionError {
    #[error("line numbers are 1-based, got 0")]
    ZeroLine,
    #[error("resource variable {0:?} is empty or contains whitespace")]
    BadVariable(String),
}

/// One formal intention: `KIND(var, lineno)`.
///
/// Equality, ordering and hashing consider only `(kind, var, lineno)`;
/// `call_text` is carried along for display.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Intention {
    kind: IntentionKind,
    var: String,
    lineno: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    call_text: Option<String>,
}

impl Intention {
    pub fn new(kind: IntentionKind, var: &str, lineno: u32) -> Result<Self, IntentionError> {
        if lineno == 0 {
            return Err(IntentionError::ZeroLine);
        }
        let var = normalize_var(var);
        if var.is_empty() || var.chars().any(char::is_whitespace) {
            return Err(IntentionError::BadVariable(var.to_string()));
        }
        Ok(Self {
            kind,
            var: var.to_string(),
            lineno,
            call_text: None,
        })
    }

    pub fn acquire(var: &str, lineno: u32) -> Result<Self, IntentionError> {
        Self::new(IntentionKind::Acquire, var, lineno)
    }

    pub fn release(var: &str, lineno: u32) -> Result<Self, IntentionError> {
        Self::new(IntentionKind::Release, var, lineno)
    }

    pub fn validate(var: &str, lineno: u32) -> Result<Self, IntentionError> {
        Self::new(IntentionKind::Validate, var, lineno)
    }

    pub fn with_call_text(mut self, text: impl Into<String>) -> Self {
        let text = text.into();
        let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
        self.call_text = (!text.is_empty()).then_some(text);
        self
    }

    pub fn kind(&self) -> IntentionKind {
        self.kind
    }

    pub fn var(&self) -> &str {
        &self.var
    }

    pub fn lineno(&self) -> u32 {
        self.lineno
    }

    pub fn call_text(&self) -> Option<&str> {
        self.call_text.as_deref()
    }

    fn key(&self) -> (u32, IntentionKind, &str) {
        (self.lineno, self.kind, &self.var)
    }
}

impl PartialEq for Intention {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Intention {}

impl Hash for Intention {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state);
    }
}

impl PartialOrd for Intention {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Intention {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl fmt::Display for Intention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}, {})", self.kind, self.var, self.lineno)
    }
}

/// Strips a leading `this.` so that `this.client` and `client` compare equal.
pub fn normalize_var(var: &str) -> &str {
    let var = var.trim();
    var.strip_prefix("this.").unwrap_or(var)
}

/// Duplicate-free set of intentions, iterated by line, then kind, then variable.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentionSet {
    items: BTreeSet<Intention>,
}

impl IntentionSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false when an equal intention was already present; the stored
    /// element is left untouched in that case.
    pub fn insert(&mut self, intention: Intention) -> bool {
        self.items.insert(intention)
    }

    pub fn contains(&self, kind: IntentionKind, var: &str, lineno: u32) -> bool {
        match Intention::new(kind, var, lineno) {
            Ok(probe) => self.items.contains(&probe),
            Err(_) => false,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Intention> + '_ {
        self.items.iter()
    }

    pub fn of_kind(&self, kind: IntentionKind) -> impl Iterator<Item = &Intention> + '_ {
        self.items.iter().filter(move |i| i.kind == kind)
    }

    pub fn for_var<'a>(&'a self, var: &'a str) -> impl Iterator<Item = &'a Intention> + 'a {
        let var = normalize_var(var);
        self.items.iter().filter(move |i| i.var == var)
    }

    /// Distinct variables named by Acquire intentions, ordered by their first
    /// acquisition line.
    pub fn acquired_resources(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.of_kind(IntentionKind::Acquire)
            .filter(|i| seen.insert(i.var.as_str()))
            .map(|i| i.var.as_str())
            .collect()
    }

    pub fn union(&self, other: &IntentionSet) -> IntentionSet {
        let mut out = self.clone();
        out.extend(other.iter().cloned());
        out
    }

    pub fn intersection(&self, other: &IntentionSet) -> IntentionSet {
        self.items.intersection(&other.items).cloned().collect()
    }
}

impl Extend<Intention> for IntentionSet {
    fn extend<T: IntoIterator<Item = Intention>>(&mut self, iter: T) {
        for i in iter {
            self.insert(i);
        }
    }
}

impl FromIterator<Intention> for IntentionSet {
    fn from_iter<T: IntoIterator<Item = Intention>>(iter: T) -> Self {
        let mut set = IntentionSet::new();
        set.extend(iter);
        set
    }
}

impl<'a> IntoIterator for &'a IntentionSet {
    type Item = &'a Intention;
    type IntoIter = std::collections::btree_set::Iter<'a, Intention>;

    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}

/// Membership test under `(kind, var, lineno)`.
pub fn query(intents: &IntentionSet, kind: IntentionKind, var: &str, lineno: u32) -> bool {
    intents.contains(kind, var, lineno)
}

// The verbs are matched case-insensitively; everything else is literal.
static ACQUIRE_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\bline (\d+):\s*(.*?)\s*\b(?i:acquires)\s+(\S+)\s+resource\b").unwrap()
});
static RELEASE_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\bline (\d+):\s*(.*?)\s*\b(?i:releases)\s+(\S+)\s+resource\b").unwrap()
});
static VALIDATE_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\bline (\d+):\s*(.*?)\s*\b(?i:validates)\s+reachability\s+of\s+(\S+)\s+resource\b")
        .unwrap()
});

/// Extracts every canonical intention line from free-form provider output.
///
/// Never fails: lines that do not match, or carry an unusable line number or
/// variable, are skipped.
pub fn parse_answer(answer: &str) -> IntentionSet {
    let patterns = [
        (IntentionKind::Acquire, &*ACQUIRE_LINE),
        (IntentionKind::Release, &*RELEASE_LINE),
        (IntentionKind::Validate, &*VALIDATE_LINE),
    ];
    let mut set = IntentionSet::new();
    for line in answer.lines() {
        for (kind, re) in &patterns {
            let Some(caps) = re.captures(line) else {
                continue;
            };
            let Ok(lineno) = caps[1].parse::<u32>() else {
                continue;
            };
            let var = caps[3].trim_matches(|c: char| matches!(c, '`' | '\'' | '"' | '*'));
            if let Ok(intent) = Intention::new(*kind, var, lineno) {
                set.insert(intent.with_call_text(&caps[2]));
            }
            break;
        }
    }
    set
}

/// Renders one canonical line per intention, in set order.
pub fn render_answer(intents: &IntentionSet) -> String {
    let mut out = String::new();
    for i in intents {
        out.push_str(&render_line(i));
        out.push('\n');
    }
    out
}

fn render_line(i: &Intention) -> String {
    match i.kind {
        IntentionKind::Acquire => format!(
            "line {}: {} acquires {} resource",
            i.lineno,
            i.call_text().unwrap_or("open()"),
            i.var
        ),
        IntentionKind::Release => format!(
            "line {}: {} releases {} resource",
            i.lineno,
            i.call_text().unwrap_or("close()"),
            i.var
        ),
        IntentionKind::Validate => format!(
            "line {}: {} validates reachability of {} resource",
            i.lineno,
            i.call_text().unwrap_or("if-condition"),
            i.var
        ),
    }
}
