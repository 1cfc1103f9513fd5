//! Benchmark replay over buggy/fixed method pairs.
//!
//! A dataset is a TOML file with one `[[pair]]` table per benchmark entry:
//!
//! ```toml
//! [[pair]]
//! id = "feed-1"
//! concerned_type = "AndroidHttpClient"
//! expected_var = "client"          # optional
//!
//! [pair.buggy]
//! first_line = 160                 # defaults to 1
//! source = "..."
//! truth = "line 167: ... acquires client resource"   # optional
//!
//! [pair.fixed]
//! source = "..."
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{analyze_method, AnalysisOptions};
use crate::frontend::{parse_method, MethodSnippet};
use crate::gateway::Gateway;
use crate::intent::{parse_answer, IntentionSet};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed dataset: {0}")]
    Format(#[from] toml::de::Error),
    #[error("pair {0}: concerned_type is empty")]
    EmptyType(String),
    #[error("pair {id}: the {version} version has no ground-truth intentions")]
    MissingTruth { id: String, version: &'static str },
    #[error("pair {id}: the {version} version does not parse: {message}")]
    Parse {
        id: String,
        version: &'static str,
        message: String,
    },
    #[error("pair {id}: inference failed on the {version} version: {message}")]
    Inference {
        id: String,
        version: &'static str,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VersionSource {
    #[serde(default = "one")]
    pub first_line: u32,
    pub source: String,
    /// Ground-truth intentions in the canonical answer format.
    #[serde(default)]
    pub truth: Option<String>,
}

fn one() -> u32 {
    1
}

impl VersionSource {
    pub fn snippet(&self) -> Result<MethodSnippet, String> {
        parse_method(&self.source, self.first_line).map_err(|e| e.to_string())
    }

    pub fn ground_truth(&self) -> Option<IntentionSet> {
        self.truth.as_deref().map(parse_answer)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EvalPair {
    pub id: String,
    pub concerned_type: String,
    /// Variable that a report must name to count, overriding type matching.
    #[serde(default)]
    pub expected_var: Option<String>,
    pub buggy: VersionSource,
    pub fixed: VersionSource,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetFile {
    #[serde(default)]
    pair: Vec<EvalPair>,
}

pub fn parse_dataset(text: &str) -> Result<Vec<EvalPair>, EvalError> {
    let file: DatasetFile = toml::from_str(text)?;
    for p in &file.pair {
        if p.concerned_type.trim().is_empty() {
            return Err(EvalError::EmptyType(p.id.clone()));
        }
    }
    Ok(file.pair)
}

pub fn load_dataset(path: &Path) -> Result<Vec<EvalPair>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text)
}

fn simple_type(ty: &str) -> &str {
    let ty = ty.split('<').next().unwrap_or(ty).trim();
    ty.rsplit('.').next().unwrap_or(ty)
}

/// Whether `var` in `snippet` holds a value of the pair's concerned type.
///
/// An explicit `expected_var` decides alone. Otherwise a resolvable declared
/// type must equal the concerned type up to package qualification; an
/// unresolvable one falls back to the concerned type's simple name appearing
/// in some value assigned to the variable.
pub fn corresponds(snippet: &MethodSnippet, var: &str, pair: &EvalPair) -> bool {
    if let Some(expected) = &pair.expected_var {
        return crate::intent::normalize_var(expected) == crate::intent::normalize_var(var);
    }
    let concerned = pair.concerned_type.trim();
    match snippet.declared_type_of(var) {
        Some(declared) => {
            let declared = declared.split('<').next().unwrap_or(&declared).trim();
            declared == concerned
                || concerned.ends_with(&format!(".{declared}"))
                || declared.ends_with(&format!(".{concerned}"))
        }
        None => {
            let name = simple_type(concerned);
            snippet
                .initializer_texts(var)
                .iter()
                .any(|t| t.contains(name))
        }
    }
}

/// `n / d`, or 0 when `d` is 0.
pub fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntentionMetrics {
    pub ground: usize,
    pub inferred: usize,
    pub matched: usize,
    pub precision: f64,
    pub recall: f64,
    pub covered_types: usize,
    pub total_types: usize,
    pub resource_coverage: f64,
    pub uncovered_types: Vec<String>,
}

/// Precision and recall from set sizes.
///
/// With nothing inferred, precision is 0 against a non-empty ground truth
/// and 1 against an empty one. With an empty ground truth, recall is 1.
pub fn precision_recall(matched: usize, ground: usize, inferred: usize) -> (f64, f64) {
    let precision = match (inferred, ground) {
        (0, 0) => 1.0,
        (0, _) => {
            log::warn!("no intentions inferred; precision taken as 0");
            0.0
        }
        _ => ratio(matched, inferred),
    };
    let recall = if ground == 0 {
        1.0
    } else {
        ratio(matched, ground)
    };
    (precision, recall)
}

struct SnippetScore {
    ground: usize,
    inferred: usize,
    matched: usize,
    covers_type: bool,
}

fn score_version(
    pair: &EvalPair,
    version: &'static str,
    src: &VersionSource,
    gateway: &Gateway,
) -> Result<SnippetScore, EvalError> {
    let ground = src.ground_truth().ok_or_else(|| EvalError::MissingTruth {
        id: pair.id.clone(),
        version,
    })?;
    let snippet = src.snippet().map_err(|message| EvalError::Parse {
        id: pair.id.clone(),
        version,
        message,
    })?;
    let inferred = gateway.infer(&snippet).map_err(|e| EvalError::Inference {
        id: pair.id.clone(),
        version,
        message: e.to_string(),
    })?;
    let covers_type = inferred
        .iter()
        .any(|i| corresponds(&snippet, i.var(), pair));
    Ok(SnippetScore {
        ground: ground.len(),
        inferred: inferred.len(),
        matched: ground.intersection(&inferred).len(),
        covers_type,
    })
}

/// Intention inference quality over every snippet of every pair.
///
/// Each snippet's intentions are compared only with that snippet's ground
/// truth, so identical lines in different snippets never match each other.
pub fn eval_intentions(
    pairs: &[EvalPair],
    gateway: &Gateway,
) -> Result<IntentionMetrics, EvalError> {
    let scores: Vec<(String, SnippetScore)> = pairs
        .par_iter()
        .flat_map_iter(|p| {
            [("buggy", &p.buggy), ("fixed", &p.fixed)].map(|(v, src)| {
                score_version(p, v, src, gateway).map(|s| (p.concerned_type.clone(), s))
            })
        })
        .collect::<Result<_, _>>()?;
    let ground = scores.iter().map(|(_, s)| s.ground).sum();
    let inferred = scores.iter().map(|(_, s)| s.inferred).sum();
    let matched = scores.iter().map(|(_, s)| s.matched).sum();
    let all_types: BTreeSet<&str> = pairs.iter().map(|p| p.concerned_type.as_str()).collect();
    let covered: BTreeSet<&str> = scores
        .iter()
        .filter(|(_, s)| s.covers_type)
        .map(|(t, _)| t.as_str())
        .collect();
    let (precision, recall) = precision_recall(matched, ground, inferred);
    Ok(IntentionMetrics {
        ground,
        inferred,
        matched,
        precision,
        recall,
        covered_types: covered.len(),
        total_types: all_types.len(),
        resource_coverage: ratio(covered.len(), all_types.len()),
        uncovered_types: all_types
            .difference(&covered)
            .map(|t| t.to_string())
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", content = "message", rename_all = "lowercase")]
pub enum Outcome {
    Leak,
    Clean,
    Error(String),
}

impl Outcome {
    pub fn is_leak(&self) -> bool {
        matches!(self, Self::Leak)
    }

    fn label(&self) -> &'static str {
        match self {
            Self::Leak => "leak",
            Self::Clean => "clean",
            Self::Error(_) => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairVerdict {
    pub id: String,
    pub concerned_type: String,
    pub buggy: Outcome,
    pub fixed: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionMetrics {
    pub pairs: usize,
    pub detected: usize,
    pub false_alarms: usize,
    pub detection_rate: f64,
    pub false_alarm_rate: f64,
    pub table: Vec<PairVerdict>,
}

impl DetectionMetrics {
    /// Aggregates a verdict table; errors count as neither detection nor
    /// alarm but stay in the denominator.
    pub fn from_table(table: Vec<PairVerdict>) -> Self {
        let pairs = table.len();
        let detected = table.iter().filter(|v| v.buggy.is_leak()).count();
        let false_alarms = table.iter().filter(|v| v.fixed.is_leak()).count();
        Self {
            pairs,
            detected,
            false_alarms,
            detection_rate: ratio(detected, pairs),
            false_alarm_rate: ratio(false_alarms, pairs),
            table,
        }
    }
}

fn judge(
    pair: &EvalPair,
    src: &VersionSource,
    gateway: &Gateway,
    options: &AnalysisOptions,
) -> Outcome {
    let run = || -> Result<bool, String> {
        let snippet = src.snippet()?;
        let intents = gateway.infer(&snippet).map_err(|e| e.to_string())?;
        let reports = analyze_method(&snippet, &intents, options).map_err(|e| e.to_string())?;
        Ok(reports
            .iter()
            .any(|r| corresponds(&snippet, &r.resource, pair)))
    };
    match run() {
        Ok(true) => Outcome::Leak,
        Ok(false) => Outcome::Clean,
        Err(message) => {
            log::warn!("pair {}: {message}", pair.id);
            Outcome::Error(message)
        }
    }
}

pub fn eval_detection(
    pairs: &[EvalPair],
    gateway: &Gateway,
    options: &AnalysisOptions,
) -> DetectionMetrics {
    let table = pairs
        .par_iter()
        .map(|p| PairVerdict {
            id: p.id.clone(),
            concerned_type: p.concerned_type.clone(),
            buggy: judge(p, &p.buggy, gateway, options),
            fixed: judge(p, &p.fixed, gateway, options),
        })
        .collect();
    DetectionMetrics::from_table(table)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intentions: Option<IntentionMetrics>,
    pub detection: DetectionMetrics,
}

fn pct(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

impl MetricsReport {
    /// Runs both evaluations; intention metrics need ground truth on every
    /// pair and are skipped otherwise.
    pub fn run(
        pairs: &[EvalPair],
        gateway: &Gateway,
        options: &AnalysisOptions,
    ) -> Result<Self, EvalError> {
        let has_truth = pairs
            .iter()
            .all(|p| p.buggy.truth.is_some() && p.fixed.truth.is_some());
        let intentions = if has_truth && !pairs.is_empty() {
            Some(eval_intentions(pairs, gateway)?)
        } else {
            None
        };
        Ok(Self {
            intentions,
            detection: eval_detection(pairs, gateway, options),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let id_width = self
            .detection
            .table
            .iter()
            .map(|v| v.id.len())
            .chain([4])
            .max()
            .unwrap_or(4);
        let ty_width = self
            .detection
            .table
            .iter()
            .map(|v| v.concerned_type.len())
            .chain([13])
            .max()
            .unwrap_or(13);
        let _ = writeln!(
            out,
            "{:id_width$}  {:ty_width$}  buggy  fixed",
            "pair", "resource type"
        );
        for v in &self.detection.table {
            let _ = writeln!(
                out,
                "{:id_width$}  {:ty_width$}  {:5}  {:5}",
                v.id,
                v.concerned_type,
                v.buggy.label(),
                v.fixed.label()
            );
        }
        let d = &self.detection;
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "detection rate    {}/{} ({})",
            d.detected,
            d.pairs,
            pct(d.detection_rate)
        );
        let _ = writeln!(
            out,
            "false alarm rate  {}/{} ({})",
            d.false_alarms,
            d.pairs,
            pct(d.false_alarm_rate)
        );
        if let Some(m) = &self.intentions {
            let _ = writeln!(
                out,
                "precision         {}/{} ({})",
                m.matched,
                m.inferred,
                pct(m.precision)
            );
            let _ = writeln!(
                out,
                "recall            {}/{} ({})",
                m.matched,
                m.ground,
                pct(m.recall)
            );
            let _ = writeln!(
                out,
                "resource coverage {}/{} ({})",
                m.covered_types,
                m.total_types,
                pct(m.resource_coverage)
            );
        }
        out
    }
}
