//! Intention providers and the caching gateway in front of them.
//!
//! [`Gateway::infer`] renders the prompt for a snippet, obtains an answer
//! from the configured provider (or the answer cache), and parses the
//! canonical intention lines out of it.

mod prompt;
mod remote;
mod rules;

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::frontend::MethodSnippet;
use crate::intent::{parse_answer, render_answer, IntentionSet};

pub use prompt::{render_prompt, PromptRequest, TEMPLATE_ID};
pub use remote::RemoteProvider;
pub use rules::{rule_based_infer, KnowledgeTable};

pub const API_KEY_VAR: &str = "LEAKSCOPE_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("cannot build a prompt for an empty snippet")]
    EmptyCode,
    #[error("invalid provider configuration: {0}")]
    Config(String),
    #[error("request {request_id} failed after {attempts} attempt(s): {message}")]
    Transport {
        request_id: String,
        attempts: u32,
        message: String,
    },
    #[error("request {request_id} returned an unusable response: {message}")]
    Response { request_id: String, message: String },
    #[error("fixture file {path}: {message}")]
    Fixture { path: PathBuf, message: String },
    #[error("answer cache {path}: {source}")]
    Cache {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl GatewayError {
    /// Identifier of the failed remote request, when there was one.
    pub fn request_id(&self) -> Option<&str> {
        match self {
            Self::Transport { request_id, .. } | Self::Response { request_id, .. } => {
                Some(request_id)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    RemoteChat,
    RuleBased,
    Fixture,
}

#[derive(Debug, Clone)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Chat-completion URL for the remote provider.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    /// Total attempts per request, including the first.
    pub max_retries: u32,
    /// Delay before the second attempt; doubles on every further attempt.
    pub initial_backoff_ms: u64,
    /// Global request budget per minute for the remote provider.
    pub requests_per_minute: Option<u32>,
    pub cache_dir: Option<PathBuf>,
    pub fixture_file: Option<PathBuf>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::RuleBased,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4".into(),
            temperature: 0.0,
            timeout_secs: 120,
            max_retries: 3,
            initial_backoff_ms: 1000,
            requests_per_minute: None,
            cache_dir: None,
            fixture_file: None,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.kind == ProviderKind::RemoteChat && self.temperature != 0.0 {
            return Err(GatewayError::Config(format!(
                "the remote provider requires temperature 0, got {}",
                self.temperature
            )));
        }
        if self.max_retries == 0 {
            return Err(GatewayError::Config(
                "max_retries must be at least 1".into(),
            ));
        }
        if self.kind == ProviderKind::Fixture && self.fixture_file.is_none() {
            return Err(GatewayError::Config(
                "the fixture provider needs a fixture file".into(),
            ));
        }
        Ok(())
    }

    /// Name used in cache keys for the answers of this provider.
    pub fn cache_model(&self) -> String {
        match self.kind {
            ProviderKind::RemoteChat => self.model.clone(),
            ProviderKind::RuleBased => "rules".into(),
            ProviderKind::Fixture => "fixture".into(),
        }
    }
}

/// Anything that turns a prompt into answer text.
pub trait IntentionProvider: Send + Sync {
    fn complete(&self, snippet: &MethodSnippet, prompt: &str) -> Result<String, GatewayError>;
}

/// Answers from the built-in knowledge table, rendered in canonical form.
#[derive(Debug, Clone, Default)]
pub struct RuleProvider {
    pub table: KnowledgeTable,
}

impl IntentionProvider for RuleProvider {
    fn complete(&self, snippet: &MethodSnippet, _prompt: &str) -> Result<String, GatewayError> {
        Ok(render_answer(&rule_based_infer(snippet, &self.table)))
    }
}

/// Canned answers keyed by snippet content hash or by `name@line`.
#[derive(Debug, Clone, Default)]
pub struct FixtureProvider {
    answers: HashMap<String, String>,
}

impl FixtureProvider {
    pub fn new(answers: HashMap<String, String>) -> Self {
        Self { answers }
    }

    /// Loads a JSON object mapping keys to answer text.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let err = |message: String| GatewayError::Fixture {
            path: path.to_path_buf(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let answers = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        Ok(Self { answers })
    }
}

impl IntentionProvider for FixtureProvider {
    fn complete(&self, snippet: &MethodSnippet, _prompt: &str) -> Result<String, GatewayError> {
        let answer = self
            .answers
            .get(&snippet.content_hash())
            .or_else(|| self.answers.get(&snippet.symbol()));
        match answer {
            Some(a) => Ok(a.clone()),
            None => {
                log::info!("no fixture answer for {}", snippet.symbol());
                Ok(String::new())
            }
        }
    }
}

/// Cache file name for one (template, snippet, model) combination.
pub fn cache_key(template_id: &str, snippet_hash: &str, model: &str) -> String {
    let mut h = Sha256::new();
    for part in [template_id, snippet_hash, model] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

pub struct Gateway {
    provider: Box<dyn IntentionProvider>,
    model: String,
    cache_dir: Option<PathBuf>,
}

impl Gateway {
    pub fn from_config(config: &ProviderConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let provider: Box<dyn IntentionProvider> = match config.kind {
            ProviderKind::RuleBased => Box::new(RuleProvider::default()),
            ProviderKind::Fixture => {
                let path = config.fixture_file.as_deref().expect("validated");
                Box::new(FixtureProvider::load(path)?)
            }
            ProviderKind::RemoteChat => Box::new(RemoteProvider::from_config(config)?),
        };
        Ok(Self::new(
            provider,
            config.cache_model(),
            config.cache_dir.clone(),
        ))
    }

    pub fn new(
        provider: Box<dyn IntentionProvider>,
        model: impl Into<String>,
        cache_dir: Option<PathBuf>,
    ) -> Self {
        Self {
            provider,
            model: model.into(),
            cache_dir,
        }
    }

    /// Raw answer text for `snippet`, from the cache when possible.
    pub fn answer(&self, snippet: &MethodSnippet) -> Result<String, GatewayError> {
        let prompt = render_prompt(&PromptRequest::for_snippet(snippet))?;
        let Some(dir) = &self.cache_dir else {
            return self.provider.complete(snippet, &prompt);
        };
        let path = dir.join(format!(
            "{}.txt",
            cache_key(TEMPLATE_ID, &snippet.content_hash(), &self.model)
        ));
        if let Ok(text) = fs::read_to_string(&path) {
            log::debug!("cache hit for {}", snippet.symbol());
            return Ok(text);
        }
        let answer = self.provider.complete(snippet, &prompt)?;
        write_atomically(dir, &path, &answer).map_err(|source| GatewayError::Cache {
            path: path.clone(),
            source,
        })?;
        Ok(answer)
    }

    pub fn infer(&self, snippet: &MethodSnippet) -> Result<IntentionSet, GatewayError> {
        self.answer(snippet).map(|a| parse_answer(&a))
    }
}

/// Concurrent writers of the same key each rename a complete file into
/// place, so readers never see a partial answer and the last write wins.
fn write_atomically(dir: &Path, path: &Path, text: &str) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{}.tmp", uuid::Uuid::new_v4()));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(text.as_bytes())?;
    f.sync_all()?;
    fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_method;
    use crate::intent::{Intention, IntentionKind};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct Counting {
        calls: Arc<AtomicUsize>,
        answer: String,
    }

    impl IntentionProvider for Counting {
        fn complete(&self, _: &MethodSnippet, _: &str) -> Result<String, GatewayError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.answer.clone())
        }
    }

    #[test]
    fn warm_cache_skips_the_provider() {
        let dir = tempfile::tempdir().unwrap();
        let calls = Arc::new(AtomicUsize::new(0));
        let make = || {
            Gateway::new(
                Box::new(Counting {
                    calls: calls.clone(),
                    answer: "line 2: open() acquires f resource\n".into(),
                }),
                "m",
                Some(dir.path().to_path_buf()),
            )
        };
        let s = parse_method("void m() {\n  f = open();\n}", 1).unwrap();
        let first = make().infer(&s).unwrap();
        let second = make().infer(&s).unwrap();
        assert_eq!(first, second);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert!(first.contains(IntentionKind::Acquire, "f", 2));
        let files: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);
    }

    #[test]
    fn cache_key_depends_on_every_part() {
        let base = cache_key("t", "h", "m");
        assert_eq!(base.len(), 64);
        assert_ne!(base, cache_key("t2", "h", "m"));
        assert_ne!(base, cache_key("t", "h2", "m"));
        assert_ne!(base, cache_key("t", "h", "m2"));
        assert_ne!(cache_key("ab", "c", "m"), cache_key("a", "bc", "m"));
    }

    #[test]
    fn fixture_matches_hash_then_symbol() {
        let s = parse_method("void fetch() {\n  c = open();\n}", 40).unwrap();
        let by_symbol = FixtureProvider::new(HashMap::from([(
            "fetch@40".to_string(),
            "line 41: open() acquires c resource".to_string(),
        )]));
        let by_hash = FixtureProvider::new(HashMap::from([
            (
                s.content_hash(),
                "line 41: x() acquires h resource".to_string(),
            ),
            ("fetch@40".to_string(), "ignored".to_string()),
        ]));
        let infer = |p: FixtureProvider| Gateway::new(Box::new(p), "fixture", None).infer(&s);
        let got = infer(by_symbol).unwrap();
        assert_eq!(
            got,
            [Intention::acquire("c", 41).unwrap()].into_iter().collect()
        );
        assert!(infer(by_hash)
            .unwrap()
            .contains(IntentionKind::Acquire, "h", 41));
        assert!(infer(FixtureProvider::default()).unwrap().is_empty());
    }

    #[test]
    fn fixture_file_errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.json");
        fs::write(&path, "[1]").unwrap();
        let err = FixtureProvider::load(&path).unwrap_err();
        assert!(err.to_string().contains("f.json"));
    }

    #[test]
    fn rule_provider_round_trips_through_text() {
        let s = parse_method("void m() {\n  lock.lock();\n  lock.unlock();\n}", 1).unwrap();
        let direct = rule_based_infer(&s, &KnowledgeTable::default());
        let via = Gateway::new(Box::new(RuleProvider::default()), "rules", None)
            .infer(&s)
            .unwrap();
        assert_eq!(direct, via);
        assert_eq!(via.len(), 2);
    }

    #[test]
    fn remote_requires_zero_temperature() {
        let config = ProviderConfig {
            kind: ProviderKind::RemoteChat,
            temperature: 0.7,
            ..ProviderConfig::default()
        };
        assert!(matches!(config.validate(), Err(GatewayError::Config(_))));
        let fixture = ProviderConfig {
            kind: ProviderKind::Fixture,
            ..ProviderConfig::default()
        };
        assert!(fixture.validate().is_err());
    }
}
