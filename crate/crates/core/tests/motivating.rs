use std::path::PathBuf;

use leakscope::detector::{analyze, AnalysisOptions};
use leakscope::frontend::{extract_methods, select_methods, MethodSnippet};
use leakscope::gateway::{rule_based_infer, FixtureProvider, Gateway, KnowledgeTable};
use leakscope::intent::{Intention, IntentionSet};
use leakscope::paths::render_paths;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/motivating")
        .join(name)
}

fn method(file: &str) -> MethodSnippet {
    let text = std::fs::read_to_string(fixture(file)).unwrap();
    let mut m = select_methods(extract_methods(&text).unwrap(), Some("fetchFeed"));
    assert_eq!(m.len(), 1);
    m.remove(0)
}

fn answers(file: &str) -> Gateway {
    Gateway::new(
        Box::new(FixtureProvider::load(&fixture(file)).unwrap()),
        "fixture",
        None,
    )
}

#[test]
fn fixture_answer_parses_to_the_three_intentions() {
    let got = answers("answers.json")
        .infer(&method("FeedFetcherFixed.java"))
        .unwrap();
    let want: IntentionSet = [
        Intention::acquire("client", 167).unwrap(),
        Intention::release("client", 185).unwrap(),
        Intention::validate("client", 186).unwrap(),
    ]
    .into_iter()
    .collect();
    assert_eq!(got, want);
}

#[test]
fn rules_find_the_line_consistent_intentions() {
    let s = method("FeedFetcherFixed.java");
    let rules = rule_based_infer(&s, &KnowledgeTable::default());
    let by_line = answers("answers-by-line.json").infer(&s).unwrap();
    assert_eq!(rules, by_line);
}

#[test]
fn paths_of_both_versions() {
    let opts = AnalysisOptions::default();
    for (file, expected) in [
        (
            "FeedFetcherFixed.java",
            vec!["[160-185, 186, 187-190]", "[160-185, 187-190]"],
        ),
        ("FeedFetcherBuggy.java", vec!["[160-185]"]),
    ] {
        let s = method(file);
        let intents = answers("answers-by-line.json").infer(&s).unwrap();
        let a = analyze(&s, &intents, &opts).unwrap();
        assert_eq!(render_paths(&a.cfg, &a.paths), expected, "{file}");
    }
}
