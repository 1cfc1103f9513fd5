//! Metric arithmetic checked against independent recomputation.

use std::collections::{HashMap, HashSet};

use leakscope::detector::AnalysisOptions;
use leakscope::eval::{
    eval_detection, parse_dataset, precision_recall, DetectionMetrics, EvalPair, Outcome,
    PairVerdict,
};
use leakscope::gateway::{FixtureProvider, Gateway};
use leakscope::intent::{Intention, IntentionKind, IntentionSet};
use proptest::prelude::*;

fn outcome() -> impl Strategy<Value = Outcome> {
    prop_oneof![
        Just(Outcome::Leak),
        Just(Outcome::Clean),
        Just(Outcome::Error("scripted".into())),
    ]
}

fn table() -> impl Strategy<Value = Vec<PairVerdict>> {
    proptest::collection::vec((outcome(), outcome()), 0..40).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (buggy, fixed))| PairVerdict {
                id: format!("p{i}"),
                concerned_type: "Cursor".into(),
                buggy,
                fixed,
            })
            .collect()
    })
}

/// Column sums the way a spreadsheet would: one 0/1 cell per row.
fn spreadsheet(rows: &[PairVerdict]) -> (f64, f64) {
    if rows.is_empty() {
        return (0.0, 0.0);
    }
    let cell = |o: &Outcome| if *o == Outcome::Leak { 1.0 } else { 0.0 };
    let detected: f64 = rows.iter().map(|r| cell(&r.buggy)).sum();
    let alarms: f64 = rows.iter().map(|r| cell(&r.fixed)).sum();
    (detected / rows.len() as f64, alarms / rows.len() as f64)
}

fn intention() -> impl Strategy<Value = Intention> {
    (
        0usize..3,
        prop_oneof![Just("a"), Just("b"), Just("c")],
        1u32..6,
    )
        .prop_map(|(k, v, l)| Intention::new(IntentionKind::ALL[k], v, l).unwrap())
}

/// A method whose fixture answer leaks `c` or releases it.
fn scripted_pair(
    i: usize,
    buggy_leaks: bool,
    fixed_leaks: bool,
    answers: &mut HashMap<String, String>,
) -> String {
    for (suffix, leaks) in [("b", buggy_leaks), ("f", fixed_leaks)] {
        let mut a = "line 2: open() acquires c resource\n".to_string();
        if !leaks {
            a.push_str("line 3: c.close() releases c resource\n");
        }
        answers.insert(format!("m{i}{suffix}@1"), a);
    }
    let src = |s: &str| format!("void m{i}{s}() {{\n  c = open();\n  c.close();\n}}");
    format!(
        "[[pair]]\nid = \"p{i}\"\nconcerned_type = \"Conn\"\nexpected_var = \"c\"\n[pair.buggy]\nsource = '''\n{}'''\n[pair.fixed]\nsource = '''\n{}'''\n",
        src("b"),
        src("f")
    )
}

fn swapped(p: &EvalPair) -> EvalPair {
    EvalPair {
        buggy: p.fixed.clone(),
        fixed: p.buggy.clone(),
        ..p.clone()
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn rates_match_a_spreadsheet(rows in table()) {
        let (want_d, want_f) = spreadsheet(&rows);
        let m = DetectionMetrics::from_table(rows.clone());
        prop_assert_eq!(m.pairs, rows.len());
        prop_assert!((m.detection_rate - want_d).abs() < 1e-12);
        prop_assert!((m.false_alarm_rate - want_f).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&m.detection_rate));
        prop_assert!((0.0..=1.0).contains(&m.false_alarm_rate));
    }

    #[test]
    fn set_metrics_match_a_hash_set(
        ground in proptest::collection::vec(intention(), 0..10),
        inferred in proptest::collection::vec(intention(), 0..10),
    ) {
        let key = |i: &Intention| (i.kind(), i.var().to_string(), i.lineno());
        let g: HashSet<_> = ground.iter().map(key).collect();
        let f: HashSet<_> = inferred.iter().map(key).collect();
        let both = g.intersection(&f).count();
        let gs: IntentionSet = ground.into_iter().collect();
        let fs: IntentionSet = inferred.into_iter().collect();
        prop_assert_eq!(gs.intersection(&fs).len(), both);
        let (p, r) = precision_recall(both, g.len(), f.len());
        if !f.is_empty() {
            prop_assert_eq!(p, both as f64 / f.len() as f64);
        }
        if !g.is_empty() {
            prop_assert_eq!(r, both as f64 / g.len() as f64);
        }
        prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&r));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn swapping_versions_swaps_rates(script in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..8)) {
        let mut answers = HashMap::new();
        let text: String = script
            .iter()
            .enumerate()
            .map(|(i, &(b, f))| scripted_pair(i, b, f, &mut answers))
            .collect();
        let pairs = parse_dataset(&text).unwrap();
        let gateway = Gateway::new(Box::new(FixtureProvider::new(answers)), "fixture", None);
        let opts = AnalysisOptions::default();
        let m = eval_detection(&pairs, &gateway, &opts);
        let flipped: Vec<_> = pairs.iter().map(swapped).collect();
        let s = eval_detection(&flipped, &gateway, &opts);
        prop_assert_eq!(m.detection_rate, s.false_alarm_rate);
        prop_assert_eq!(m.false_alarm_rate, s.detection_rate);
        let want = script.iter().filter(|(b, _)| *b).count();
        prop_assert_eq!(m.detected, want);
    }
}

#[test]
fn four_pairs_two_detected_one_alarm() {
    let rows: Vec<PairVerdict> = [
        (Outcome::Leak, Outcome::Clean),
        (Outcome::Leak, Outcome::Leak),
        (Outcome::Clean, Outcome::Clean),
        (Outcome::Error("x".into()), Outcome::Clean),
    ]
    .into_iter()
    .enumerate()
    .map(|(i, (buggy, fixed))| PairVerdict {
        id: i.to_string(),
        concerned_type: "T".into(),
        buggy,
        fixed,
    })
    .collect();
    let m = DetectionMetrics::from_table(rows);
    assert_eq!((m.detection_rate, m.false_alarm_rate), (0.5, 0.25));
}
