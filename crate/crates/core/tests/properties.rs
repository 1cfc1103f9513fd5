//! Properties of the graph, path and detector layers over random programs.

mod common;

use std::collections::HashMap;

use leakscope::cfg::{build_cfg, Cfg, NodeId, NodeKind};
use leakscope::detector::{analyze_method, detect, stage1, stage2, AnalysisOptions};
use leakscope::frontend::parse_method;
use leakscope::gateway::{rule_based_infer, FixtureProvider, Gateway, KnowledgeTable};
use leakscope::intent::{render_answer, IntentionKind, IntentionSet};
use leakscope::paths::{enumerate, enumerate_exhaustive, ControlFlowPath};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CEILING: usize = 100_000;

fn program(seed: u64) -> (String, Cfg, IntentionSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (src, intents) = common::random_program(&mut rng);
    let cfg = build_cfg(&parse_method(&src, 1).unwrap()).unwrap();
    (src, cfg, intents)
}

/// Nodes that change a counter or leave the method, in path order.
fn significant(cfg: &Cfg, intents: &IntentionSet, p: &ControlFlowPath) -> Vec<NodeId> {
    let attr = cfg.attribute(intents);
    p.nodes()
        .iter()
        .copied()
        .filter(|&n| attr.changes_count(n) || cfg.node(n).kind == NodeKind::Return)
        .collect()
}

fn counter(cfg: &Cfg, intents: &IntentionSet, res: &str, p: &ControlFlowPath) -> i64 {
    let attr = cfg.attribute(intents);
    p.nodes()
        .iter()
        .map(|&n| {
            if attr.has(n, IntentionKind::Acquire, res) {
                1
            } else if attr.has(n, IntentionKind::Release, res) {
                -1
            } else {
                0
            }
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn cfg_is_connected_and_pure(seed in any::<u64>()) {
        let (src, cfg, _) = program(seed);
        prop_assert!(cfg.validate().is_ok(), "{}\n{}", src, cfg.dump());
        let again = build_cfg(&parse_method(&src, 1).unwrap()).unwrap();
        prop_assert_eq!(cfg.dump(), again.dump());
    }

    #[test]
    fn statement_spans_do_not_overlap(seed in any::<u64>()) {
        let (src, cfg, _) = program(seed);
        // Copies of a finally block share their origin and span.
        let mut by_origin = HashMap::new();
        for n in cfg.nodes() {
            if !matches!(n.kind, NodeKind::Entry | NodeKind::Exit) {
                by_origin.entry(n.origin).or_insert(n.span);
            }
        }
        let mut spans: Vec<_> = by_origin.into_values().collect();
        spans.sort_by_key(|s| (s.start, s.end));
        for w in spans.windows(2) {
            prop_assert!(w[0].end < w[1].start, "{} overlaps {}\n{}", w[0], w[1], src);
        }
    }

    #[test]
    fn emitted_paths_are_well_formed(seed in any::<u64>()) {
        let (_, cfg, intents) = program(seed);
        for p in enumerate(&cfg, &intents, CEILING).unwrap() {
            prop_assert!(p.is_well_formed(&cfg));
        }
        for p in enumerate_exhaustive(&cfg, 1, CEILING).unwrap() {
            prop_assert!(p.is_well_formed(&cfg));
        }
    }

    #[test]
    fn pruning_keeps_every_resource_and_return_sequence(seed in any::<u64>()) {
        let (src, cfg, intents) = program(seed);
        let kept: Vec<_> = enumerate(&cfg, &intents, CEILING)
            .unwrap()
            .iter()
            .map(|p| significant(&cfg, &intents, p))
            .collect();
        for p in enumerate_exhaustive(&cfg, 1, CEILING).unwrap() {
            let sig = significant(&cfg, &intents, &p);
            prop_assert!(kept.contains(&sig), "lost {:?}\n{}", sig, src);
        }
    }

    #[test]
    fn stage2_only_clears(seed in any::<u64>()) {
        let (_, cfg, intents) = program(seed);
        let mut paths = enumerate(&cfg, &intents, CEILING).unwrap();
        for res in common::VARS {
            stage1(&cfg, &mut paths, res, &intents);
            let before: Vec<_> = paths.iter().map(|p| p.is_risky()).collect();
            stage2(&cfg, &mut paths, res, &intents);
            for (b, p) in before.iter().zip(&paths) {
                prop_assert!(*b || !p.is_risky());
            }
        }
    }

    #[test]
    fn other_resources_do_not_matter(seed in any::<u64>()) {
        let (_, cfg, intents) = program(seed);
        let paths = enumerate(&cfg, &intents, CEILING).unwrap();
        for res in common::VARS {
            let own: IntentionSet = intents.for_var(res).cloned().collect();
            prop_assert_eq!(
                detect(res, &paths, &intents, &cfg).leaked,
                detect(res, &paths, &own, &cfg).leaked
            );
        }
    }

    #[test]
    fn witnesses_are_unbalanced(seed in any::<u64>()) {
        let (_, cfg, intents) = program(seed);
        let paths = enumerate(&cfg, &intents, CEILING).unwrap();
        for res in common::VARS {
            if let Some(w) = detect(res, &paths, &intents, &cfg).witness {
                let p = paths.iter().find(|p| p.id == w.path_id).unwrap();
                prop_assert!(counter(&cfg, &intents, res, p) > 0);
            }
        }
    }

    #[test]
    fn providers_are_interchangeable(seed in any::<u64>()) {
        let (src, _, _) = program(seed);
        let s = parse_method(&src, 1).unwrap();
        let rules = rule_based_infer(&s, &KnowledgeTable::default());
        let echo = FixtureProvider::new(HashMap::from([(s.content_hash(), render_answer(&rules))]));
        let via_fixture = Gateway::new(Box::new(echo), "fixture", None).infer(&s).unwrap();
        prop_assert_eq!(&via_fixture, &rules);
        let opts = AnalysisOptions::default();
        prop_assert_eq!(
            analyze_method(&s, &rules, &opts).unwrap(),
            analyze_method(&s, &via_fixture, &opts).unwrap()
        );
    }
}
