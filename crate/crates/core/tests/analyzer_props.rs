mod common;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use stacksurgeon::analyze::{self, AnalysisConfig, Mode, Pattern, SELF_CATEGORY, UNCATEGORIZED_CATEGORY};
use stacksurgeon::CallTree;

use common::tree_of;

fn fixed(cases: u32, seed: u64) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(seed),
        failure_persistence: None,
        ..Config::default()
    }
}

const NAMES: &[&str] = &["main", "tick", "RubyPort::recv", "Ruby::wake", "Cache::hit", "pybind11::call", "evt", "tock"];
const PATTERNS: &[&str] = &["tick", "*", "Ruby*", "*::*", "Cache::*", "pybind11*", "e*t", "*o*", "t*k", "main"];

fn chains() -> impl Strategy<Value = Vec<Vec<String>>> {
    let name = prop::sample::select(NAMES).prop_map(str::to_string);
    prop::collection::vec(prop::collection::vec(name, 1..9), 1..80)
}

fn configs() -> impl Strategy<Value = AnalysisConfig> {
    let pat = || prop::sample::select(PATTERNS);
    (
        pat(),
        prop::collection::vec((0..3usize, pat()), 0..4),
        prop::collection::vec(pat(), 0..2),
        any::<bool>(),
    )
        .prop_map(|(root, cats, denies, flat)| {
            let mut config = AnalysisConfig::new(root);
            for (i, p) in cats {
                config = config.category(format!("c{i}"), p);
            }
            for p in denies {
                config = config.deny(p);
            }
            config.mode(if flat { Mode::Flatten } else { Mode::Children })
        })
}

/// Brute force: paths of every node whose name matches and which has no
/// matching proper ancestor.
fn outermost_oracle(tree: &CallTree, pattern: &Pattern) -> Vec<Vec<String>> {
    let mut all = Vec::new();
    tree.walk(|path, _| {
        if pattern.matches(path[path.len() - 1]) {
            all.push(path.iter().map(|s| s.to_string()).collect::<Vec<_>>());
        }
    });
    all.iter()
        .filter(|p| !all.iter().any(|q| q.len() < p.len() && p.starts_with(q)))
        .cloned()
        .collect()
}

proptest! {
    #![proptest_config(fixed(300, 5))]

    #[test]
    fn counts_are_conserved(chains in chains(), config in configs()) {
        let tree = tree_of(&chains);
        let b = analyze::aggregate(&tree, &config).unwrap();
        let roots = analyze::find_roots(&tree, &config.root);
        let expected: u64 = roots.iter().map(|r| r.node.count()).sum();
        prop_assert_eq!(b.denominator, expected);
        prop_assert_eq!(b.categorized_total() + b.denied, b.denominator);
        prop_assert_eq!(b.matched_roots, roots.len());
        if b.denominator > 0 {
            prop_assert!((b.percent_total() + 100.0 * b.denied as f64 / b.denominator as f64 - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn flatten_self_counts_cover_each_root(chains in chains(), config in configs()) {
        let tree = tree_of(&chains);
        for root in analyze::find_roots(&tree, &config.root) {
            let mut self_total = 0;
            let mut stack = vec![root.node];
            while let Some(node) = stack.pop() {
                self_total += node.self_count();
                stack.extend(node.children().values());
            }
            prop_assert_eq!(self_total, root.node.count());
        }
    }

    #[test]
    fn outermost_match_agrees_with_brute_force(chains in chains(), root in prop::sample::select(PATTERNS)) {
        let tree = tree_of(&chains);
        let pattern = Pattern::new(root);
        let found = analyze::find_roots(&tree, &pattern);
        let oracle = outermost_oracle(&tree, &pattern);
        prop_assert_eq!(found.len(), oracle.len());
        let mut walked = Vec::new();
        tree.walk(|path, node| {
            if found.iter().any(|r| std::ptr::eq(r.node, node)) {
                walked.push(path.iter().map(|s| s.to_string()).collect::<Vec<_>>());
            }
        });
        prop_assert_eq!(walked, oracle);
    }

    #[test]
    fn deny_wins_over_any_category(name in prop::sample::select(NAMES), config in configs()) {
        let config = config.deny(name);
        prop_assert_eq!(analyze::classify(name, &config), analyze::Classification::Denied);
    }

    #[test]
    fn adding_a_deny_never_grows_a_category(chains in chains(), config in configs(), extra in prop::sample::select(PATTERNS)) {
        let tree = tree_of(&chains);
        let before = analyze::aggregate(&tree, &config).unwrap();
        let after = analyze::aggregate(&tree, &config.clone().deny(extra)).unwrap();
        prop_assert_eq!(before.denominator, after.denominator);
        prop_assert!(after.denied >= before.denied);
        for e in &after.entries {
            prop_assert!(e.count <= before.count_of(&e.category), "{}", e.category);
        }
    }

    #[test]
    fn entries_keep_reserved_categories_last(chains in chains(), config in configs()) {
        let tree = tree_of(&chains);
        let b = analyze::aggregate(&tree, &config).unwrap();
        let order: Vec<&str> = b.entries.iter().map(|e| e.category.as_str()).collect();
        let first_reserved = order.iter().position(|c| *c == UNCATEGORIZED_CATEGORY || *c == SELF_CATEGORY);
        if let Some(at) = first_reserved {
            prop_assert!(order[at..].iter().all(|c| *c == UNCATEGORIZED_CATEGORY || *c == SELF_CATEGORY));
        }
        prop_assert!(b.entries.iter().all(|e| e.count > 0));
    }
}

#[test]
fn recursive_root_is_counted_once() {
    let chains: Vec<Vec<String>> = [
        vec!["main", "tick", "a", "tick", "b"],
        vec!["main", "tick", "tick"],
        vec!["main", "tick", "c"],
    ]
    .iter()
    .map(|c| c.iter().map(|s| s.to_string()).collect())
    .collect();
    let tree = tree_of(&chains);
    let config = AnalysisConfig::new("tick").category("A", "a").category("T", "tick").category("C", "c");
    let b = analyze::aggregate(&tree, &config).unwrap();
    assert_eq!(b.denominator, 3);
    assert_eq!((b.count_of("A"), b.count_of("T"), b.count_of("C")), (1, 1, 1));
}
