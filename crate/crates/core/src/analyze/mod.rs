//! Config-driven category breakdowns of a call tree.
//!
//! Analysis anchors on every outermost node matching the config's root
//! pattern. In children mode each direct child of an anchor is classified
//! and its inclusive count credited to a category; in flatten mode every
//! node beneath an anchor contributes its self count instead. Percentages
//! are relative to the summed counts of the anchors.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::calltree::{CallNode, CallTree};
use crate::layout::RunLabel;

mod config;
mod pattern;

pub use config::{parse_config, AnalysisConfig, Mode, UncategorizedPolicy, WhitelistEntry};
pub use pattern::Pattern;

/// Reserved category for the anchors' own self time.
pub const SELF_CATEGORY: &str = "self";
/// Reserved category for names no whitelist entry matched.
pub const UNCATEGORIZED_CATEGORY: &str = "uncategorized";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("MissingRoot: config has no `root` directive")]
    MissingRoot,
    #[error("uncategorized functions: {}", .0.join(", "))]
    UncategorizedFound(Vec<String>),
    #[error("duplicate run label `{0}`")]
    DuplicateLabel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification<'c> {
    Category(&'c str),
    Denied,
    Uncategorized,
}

/// Deny patterns win; otherwise the first matching whitelist entry.
pub fn classify<'c>(name: &str, config: &'c AnalysisConfig) -> Classification<'c> {
    if config.blacklist.iter().any(|p| p.matches(name)) {
        return Classification::Denied;
    }
    config
        .whitelist
        .iter()
        .find(|e| e.pattern.matches(name))
        .map_or(Classification::Uncategorized, |e| {
            Classification::Category(&e.category)
        })
}

/// An anchor found by [`find_roots`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RootMatch<'t> {
    pub name: &'t str,
    pub node: &'t CallNode,
    /// Depth of the node, 0 for a tree root.
    pub depth: usize,
}

/// Every node matching `pattern` that has no matching ancestor, in
/// depth-first order.
pub fn find_roots<'t>(tree: &'t CallTree, pattern: &Pattern) -> Vec<RootMatch<'t>> {
    fn go<'t>(
        name: &'t str,
        node: &'t CallNode,
        depth: usize,
        pattern: &Pattern,
        out: &mut Vec<RootMatch<'t>>,
    ) {
        if pattern.matches(name) {
            out.push(RootMatch { name, node, depth });
            return;
        }
        for (child_name, child) in node.children() {
            go(child_name, child, depth + 1, pattern, out);
        }
    }
    let mut out = Vec::new();
    for (name, node) in tree.roots() {
        go(name, node, 0, pattern, &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreakdownEntry {
    pub category: String,
    pub count: u64,
    /// `100 * count / denominator`, unrounded; 0 when the denominator is 0.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryBreakdown {
    /// Whitelist categories in first-appearance order, then
    /// `uncategorized`, then `self`.
    pub entries: Vec<BreakdownEntry>,
    /// Sum of the matched anchors' counts.
    pub denominator: u64,
    pub matched_roots: usize,
    /// Samples excluded by deny patterns.
    pub denied: u64,
    /// Distinct names that landed in the `uncategorized` bucket, sorted.
    pub uncategorized_names: Vec<String>,
}

impl CategoryBreakdown {
    pub fn get(&self, category: &str) -> Option<&BreakdownEntry> {
        self.entries.iter().find(|e| e.category == category)
    }

    pub fn count_of(&self, category: &str) -> u64 {
        self.get(category).map_or(0, |e| e.count)
    }

    pub fn categorized_total(&self) -> u64 {
        self.entries.iter().map(|e| e.count).sum()
    }

    pub fn percent_total(&self) -> f64 {
        self.entries.iter().map(|e| e.percent).sum()
    }
}

fn percent(count: u64, denominator: u64) -> f64 {
    if denominator == 0 {
        0.0
    } else {
        100.0 * count as f64 / denominator as f64
    }
}

/// Running totals for one analysis.
struct Tally<'c> {
    config: &'c AnalysisConfig,
    categories: Vec<u64>,
    category_names: Vec<&'c str>,
    uncategorized: u64,
    own_self: u64,
    denied: u64,
    unmatched: BTreeSet<String>,
}

impl<'c> Tally<'c> {
    fn new(config: &'c AnalysisConfig) -> Self {
        let category_names = config.categories();
        Tally {
            config,
            categories: vec![0; category_names.len()],
            category_names,
            uncategorized: 0,
            own_self: 0,
            denied: 0,
            unmatched: BTreeSet::new(),
        }
    }

    fn credit(&mut self, name: &str, count: u64) {
        if count == 0 {
            return;
        }
        match classify(name, self.config) {
            Classification::Denied => self.denied += count,
            Classification::Category(cat) => {
                let idx = self
                    .category_names
                    .iter()
                    .position(|c| *c == cat)
                    .expect("category comes from config");
                self.categories[idx] += count;
            }
            Classification::Uncategorized => {
                self.uncategorized += count;
                if !self.unmatched.contains(name) {
                    self.unmatched.insert(name.to_string());
                }
            }
        }
    }

    fn finish(
        self,
        denominator: u64,
        matched_roots: usize,
    ) -> Result<CategoryBreakdown, AnalysisError> {
        if self.config.uncategorized == UncategorizedPolicy::Error && !self.unmatched.is_empty() {
            return Err(AnalysisError::UncategorizedFound(
                self.unmatched.into_iter().collect(),
            ));
        }
        let mut entries: Vec<BreakdownEntry> = self
            .category_names
            .iter()
            .zip(&self.categories)
            .filter(|(_, &count)| count > 0)
            .map(|(name, &count)| BreakdownEntry {
                category: name.to_string(),
                count,
                percent: percent(count, denominator),
            })
            .collect();
        for (name, count) in [
            (UNCATEGORIZED_CATEGORY, self.uncategorized),
            (SELF_CATEGORY, self.own_self),
        ] {
            if count > 0 {
                entries.push(BreakdownEntry {
                    category: name.to_string(),
                    count,
                    percent: percent(count, denominator),
                });
            }
        }
        Ok(CategoryBreakdown {
            entries,
            denominator,
            matched_roots,
            denied: self.denied,
            uncategorized_names: self.unmatched.into_iter().collect(),
        })
    }
}

/// Children-mode breakdown: each anchor's direct children are classified
/// and credited with their inclusive counts; the anchors' own self counts
/// go to `self`.
pub fn aggregate_children(
    tree: &CallTree,
    config: &AnalysisConfig,
) -> Result<CategoryBreakdown, AnalysisError> {
    let roots = find_roots(tree, &config.root);
    let mut tally = Tally::new(config);
    let mut denominator = 0;
    for root in &roots {
        denominator += root.node.count();
        tally.own_self += root.node.self_count();
        for (name, child) in root.node.children() {
            tally.credit(name, child.count());
        }
    }
    tally.finish(denominator, roots.len())
}

/// Flatten-mode breakdown: every node strictly beneath an anchor is
/// classified by its own name and credited with its self count; the
/// anchors' own self counts go to `self`. Self counts under an anchor sum
/// to the anchor's count, so nothing is lost or double counted.
pub fn aggregate_flat(
    tree: &CallTree,
    config: &AnalysisConfig,
) -> Result<CategoryBreakdown, AnalysisError> {
    fn descend(node: &CallNode, tally: &mut Tally<'_>) {
        for (name, child) in node.children() {
            tally.credit(name, child.self_count());
            descend(child, tally);
        }
    }
    let roots = find_roots(tree, &config.root);
    let mut tally = Tally::new(config);
    let mut denominator = 0;
    for root in &roots {
        denominator += root.node.count();
        tally.own_self += root.node.self_count();
        descend(root.node, &mut tally);
    }
    tally.finish(denominator, roots.len())
}

/// Runs the aggregation selected by `config.mode`.
pub fn aggregate(
    tree: &CallTree,
    config: &AnalysisConfig,
) -> Result<CategoryBreakdown, AnalysisError> {
    match config.mode {
        Mode::Children => aggregate_children(tree, config),
        Mode::Flatten => aggregate_flat(tree, config),
    }
}

/// Breakdowns for several runs sharing one category axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BreakdownTable {
    /// Union of categories across runs: whitelist order, then
    /// `uncategorized`, then `self`.
    pub categories: Vec<String>,
    /// One row per run, in input order. Every row has one entry per
    /// category, in `categories` order, zero-padded.
    pub rows: Vec<(RunLabel, CategoryBreakdown)>,
}

impl BreakdownTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Builds a table from independent breakdowns, padding every row to the
    /// union of categories. `order` lists categories known up front.
    pub fn from_rows(
        order: &[&str],
        rows: Vec<(RunLabel, CategoryBreakdown)>,
    ) -> Result<Self, AnalysisError> {
        let mut seen = BTreeSet::new();
        for (label, _) in &rows {
            if !seen.insert(label.as_str()) {
                return Err(AnalysisError::DuplicateLabel(label.to_string()));
            }
        }
        let mut categories: Vec<String> = Vec::new();
        let present = |cat: &str| rows.iter().any(|(_, b)| b.get(cat).is_some());
        for cat in order {
            if present(cat) && !categories.iter().any(|c| c == cat) {
                categories.push(cat.to_string());
            }
        }
        // Categories not announced in `order` keep row order of appearance.
        for (_, b) in &rows {
            for e in &b.entries {
                let reserved = e.category == UNCATEGORIZED_CATEGORY || e.category == SELF_CATEGORY;
                if !reserved && !categories.contains(&e.category) {
                    categories.push(e.category.clone());
                }
            }
        }
        for cat in [UNCATEGORIZED_CATEGORY, SELF_CATEGORY] {
            if present(cat) {
                categories.push(cat.to_string());
            }
        }
        let rows = rows
            .into_iter()
            .map(|(label, mut b)| {
                b.entries = categories
                    .iter()
                    .map(|cat| {
                        b.get(cat).cloned().unwrap_or(BreakdownEntry {
                            category: cat.clone(),
                            count: 0,
                            percent: 0.0,
                        })
                    })
                    .collect();
                (label, b)
            })
            .collect();
        Ok(BreakdownTable { categories, rows })
    }
}

/// Analyzes every run with the same config. Runs are independent and are
/// processed in parallel when the `parallel` feature is on.
pub fn breakdown_for_runs(
    runs: &[(RunLabel, CallTree)],
    config: &AnalysisConfig,
) -> Result<BreakdownTable, AnalysisError> {
    let mut seen = BTreeSet::new();
    for (label, _) in runs {
        if !seen.insert(label.as_str()) {
            return Err(AnalysisError::DuplicateLabel(label.to_string()));
        }
    }
    let results = crate::par::map_slice(runs, |(label, tree)| {
        aggregate(tree, config).map(|b| (label.clone(), b))
    });
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    BreakdownTable::from_rows(&config.categories(), rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(chains: &[(&[&str], u64)]) -> CallTree {
        let mut t = CallTree::new();
        for (chain, n) in chains {
            t.ingest_n(chain.iter(), *n);
        }
        t
    }

    fn counts(b: &CategoryBreakdown) -> Vec<(&str, u64)> {
        b.entries
            .iter()
            .map(|e| (e.category.as_str(), e.count))
            .collect()
    }

    #[test]
    fn classify_examples() {
        let cfg = AnalysisConfig::new("tick")
            .category("Ruby", "RubyPort::*")
            .deny("pybind11*");
        assert_eq!(
            classify("pybind11::detail::dispatch", &cfg),
            Classification::Denied
        );
        assert_eq!(
            classify("RubyPort::recvAtomic", &cfg),
            Classification::Category("Ruby")
        );
        assert_eq!(classify("helper", &cfg), Classification::Uncategorized);
    }

    #[test]
    fn deny_beats_whitelist_and_first_whitelist_wins() {
        let cfg = AnalysisConfig::new("r")
            .category("First", "a*")
            .category("Second", "ab*")
            .deny("abc");
        assert_eq!(classify("abc", &cfg), Classification::Denied);
        assert_eq!(classify("abd", &cfg), Classification::Category("First"));
    }

    #[test]
    fn find_roots_at_two_locations() {
        let t = tree(&[
            (&["main", "sim", "tick", "x"], 3),
            (&["main", "loop", "tick"], 2),
        ]);
        let roots = find_roots(&t, &Pattern::new("tick"));
        assert_eq!(roots.len(), 2);
        let total: u64 = roots.iter().map(|r| r.node.count()).sum();
        assert_eq!(total, 5);
        assert!(find_roots(&t, &Pattern::new("nothing")).is_empty());
    }

    #[test]
    fn find_roots_outermost_only() {
        let t = tree(&[(&["a", "b", "a", "c"], 1)]);
        let roots = find_roots(&t, &Pattern::new("a"));
        assert_eq!(roots.len(), 1);
        assert_eq!(roots[0].depth, 0);
    }

    #[test]
    fn children_mode_single_root() {
        let t = tree(&[(&["tick", "X"], 60), (&["tick", "Y"], 30), (&["tick"], 10)]);
        let cfg = AnalysisConfig::new("tick").category("A", "X").category("B", "Y");
        let b = aggregate_children(&t, &cfg).unwrap();
        assert_eq!(counts(&b), [("A", 60), ("B", 30), ("self", 10)]);
        assert_eq!(b.denominator, 100);
        assert_eq!(b.get("A").unwrap().percent, 60.0);
        assert_eq!(b.get("B").unwrap().percent, 30.0);
        assert_eq!(b.get("self").unwrap().percent, 10.0);
    }

    #[test]
    fn children_mode_sums_across_roots() {
        let t = tree(&[
            (&["main", "tick", "mem"], 4),
            (&["main", "tick", "cpu"], 1),
            (&["main", "other", "tick", "mem"], 3),
        ]);
        let cfg = AnalysisConfig::new("tick")
            .category("Mem", "mem")
            .category("Cpu", "cpu");
        let b = aggregate_children(&t, &cfg).unwrap();
        assert_eq!(b.matched_roots, 2);
        assert_eq!(b.denominator, 8);
        assert_eq!(counts(&b), [("Mem", 7), ("Cpu", 1)]);
    }

    #[test]
    fn all_children_denied_leaves_only_self() {
        let t = tree(&[(&["tick", "pybind11::a"], 6), (&["tick"], 4)]);
        let cfg = AnalysisConfig::new("tick").deny("pybind11*");
        let b = aggregate_children(&t, &cfg).unwrap();
        assert_eq!(counts(&b), [("self", 4)]);
        assert_eq!(b.denied, 6);
        assert_eq!(b.percent_total(), 40.0);
    }

    #[test]
    fn uncategorized_bucket_and_error_policy() {
        let t = tree(&[(&["tick", "helper"], 2), (&["tick", "known"], 1)]);
        let cfg = AnalysisConfig::new("tick").category("K", "known");
        let b = aggregate_children(&t, &cfg).unwrap();
        assert_eq!(counts(&b), [("K", 1), ("uncategorized", 2)]);
        assert_eq!(b.uncategorized_names, ["helper"]);

        let strict = cfg.uncategorized(UncategorizedPolicy::Error);
        assert_eq!(
            aggregate_children(&t, &strict),
            Err(AnalysisError::UncategorizedFound(vec!["helper".into()]))
        );
    }

    #[test]
    fn flatten_single_leaf_chain() {
        let t = tree(&[(&["root", "a", "b"], 10)]);
        let cfg = AnalysisConfig::new("root")
            .category("A", "a")
            .category("B", "b")
            .mode(Mode::Flatten);
        let b = aggregate_flat(&t, &cfg).unwrap();
        assert_eq!(counts(&b), [("B", 10)]);
        assert_eq!(b.get("B").unwrap().percent, 100.0);
    }

    #[test]
    fn flatten_attributes_interior_self_time() {
        // root{10}: a{6} -> b{4}; c{4}
        let t = tree(&[(&["root", "a", "b"], 4), (&["root", "a"], 2), (&["root", "c"], 4)]);
        let cfg = AnalysisConfig::new("root")
            .category("A", "a")
            .category("B", "b")
            .category("C", "c");
        let b = aggregate_flat(&t, &cfg).unwrap();
        assert_eq!(counts(&b), [("A", 2), ("B", 4), ("C", 4)]);
        let pct: Vec<f64> = b.entries.iter().map(|e| e.percent).collect();
        assert_eq!(pct, [20.0, 40.0, 40.0]);
    }

    #[test]
    fn empty_tree_gives_empty_breakdown() {
        let b = aggregate(&CallTree::new(), &AnalysisConfig::new("x")).unwrap();
        assert!(b.entries.is_empty());
        assert_eq!(b.denominator, 0);
        assert_eq!(b.matched_roots, 0);
    }

    #[test]
    fn table_pads_missing_categories() {
        let cfg = AnalysisConfig::new("r").category("A", "a").category("B", "b");
        let with_b = tree(&[(&["r", "a"], 1), (&["r", "b"], 1)]);
        let without_b = tree(&[(&["r", "a"], 2)]);
        let runs = vec![
            (RunLabel::new("1AS3r"), with_b.clone()),
            (RunLabel::new("4O38"), without_b.clone()),
        ];
        let table = breakdown_for_runs(&runs, &cfg).unwrap();
        assert_eq!(table.categories, ["A", "B"]);
        let row = &table.rows[1].1;
        assert_eq!(row.entries[1].category, "B");
        assert_eq!(row.entries[1].count, 0);
        assert_eq!(row.entries[1].percent, 0.0);
        // Per-run values equal independent analyses.
        let lone = aggregate_children(&with_b, &cfg).unwrap();
        assert_eq!(table.rows[0].1, lone);
    }

    #[test]
    fn table_rejects_duplicate_labels() {
        let cfg = AnalysisConfig::new("r");
        let t = tree(&[(&["r"], 1)]);
        let runs = vec![(RunLabel::new("x"), t.clone()), (RunLabel::new("x"), t)];
        assert_eq!(
            breakdown_for_runs(&runs, &cfg),
            Err(AnalysisError::DuplicateLabel("x".into()))
        );
    }
}
