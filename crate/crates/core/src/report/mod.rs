//! Rendering of breakdown tables: stacked-bar SVG, CSV and aligned text.
//!
//! Every emitter is a pure function of its inputs; the same table always
//! renders to the same bytes.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::analyze::BreakdownTable;

mod csv;
mod svg;
mod text;

pub use self::csv::emit_csv;
pub use self::svg::emit_stacked_bars;
pub use self::text::emit_text_table;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReportError {
    #[error("nothing to chart")]
    EmptyInput,
    #[error("duplicate run label `{0}`")]
    DuplicateLabel(String),
    #[error("category `{0}` is missing from the chart's category order")]
    MissingCategory(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Svg,
    Csv,
    Txt,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "svg" => Ok(OutputFormat::Svg),
            "csv" => Ok(OutputFormat::Csv),
            "txt" => Ok(OutputFormat::Txt),
            other => Err(format!("unknown format `{other}` (expected svg, csv or txt)")),
        }
    }
}

/// Fixed palette; category `i` gets `PALETTE[i % 12]`.
pub const PALETTE: [&str; 12] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
    "#9c755f", "#bab0ac", "#86bcb6", "#d37295",
];

pub fn color_for(index: usize) -> &'static str {
    PALETTE[index % PALETTE.len()]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChartSpec {
    pub title: String,
    /// Stacking order, bottom first. Empty means the table's own order.
    pub category_order: Vec<String>,
    pub format: OutputFormat,
}

impl ChartSpec {
    pub fn new(title: impl Into<String>) -> Self {
        ChartSpec {
            title: title.into(),
            category_order: Vec::new(),
            format: OutputFormat::Svg,
        }
    }

    fn order<'a>(&'a self, table: &'a BreakdownTable) -> Result<Vec<&'a str>, ReportError> {
        if self.category_order.is_empty() {
            return Ok(table.categories.iter().map(String::as_str).collect());
        }
        for cat in &table.categories {
            if !self.category_order.contains(cat) {
                return Err(ReportError::MissingCategory(cat.clone()));
            }
        }
        Ok(self.category_order.iter().map(String::as_str).collect())
    }
}

/// Renders in the format named by `spec.format`.
pub fn render(table: &BreakdownTable, spec: &ChartSpec, ansi: bool) -> Result<String, ReportError> {
    match spec.format {
        OutputFormat::Svg => emit_stacked_bars(table, spec),
        OutputFormat::Csv => Ok(emit_csv(table)),
        OutputFormat::Txt => Ok(emit_text_table(table, ansi)),
    }
}

fn check_labels(table: &BreakdownTable) -> Result<(), ReportError> {
    let mut seen = BTreeSet::new();
    for (label, _) in &table.rows {
        if !seen.insert(label.as_str()) {
            return Err(ReportError::DuplicateLabel(label.to_string()));
        }
    }
    Ok(())
}

/// `100 * count / denominator` with two decimals, rounded half to even on
/// the exact rational value. A zero denominator prints `0.00`.
pub fn format_percent(count: u64, denominator: u64) -> String {
    if denominator == 0 {
        return "0.00".to_string();
    }
    let num = count as u128 * 10_000;
    let den = denominator as u128;
    let mut q = num / den;
    let twice_r = 2 * (num % den);
    if twice_r > den || (twice_r == den && q % 2 == 1) {
        q += 1;
    }
    format!("{}.{:02}", q / 100, q % 100)
}

/// One output row: `(label, category, count, denominator)`, sorted by label
/// then table category order.
fn flat_rows(table: &BreakdownTable) -> Vec<(&str, &str, u64, u64)> {
    let mut rows: Vec<(&str, &crate::analyze::CategoryBreakdown)> =
        table.rows.iter().map(|(l, b)| (l.as_str(), b)).collect();
    rows.sort_by(|a, b| a.0.cmp(b.0));
    let mut out = Vec::new();
    for (label, breakdown) in rows {
        for cat in &table.categories {
            let count = breakdown.count_of(cat);
            out.push((label, cat.as_str(), count, breakdown.denominator));
        }
    }
    out
}
