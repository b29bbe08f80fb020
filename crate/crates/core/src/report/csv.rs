use std::borrow::Cow;

use super::{flat_rows, format_percent};
use crate::analyze::BreakdownTable;

fn field(s: &str) -> Cow<'_, str> {
    if s.contains([',', '"', '\n', '\r']) {
        Cow::Owned(format!("\"{}\"", s.replace('"', "\"\"")))
    } else {
        Cow::Borrowed(s)
    }
}

/// `label,category,count,percent`, one row per (run, category), `\n` line
/// endings, fields quoted only when needed.
pub fn emit_csv(table: &BreakdownTable) -> String {
    let mut out = String::from("label,category,count,percent\n");
    for (label, category, count, denominator) in flat_rows(table) {
        out.push_str(&field(label));
        out.push(',');
        out.push_str(&field(category));
        out.push(',');
        out.push_str(&count.to_string());
        out.push(',');
        out.push_str(&format_percent(count, denominator));
        out.push('\n');
    }
    out
}
