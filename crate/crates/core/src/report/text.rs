use super::{flat_rows, format_percent};
use crate::analyze::BreakdownTable;

const BOLD: &str = "\x1b[1m";
const RESET: &str = "\x1b[0m";

/// Aligned monospace table with the same rows as the CSV. Text columns are
/// left-aligned, numbers right-aligned. `ansi` bolds the header.
pub fn emit_text_table(table: &BreakdownTable, ansi: bool) -> String {
    let header = ["label", "category", "count", "percent"];
    let body: Vec<[String; 4]> = flat_rows(table)
        .into_iter()
        .map(|(label, cat, count, den)| {
            [
                label.to_string(),
                cat.to_string(),
                count.to_string(),
                format_percent(count, den),
            ]
        })
        .collect();

    let mut widths = header.map(|h| h.chars().count());
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }

    let render = |cells: [&str; 4]| -> String {
        let mut line = String::new();
        for (i, (cell, width)) in cells.iter().zip(widths).enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            let pad = width - cell.chars().count();
            if i >= 2 {
                line.extend(std::iter::repeat_n(' ', pad));
                line.push_str(cell);
            } else {
                line.push_str(cell);
                if i < 3 {
                    line.extend(std::iter::repeat_n(' ', pad));
                }
            }
        }
        line.truncate(line.trim_end().len());
        line
    };

    let mut out = String::new();
    let head = render(header);
    if ansi {
        out.push_str(BOLD);
        out.push_str(&head);
        out.push_str(RESET);
    } else {
        out.push_str(&head);
    }
    out.push('\n');
    let rule_len: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    out.push_str(&"-".repeat(rule_len));
    out.push('\n');
    for row in &body {
        out.push_str(&render([&row[0], &row[1], &row[2], &row[3]]));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyze::{BreakdownEntry, CategoryBreakdown};
    use crate::layout::RunLabel;

    fn table(rows: &[(&str, &[(&str, u64)], u64)]) -> BreakdownTable {
        let order: Vec<&str> = rows
            .iter()
            .flat_map(|(_, e, _)| e.iter().map(|(c, _)| *c))
            .collect();
        BreakdownTable::from_rows(
            &order,
            rows.iter()
                .map(|(label, entries, den)| {
                    (
                        RunLabel::new(*label),
                        CategoryBreakdown {
                            entries: entries
                                .iter()
                                .map(|(c, n)| BreakdownEntry {
                                    category: c.to_string(),
                                    count: *n,
                                    percent: 0.0,
                                })
                                .collect(),
                            denominator: *den,
                            matched_roots: 1,
                            denied: 0,
                            uncategorized_names: vec![],
                        },
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_cell_is_three_lines() {
        let out = emit_text_table(&table(&[("1AS3r", &[("A", 60)], 100)]), false);
        assert_eq!(
            out,
            "label  category  count  percent\n\
             -------------------------------\n\
             1AS3r  A            60    60.00\n"
        );
        assert_eq!(out.lines().count(), 3);
    }

    #[test]
    fn widths_fit_widest_cell() {
        let out = emit_text_table(
            &table(&[("16TS16r", &[("RubySystem", 123456), ("B", 1)], 123457)]),
            false,
        );
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "label    category     count  percent");
        assert_eq!(lines[2], "16TS16r  RubySystem  123456   100.00");
        assert_eq!(lines[3], "16TS16r  B                1     0.00");
        assert_eq!(lines[1].len(), 36);
    }

    #[test]
    fn deterministic_and_ansi_only_in_header() {
        let t = table(&[("r", &[("A", 1)], 2)]);
        assert_eq!(emit_text_table(&t, false), emit_text_table(&t, false));
        let colored = emit_text_table(&t, true);
        assert!(colored.starts_with(BOLD));
        assert_eq!(colored.matches(BOLD).count(), 1);
        assert!(!emit_text_table(&t, false).contains('\x1b'));
    }
}
