use std::fmt::Write;

use super::{check_labels, color_for, format_percent, ChartSpec, ReportError};
use crate::analyze::BreakdownTable;

const PLOT_HEIGHT: f64 = 300.0;
const TOP: f64 = 60.0;
const LEFT: f64 = 60.0;
const BAR_WIDTH: f64 = 40.0;
const BAR_GAP: f64 = 24.0;
const LEGEND_ROW: f64 = 18.0;
const LEGEND_WIDTH: f64 = 220.0;
const REMAINDER: &str = "other";

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Rounds to the two decimals the document is written with.
fn px(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Stacked bars, one per run in table order, one segment per category in
/// stacking order. Whatever the categories leave short of 100% (denied
/// samples, or an empty run) is drawn as a hatched `other` segment on top.
pub fn emit_stacked_bars(table: &BreakdownTable, spec: &ChartSpec) -> Result<String, ReportError> {
    if table.rows.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    check_labels(table)?;
    let order = spec.order(table)?;

    let bars = table.rows.len() as f64;
    let plot_width = bars * (BAR_WIDTH + BAR_GAP) + BAR_GAP;
    let legend_x = LEFT + plot_width + 20.0;
    let width = legend_x + LEGEND_WIDTH;
    let legend_height = (order.len() + 1) as f64 * LEGEND_ROW;
    let height = (TOP + PLOT_HEIGHT + 50.0).max(TOP + legend_height + 20.0);
    let base = TOP + PLOT_HEIGHT;

    let mut svg = String::new();
    let w = &mut svg;
    // Writing to a String cannot fail.
    let _ = writeln!(w, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        w,
        r##"<defs><pattern id="hatch" patternUnits="userSpaceOnUse" width="6" height="6" patternTransform="rotate(45)"><rect width="6" height="6" fill="#ffffff"/><line x1="0" y1="0" x2="0" y2="6" stroke="#999999" stroke-width="2"/></pattern></defs>"##
    );
    let _ = writeln!(w, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="30" text-anchor="middle" font-size="16">{}</text>"#,
        LEFT + plot_width / 2.0,
        esc(&spec.title)
    );

    for tick in [0u32, 25, 50, 75, 100] {
        let y = base - PLOT_HEIGHT * tick as f64 / 100.0;
        let _ = writeln!(
            w,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + plot_width
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{tick}%</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }

    let mut any_remainder = false;
    for (i, (label, breakdown)) in table.rows.iter().enumerate() {
        let x = LEFT + BAR_GAP + i as f64 * (BAR_WIDTH + BAR_GAP);
        let den = breakdown.denominator;
        let frac = |count: u64| {
            if den == 0 {
                0.0
            } else {
                PLOT_HEIGHT * count as f64 / den as f64
            }
        };
        let _ = writeln!(w, r#"<g class="bar" data-label="{}">"#, esc(label.as_str()));
        let mut cumulative = 0u64;
        for (ci, cat) in order.iter().enumerate() {
            let count = breakdown.count_of(cat);
            let lo = px(frac(cumulative));
            cumulative += count;
            let hi = px(frac(cumulative));
            let _ = writeln!(
                w,
                r#"<rect class="segment" data-category="{cat}" x="{x:.2}" y="{:.2}" width="{BAR_WIDTH:.2}" height="{:.2}" fill="{}"><title>{} {cat}: {}%</title></rect>"#,
                base - hi,
                hi - lo,
                color_for(ci),
                esc(label.as_str()),
                format_percent(count, den),
                cat = esc(cat),
            );
        }
        let top = px(frac(cumulative));
        if den == 0 || cumulative < den {
            any_remainder = true;
            let rest = if den == 0 {
                "100.00".to_string()
            } else {
                format_percent(den - cumulative, den)
            };
            let _ = writeln!(
                w,
                r##"<rect class="remainder" x="{x:.2}" y="{:.2}" width="{BAR_WIDTH:.2}" height="{:.2}" fill="url(#hatch)" stroke="#999999"><title>{} {REMAINDER}: {rest}%</title></rect>"##,
                TOP,
                PLOT_HEIGHT - top,
                esc(label.as_str()),
            );
        }
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x + BAR_WIDTH / 2.0,
            base + 18.0,
            esc(label.as_str())
        );
        let _ = writeln!(w, "</g>");
    }

    let _ = writeln!(w, r#"<g class="legend">"#);
    for (ci, cat) in order.iter().rev().enumerate() {
        let color_idx = order.len() - 1 - ci;
        legend_row(w, legend_x, TOP + ci as f64 * LEGEND_ROW, color_for(color_idx), cat);
    }
    if any_remainder {
        legend_row(
            w,
            legend_x,
            TOP + order.len() as f64 * LEGEND_ROW,
            "url(#hatch)",
            REMAINDER,
        );
    }
    let _ = writeln!(w, "</g>");
    let _ = writeln!(w, "</svg>");
    Ok(svg)
}

fn legend_row(w: &mut String, x: f64, y: f64, fill: &str, text: &str) {
    let _ = writeln!(
        w,
        r##"<rect x="{x:.2}" y="{y:.2}" width="12" height="12" fill="{fill}" stroke="#999999"/><text x="{:.2}" y="{:.2}">{}</text>"##,
        x + 18.0,
        y + 10.0,
        esc(text)
    );
}
