use std::fmt::Write;

use super::EvalReport;
use crate::metrics::Aggregate;

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

/// Fixed-width summary table of an evaluation report, one row per decoder.
/// All figures are percentages; partition columns carry the partition's
/// share of the examples in parentheses.
pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::new();
    let rows: [(&str, Option<&Aggregate>); 3] = [
        ("Greedy", report.greedy.as_ref()),
        ("Exact-Extract", report.exact_extract.as_ref()),
        ("Naive", report.naive.as_ref()),
    ];
    let _ = writeln!(
        out,
        "{:<14} {:>6} {:>6} {:>6} {:>10} {:>9} {:>16} {:>16}",
        "Decoding", "N", "F1", "EM", "Extractive", "Exactness", "S_in F1", "S_out F1"
    );
    let _ = writeln!(out, "{}", "-".repeat(90));
    for (name, agg) in rows {
        let Some(a) = agg else { continue };
        let _ = writeln!(
            out,
            "{:<14} {:>6} {:>6} {:>6} {:>10} {:>9} {:>16} {:>16}",
            name,
            a.count,
            pct(a.f1),
            pct(a.exact_match),
            pct(a.extractiveness),
            a.exactness.map_or_else(|| "-".to_string(), pct),
            format!("{} ({}%)", pct(a.s_in.f1), pct(a.s_in.share)),
            format!("{} ({}%)", pct(a.s_out.f1), pct(a.s_out.share)),
        );
    }
    let _ = writeln!(
        out,
        "processed {} | skipped {} | prompt {}",
        report.processed, report.skipped, report.template_id
    );
    out
}
