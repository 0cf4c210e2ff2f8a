use std::fmt::Write as _;
use std::str::FromStr;

use rust_decimal::{Decimal, RoundingStrategy};
use serde_json::{json, Value};

use super::{Counts, EvalReport, Scores};

/// A ratio in `[0, 1]` as a percentage with two decimals, rounding half away
/// from zero on the shortest decimal representation of the ratio
/// (`0.90165` renders as `90.17`).
pub fn format_percent(ratio: f64) -> String {
    let shortest = format!("{ratio}");
    match Decimal::from_str(&shortest) {
        Ok(d) => {
            let pct = (d * Decimal::ONE_HUNDRED)
                .round_dp_with_strategy(2, RoundingStrategy::MidpointAwayFromZero);
            format!("{pct:.2}")
        }
        Err(_) => format!("{:.2}", ratio * 100.0),
    }
}

fn cell(value: f64, undefined: bool) -> String {
    let mut s = format_percent(value);
    if undefined {
        s.push('*');
    }
    s
}

fn row(out: &mut String, name: &str, counts: Option<&Counts>, s: &Scores) {
    let (tp, fp, fn_) = match counts {
        Some(c) => (c.tp.to_string(), c.fp.to_string(), c.fn_.to_string()),
        None => Default::default(),
    };
    let _ = writeln!(
        out,
        "{name:<20} {tp:>7} {fp:>7} {fn_:>7} {:>8} {:>8} {:>8}",
        cell(s.precision, s.precision_undefined),
        cell(s.recall, s.recall_undefined),
        cell(s.f1, s.precision_undefined && s.recall_undefined),
    );
}

/// Fixed-width table: one row per entity type, then micro and macro rows.
pub fn render_text(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<20} {:>7} {:>7} {:>7} {:>8} {:>8} {:>8}",
        "type", "TP", "FP", "FN", "P", "R", "F"
    );
    for (ty, c) in &report.per_type {
        row(&mut out, ty, Some(c), &c.scores());
    }
    let _ = writeln!(out, "{}", "-".repeat(71));
    let micro = report.micro_scores();
    let macro_ = report.macro_scores();
    row(&mut out, "micro", Some(&report.micro), &micro);
    row(&mut out, "macro", None, &macro_);
    let flagged = [micro, macro_]
        .iter()
        .chain(report.per_type.values().map(|c| c.scores()).collect::<Vec<_>>().iter())
        .any(|s| s.precision_undefined || s.recall_undefined);
    if flagged {
        let _ = writeln!(out, "* undefined (zero denominator), reported as 0.00");
    }
    if report.repairs > 0 {
        let _ = writeln!(out, "repaired orphan I- tags: {}", report.repairs);
    }
    out
}

fn counts_json(c: &Counts) -> Value {
    let s = c.scores();
    let mut v = json!({
        "tp": c.tp, "fp": c.fp, "fn": c.fn_,
        "p": s.precision, "r": s.recall, "f1": s.f1,
    });
    add_flags(&mut v, &s);
    v
}

fn add_flags(v: &mut Value, s: &Scores) {
    let mut undefined = Vec::new();
    if s.precision_undefined {
        undefined.push("p");
    }
    if s.recall_undefined {
        undefined.push("r");
    }
    if !undefined.is_empty() {
        v["undefined"] = json!(undefined);
    }
}

/// `{types: {name: {tp, fp, fn, p, r, f1}}, micro: {...}, macro: {p, r, f1}, repairs}`.
/// Ratios are in `[0, 1]`; an `undefined` list names any 0/0 ratios.
pub fn render_json(report: &EvalReport) -> Value {
    let types: serde_json::Map<String, Value> = report
        .per_type
        .iter()
        .map(|(k, c)| (k.clone(), counts_json(c)))
        .collect();
    let m = report.macro_scores();
    let mut macro_ = json!({"p": m.precision, "r": m.recall, "f1": m.f1});
    add_flags(&mut macro_, &m);
    json!({
        "types": types,
        "micro": counts_json(&report.micro),
        "macro": macro_,
        "repairs": report.repairs,
    })
}
