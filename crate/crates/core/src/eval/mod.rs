//! Exact-match entity evaluation.
//!
//! A predicted entity is a true positive only when its type, first token and
//! last token all equal those of a gold entity. Precision, recall and F1 are
//! pooled over entity instances (micro) and also averaged over types (macro).

mod files;
mod render;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Tag;

pub use files::{read_aligned_pair, read_three_column, AlignmentError};
pub use render::{format_percent, render_json, render_text};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub entity_type: String,
    /// First token, inclusive.
    pub start: usize,
    /// Last token, inclusive.
    pub end: usize,
}

/// Handling of an `I-t` that does not continue a `t` chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairMode {
    /// The orphan opens a new span (conlleval behaviour).
    #[default]
    NewSpan,
    /// The orphan chain is not an entity.
    Drop,
}

/// Maximal `B-t (I-t)*` chains, in order. The second value counts orphan
/// `I-` tags that were repaired or dropped.
pub fn extract_entities(tags: &[Tag], mode: RepairMode) -> (Vec<EntitySpan>, usize) {
    let mut spans = Vec::new();
    let mut repairs = 0;
    // (type, start, keep)
    let mut open: Option<(&str, usize, bool)> = None;
    fn close(open: &mut Option<(&str, usize, bool)>, end: usize, spans: &mut Vec<EntitySpan>) {
        if let Some((ty, start, keep)) = open.take() {
            if keep {
                spans.push(EntitySpan {
                    entity_type: ty.to_string(),
                    start,
                    end,
                });
            }
        }
    }
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            Tag::Outside => close(&mut open, i.wrapping_sub(1), &mut spans),
            Tag::Begin(t) => {
                close(&mut open, i.wrapping_sub(1), &mut spans);
                open = Some((t, i, true));
            }
            Tag::Inside(t) => {
                if open.is_some_and(|(ty, _, _)| ty == t) {
                    continue;
                }
                close(&mut open, i.wrapping_sub(1), &mut spans);
                repairs += 1;
                open = Some((t, i, mode == RepairMode::NewSpan));
            }
        }
    }
    close(&mut open, tags.len().wrapping_sub(1), &mut spans);
    (spans, repairs)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn scores(&self) -> Scores {
        let p_den = self.tp + self.fp;
        let r_den = self.tp + self.fn_;
        let precision = if p_den == 0 { 0.0 } else { self.tp as f64 / p_den as f64 };
        let recall = if r_den == 0 { 0.0 } else { self.tp as f64 / r_den as f64 };
        Scores {
            precision,
            recall,
            f1: f1(precision, recall),
            precision_undefined: p_den == 0,
            recall_undefined: r_den == 0,
        }
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Precision, recall and F1 in `[0, 1]`. A 0/0 ratio is reported as 0 and
/// flagged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_type: BTreeMap<String, Counts>,
    pub micro: Counts,
    pub repairs: usize,
}

impl EvalReport {
    pub fn micro_scores(&self) -> Scores {
        self.micro.scores()
    }

    /// Unweighted mean of per-type precision, recall and F1.
    pub fn macro_scores(&self) -> Scores {
        let n = self.per_type.len();
        if n == 0 {
            return Scores {
                precision_undefined: true,
                recall_undefined: true,
                ..Scores::default()
            };
        }
        let mut out = Scores::default();
        for c in self.per_type.values() {
            let s = c.scores();
            out.precision += s.precision / n as f64;
            out.recall += s.recall / n as f64;
            out.f1 += s.f1 / n as f64;
            out.precision_undefined |= s.precision_undefined;
            out.recall_undefined |= s.recall_undefined;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("gold has {gold} sentences but prediction has {pred}")]
    SentenceCount { gold: usize, pred: usize },
    #[error("sentence {sentence}: gold has {gold} tokens but prediction has {pred}")]
    Length {
        sentence: usize,
        gold: usize,
        pred: usize,
    },
}

/// Scores sentence-aligned predictions against gold tag sequences.
pub fn evaluate(gold: &[Vec<Tag>], pred: &[Vec<Tag>], mode: RepairMode) -> Result<EvalReport, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::SentenceCount {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut per_type: BTreeMap<String, Counts> = BTreeMap::new();
    let mut repairs = 0;
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(EvalError::Length {
                sentence: i,
                gold: g.len(),
                pred: p.len(),
            });
        }
        let (gs, rg) = extract_entities(g, mode);
        let (ps, rp) = extract_entities(p, mode);
        repairs += rg + rp;
        let gset: HashSet<&EntitySpan> = gs.iter().collect();
        let pset: HashSet<&EntitySpan> = ps.iter().collect();
        let types: BTreeSet<&str> = gs.iter().chain(&ps).map(|s| s.entity_type.as_str()).collect();
        for ty in types {
            let c = per_type.entry(ty.to_string()).or_default();
            c.tp += gset.iter().filter(|s| s.entity_type == ty && pset.contains(*s)).count();
            c.fn_ += gset.iter().filter(|s| s.entity_type == ty && !pset.contains(*s)).count();
            c.fp += pset.iter().filter(|s| s.entity_type == ty && !gset.contains(*s)).count();
        }
    }
    let mut micro = Counts::default();
    for c in per_type.values() {
        micro.add(*c);
    }
    Ok(EvalReport {
        per_type,
        micro,
        repairs,
    })
}
