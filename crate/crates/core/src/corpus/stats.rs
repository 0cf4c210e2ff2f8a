use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Sentence;
use crate::eval::{extract_entities, RepairMode};

/// Size and annotation counts of a list of sentences.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sentence_count: usize,
    pub token_count: usize,
    pub annotation_count: usize,
    pub per_type: BTreeMap<String, usize>,
}

impl CorpusStats {
    /// `key value` lines, per-type counts as `annotations[Type] n`.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "sentences {}", self.sentence_count);
        let _ = writeln!(out, "tokens {}", self.token_count);
        let _ = writeln!(out, "annotations {}", self.annotation_count);
        for (ty, n) in &self.per_type {
            let _ = writeln!(out, "annotations[{ty}] {n}");
        }
        out
    }

    pub fn merge(&mut self, other: &CorpusStats) {
        self.sentence_count += other.sentence_count;
        self.token_count += other.token_count;
        self.annotation_count += other.annotation_count;
        for (ty, n) in &other.per_type {
            *self.per_type.entry(ty.clone()).or_default() += n;
        }
    }
}

/// Counts sentences, tokens, and entity annotations (maximal `B (I)*` chains).
pub fn corpus_stats(sentences: &[Sentence]) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for s in sentences {
        stats.sentence_count += 1;
        stats.token_count += s.len();
        let (spans, _) = extract_entities(&s.tags(), RepairMode::NewSpan);
        for span in spans {
            stats.annotation_count += 1;
            *stats.per_type.entry(span.entity_type).or_default() += 1;
        }
    }
    stats
}
