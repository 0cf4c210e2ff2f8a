//! IOB2-tagged corpora: data model, CoNLL ingestion, scheme validation,
//! length windowing, and annotation statistics.

mod conll;
mod stats;
mod tag;
mod window;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use conll::{
    discover_scheme, parse_conll, write_conll, ColumnSpec, Delimiter, IobMode, ParseOptions,
    TagColumn,
};
pub use stats::{corpus_stats, CorpusStats};
pub use tag::{MalformedTag, Tag, TagScheme};
pub use window::{window_long_sentences, window_sentence};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: tag `{tag}` is not in the tag scheme")]
    UnknownTag { line: usize, tag: String },
    #[error("line {line}: `{tag}` does not continue an entity of the same type")]
    SchemeViolation { line: usize, tag: String },
    #[error("{split} split is empty")]
    EmptySplit { split: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub tag: Tag,
}

impl Token {
    pub fn new(text: impl Into<String>, tag: Tag) -> Token {
        Token {
            text: text.into(),
            tag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Sentence {
    tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Sentence {
        Sentence { tokens }
    }

    /// Builds a sentence from parallel word and tag-string slices.
    ///
    /// Panics on a malformed tag; meant for fixtures and tests.
    pub fn from_pairs(words: &[&str], tags: &[&str]) -> Sentence {
        assert_eq!(words.len(), tags.len());
        Sentence::new(
            words
                .iter()
                .zip(tags)
                .map(|(w, t)| Token::new(*w, t.parse().expect("valid tag")))
                .collect(),
        )
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    pub fn tags(&self) -> Vec<Tag> {
        self.tokens.iter().map(|t| t.tag.clone()).collect()
    }

    /// Same tokens, different tags.
    pub fn with_tags(&self, tags: &[Tag]) -> Sentence {
        assert_eq!(tags.len(), self.len());
        Sentence::new(
            self.tokens
                .iter()
                .zip(tags)
                .map(|(t, tag)| Token::new(t.text.clone(), tag.clone()))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub position: usize,
    pub reason: String,
}

/// Every position whose tag is outside the inventory or breaks the IOB2
/// continuation rule. Empty iff the sentence is scheme-valid.
pub fn validate_scheme(sentence: &Sentence, scheme: &TagScheme) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut prev: Option<&Tag> = None;
    for (i, tok) in sentence.tokens().iter().enumerate() {
        if !scheme.contains(&tok.tag) {
            out.push(Violation {
                position: i,
                reason: format!("tag `{}` is not in the inventory", tok.tag),
            });
        } else if !TagScheme::allows(prev, &tok.tag) {
            let after = prev.map_or_else(|| "sentence start".to_string(), |p| format!("`{p}`"));
            out.push(Violation {
                position: i,
                reason: format!("`{}` cannot follow {after}", tok.tag),
            });
        }
        prev = Some(&tok.tag);
    }
    out
}

/// Train/dev/test splits over one tag scheme.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Vec<Sentence>,
    pub scheme: TagScheme,
}

impl Corpus {
    /// Train and dev must be non-empty to fit a model.
    pub fn check_trainable(&self) -> Result<(), CorpusError> {
        if self.train.is_empty() {
            return Err(CorpusError::EmptySplit { split: "train" });
        }
        if self.dev.is_empty() {
            return Err(CorpusError::EmptySplit { split: "dev" });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d() -> TagScheme {
        TagScheme::new(["D", "C"])
    }

    #[test]
    fn valid_chain_has_no_violations() {
        let s = Sentence::from_pairs(&["a", "b", "c"], &["B-D", "I-D", "O"]);
        assert!(validate_scheme(&s, &d()).is_empty());
    }

    #[test]
    fn inside_without_begin() {
        let s = Sentence::from_pairs(&["a", "b"], &["O", "I-D"]);
        let v = validate_scheme(&s, &d());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].position, 1);
    }

    #[test]
    fn type_switch_inside_chain() {
        let s = Sentence::from_pairs(&["a", "b"], &["B-D", "I-C"]);
        let v = validate_scheme(&s, &d());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].position, 1);
    }

    #[test]
    fn leading_inside_and_unknown_type() {
        let s = Sentence::from_pairs(&["a", "b"], &["I-D", "B-X"]);
        let v = validate_scheme(&s, &d());
        assert_eq!(v.iter().map(|v| v.position).collect::<Vec<_>>(), [0, 1]);
    }

    /// Exhaustive check of the IOB2 transition table over a two-type scheme.
    #[test]
    fn pairwise_legality_matches_enumeration() {
        let scheme = d();
        for a in scheme.tags() {
            for b in scheme.tags() {
                let s = Sentence::new(vec![Token::new("x", a.clone()), Token::new("y", b.clone())]);
                let first_ok = !a.is_inside();
                let second_ok = match b {
                    Tag::Inside(t) => a.entity_type() == Some(t.as_str()),
                    _ => true,
                };
                let expected = usize::from(!first_ok) + usize::from(!second_ok);
                assert_eq!(validate_scheme(&s, &scheme).len(), expected, "{a} {b}");
            }
        }
    }

    #[test]
    fn empty_splits_are_rejected() {
        let mut c = Corpus {
            train: vec![Sentence::from_pairs(&["a"], &["O"])],
            dev: vec![],
            test: vec![],
            scheme: d(),
        };
        assert_eq!(c.check_trainable(), Err(CorpusError::EmptySplit { split: "dev" }));
        c.dev = c.train.clone();
        assert!(c.check_trainable().is_ok());
    }
}
