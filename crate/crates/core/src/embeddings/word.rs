use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EmbeddingError;
use crate::numerics::{Array, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    Zero,
    /// Try the exact word, then its lowercase form, then zero.
    #[default]
    LowercaseThenZero,
}

/// Pretrained word vectors. Frozen during tagger training.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddingTable {
    vocab: HashMap<String, usize>,
    words: Vec<String>,
    vectors: Array,
    oov_policy: OovPolicy,
}

impl WordEmbeddingTable {
    /// `vectors` has one row per entry of `words`.
    pub fn new(words: Vec<String>, vectors: Array, oov_policy: OovPolicy) -> WordEmbeddingTable {
        assert_eq!(words.len(), vectors.rows(), "one vector row per word");
        assert!(vectors.cols() > 0, "word vectors need a positive dimension");
        let vocab = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        WordEmbeddingTable {
            vocab,
            words,
            vectors,
            oov_policy,
        }
    }

    /// A table with no words; every lookup resolves to the zero vector.
    pub fn empty(dim: usize) -> WordEmbeddingTable {
        assert!(dim > 0, "word vectors need a positive dimension");
        WordEmbeddingTable {
            vocab: HashMap::new(),
            words: Vec::new(),
            vectors: Array::zeros(Shape::Matrix(0, dim)),
            oov_policy: OovPolicy::Zero,
        }
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vectors(&self) -> &Array {
        &self.vectors
    }

    pub fn vectors_mut(&mut self) -> &mut Array {
        &mut self.vectors
    }

    pub fn oov_policy(&self) -> OovPolicy {
        self.oov_policy
    }

    pub fn set_oov_policy(&mut self, policy: OovPolicy) {
        self.oov_policy = policy;
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        match self.vocab.get(word) {
            Some(&i) => Some(i),
            None => match self.oov_policy {
                OovPolicy::Zero => None,
                OovPolicy::LowercaseThenZero => self.vocab.get(&word.to_lowercase()).copied(),
            },
        }
    }

    /// Never fails: unresolved words map to the zero vector.
    pub fn lookup(&self, word: &str) -> Array {
        match self.index_of(word) {
            Some(i) => Array::vector(self.vectors.row(i).to_vec()),
            None => Array::zeros(Shape::Vector(self.dim())),
        }
    }
}

/// Reads `word v1 … vd` lines. Blank lines are skipped.
pub fn load_word_vectors(text: &str, oov_policy: OovPolicy) -> Result<WordEmbeddingTable, EmbeddingError> {
    let mut words = Vec::new();
    let mut data = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut dim = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let word = fields.next().expect("non-blank line has a field");
        let values = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| EmbeddingError::Parse {
                    line: line_no,
                    message: format!("`{f}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err(EmbeddingError::Parse {
                line: line_no,
                message: "word has no vector components".into(),
            });
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(EmbeddingError::Parse {
                    line: line_no,
                    message: format!("expected {d} components, found {}", values.len()),
                })
            }
            Some(_) => {}
        }
        if let Some(first) = seen.get(word) {
            log::warn!("line {line_no}: duplicate word `{word}` ignored (first seen on line {first})");
            continue;
        }
        seen.insert(word, line_no);
        words.push(word.to_string());
        data.extend(values);
    }
    let dim = dim.ok_or(EmbeddingError::Empty("word vector file"))?;
    let rows = words.len();
    Ok(WordEmbeddingTable::new(words, Array::matrix(rows, dim, data), oov_policy))
}
