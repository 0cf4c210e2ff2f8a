//! Token input vectors: pretrained word vectors concatenated with
//! contextual states of forward and backward character language models.

pub mod charlm;
pub mod pretrain;
pub mod stacked;
pub mod word;

use thiserror::Error;

pub use charlm::{CharLm, CharLmVars, CharVocab, Direction};
pub use pretrain::{lm_stream, pretrain_lm, PretrainConfig, PretrainEpoch, PretrainOutcome};
pub use stacked::{encode_sentence, DropoutScope, StackedEmbedding, StreamLayout};
pub use word::{load_word_vectors, OovPolicy, WordEmbeddingTable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbeddingError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("{0}")]
    Config(String),
    #[error("epoch {epoch}: non-finite gradient in `{parameter}`")]
    NonFinite { epoch: usize, parameter: String },
}
