//! BiLSTM-CRF sequence tagging over contextual character-LM and word
//! embeddings, with IOB2 corpora and exact-match entity evaluation.

pub mod checkpoint;
pub mod corpus;
pub mod crf;
pub mod embeddings;
pub mod eval;
pub mod numerics;
pub mod tagger;
