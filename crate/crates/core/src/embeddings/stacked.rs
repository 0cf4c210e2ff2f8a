use serde::{Deserialize, Serialize};

use super::charlm::{CharLm, CharVocab, Direction};
use super::word::WordEmbeddingTable;
use crate::corpus::Sentence;
use crate::numerics::array::{self, Array};
use crate::numerics::dropout_mask;
use crate::numerics::{Graph, Rng, Shape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutScope {
    /// The whole concatenated vector.
    #[default]
    Full,
    /// Only the contextual part; word vectors pass through unchanged.
    ContextualOnly,
}

/// Per-token input vectors: contextual character-LM states followed by
/// the pretrained word vector.
#[derive(Debug, Clone)]
pub struct StackedEmbedding {
    pub word: WordEmbeddingTable,
    pub fwd_lm: CharLm,
    pub bwd_lm: CharLm,
    pub dropout_p: f64,
    pub dropout_scope: DropoutScope,
}

/// Character positions of each token in the rendered sentence stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamLayout {
    /// Stream length including both boundary symbols.
    pub len: usize,
    /// Index of each token's first character.
    pub starts: Vec<usize>,
    /// Index of each token's last character.
    pub ends: Vec<usize>,
}

impl StreamLayout {
    /// `⟨B⟩ tok1 ␠ tok2 … tokN ⟨B⟩`
    pub fn of(sentence: &Sentence) -> StreamLayout {
        let mut pos = 1;
        let mut starts = Vec::with_capacity(sentence.len());
        let mut ends = Vec::with_capacity(sentence.len());
        for (k, w) in sentence.words().enumerate() {
            if k > 0 {
                pos += 1;
            }
            let n = w.chars().count().max(1);
            starts.push(pos);
            ends.push(pos + n - 1);
            pos += n;
        }
        StreamLayout {
            len: pos + 1,
            starts,
            ends,
        }
    }

    /// Forward LM read position: the symbol right after the token.
    pub fn forward_index(&self, k: usize) -> usize {
        self.ends[k] + 1
    }

    /// Backward LM read position, in the reversed stream: the symbol right
    /// before the token.
    pub fn backward_index(&self, k: usize) -> usize {
        self.len - self.starts[k]
    }
}

/// Encodes the sentence stream with `vocab`. Tokens are joined by single
/// spaces; an empty token is rendered as one unknown symbol.
pub fn encode_sentence(vocab: &CharVocab, sentence: &Sentence) -> Vec<usize> {
    let mut ids = vec![CharVocab::BOUNDARY];
    for (k, w) in sentence.words().enumerate() {
        if k > 0 {
            ids.push(vocab.index(' '));
        }
        if w.is_empty() {
            ids.push(CharVocab::UNK);
        }
        ids.extend(w.chars().map(|c| vocab.index(c)));
    }
    ids.push(CharVocab::BOUNDARY);
    ids
}

impl StackedEmbedding {
    pub fn new(word: WordEmbeddingTable, fwd_lm: CharLm, bwd_lm: CharLm, dropout_p: f64) -> StackedEmbedding {
        assert_eq!(fwd_lm.direction, Direction::Forward, "first LM must read forward");
        assert_eq!(bwd_lm.direction, Direction::Backward, "second LM must read backward");
        assert_eq!(fwd_lm.d_lm(), bwd_lm.d_lm(), "both LMs need the same hidden size");
        assert!((0.0..1.0).contains(&dropout_p), "dropout probability must be in [0, 1)");
        StackedEmbedding {
            word,
            fwd_lm,
            bwd_lm,
            dropout_p,
            dropout_scope: DropoutScope::Full,
        }
    }

    pub fn d_lm(&self) -> usize {
        self.fwd_lm.d_lm()
    }

    pub fn contextual_dim(&self) -> usize {
        2 * self.d_lm()
    }

    pub fn total_dim(&self) -> usize {
        self.contextual_dim() + self.word.dim()
    }

    fn streams(&self, sentence: &Sentence) -> (Vec<usize>, Vec<usize>) {
        let fwd = encode_sentence(&self.fwd_lm.vocab, sentence);
        let mut bwd = encode_sentence(&self.bwd_lm.vocab, sentence);
        bwd.reverse();
        (fwd, bwd)
    }

    /// One `2·d_lm` vector per token: forward state, then backward state.
    pub fn extract_contextual(&self, sentence: &Sentence) -> Vec<Array> {
        let layout = StreamLayout::of(sentence);
        let (fwd_ids, bwd_ids) = self.streams(sentence);
        let fwd = self.fwd_lm.hidden_states(&fwd_ids);
        let bwd = self.bwd_lm.hidden_states(&bwd_ids);
        (0..sentence.len())
            .map(|k| array::concat(&[&fwd[layout.forward_index(k)], &bwd[layout.backward_index(k)]]))
            .collect()
    }

    /// Embeddings before dropout.
    pub fn embed_clean(&self, sentence: &Sentence) -> Vec<Array> {
        self.extract_contextual(sentence)
            .into_iter()
            .zip(sentence.words())
            .map(|(ctx, w)| array::concat(&[&ctx, &self.word.lookup(w)]))
            .collect()
    }

    /// `e_i = [contextual_i ; word_i]`, with dropout in training mode.
    pub fn embed_sentence(&self, sentence: &Sentence, training: bool, rng: &mut Rng) -> Vec<Array> {
        let clean = self.embed_clean(sentence);
        if !training || self.dropout_p == 0.0 {
            return clean;
        }
        clean
            .iter()
            .map(|e| array::elementwise_mul(e, &self.dropout_mask(rng)))
            .collect()
    }

    /// Inverted-dropout mask over the full vector, honoring the scope.
    pub fn dropout_mask(&self, rng: &mut Rng) -> Array {
        match self.dropout_scope {
            DropoutScope::Full => dropout_mask(Shape::Vector(self.total_dim()), self.dropout_p, rng),
            DropoutScope::ContextualOnly => {
                let ctx = dropout_mask(Shape::Vector(self.contextual_dim()), self.dropout_p, rng);
                let ones = Array::filled(Shape::Vector(self.word.dim()), 1.0);
                array::concat(&[&ctx, &ones])
            }
        }
    }

    /// Graph route over precomputed clean embeddings (frozen LMs).
    pub fn dropout_graph(&self, g: &mut Graph, clean: &[Array], training: bool, rng: &mut Rng) -> Vec<Var> {
        clean
            .iter()
            .map(|e| {
                let v = g.constant(e.clone());
                self.apply_dropout(g, v, training, rng)
            })
            .collect()
    }

    fn apply_dropout(&self, g: &mut Graph, v: Var, training: bool, rng: &mut Rng) -> Var {
        if !training || self.dropout_p == 0.0 {
            return v;
        }
        let mask = g.constant(self.dropout_mask(rng));
        g.mul(v, mask)
    }

    /// Graph route with the character LMs bound as trainable parameters.
    pub fn embed_graph(&self, g: &mut Graph, sentence: &Sentence, training: bool, rng: &mut Rng) -> Vec<Var> {
        let layout = StreamLayout::of(sentence);
        let (fwd_ids, bwd_ids) = self.streams(sentence);
        let fv = self.fwd_lm.bind(g, true);
        let bv = self.bwd_lm.bind(g, true);
        let fwd = fv.states_from_zero(g, &fwd_ids);
        let bwd = bv.states_from_zero(g, &bwd_ids);
        sentence
            .words()
            .enumerate()
            .map(|(k, w)| {
                let word = g.constant(self.word.lookup(w));
                let e = g.concat(&[fwd[layout.forward_index(k)], bwd[layout.backward_index(k)], word]);
                self.apply_dropout(g, e, training, rng)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::OovPolicy;

    fn stack(d_word: usize, d_lm: usize, seed: u64) -> StackedEmbedding {
        let mut rng = Rng::new(seed);
        let vocab = CharVocab::from_text("abcdefghijklmnopqrstuvwxyz ");
        let words = vec!["a".to_string(), "cat".to_string()];
        let vectors = Array::matrix(2, d_word, (0..2 * d_word).map(|i| i as f64 + 1.0).collect());
        StackedEmbedding::new(
            WordEmbeddingTable::new(words, vectors, OovPolicy::Zero),
            CharLm::random(Direction::Forward, vocab.clone(), 3, d_lm, &mut rng),
            CharLm::random(Direction::Backward, vocab, 3, d_lm, &mut rng),
            0.5,
        )
    }

    #[test]
    fn layout_positions() {
        let s = Sentence::from_pairs(&["A"], &["O"]);
        let l = StreamLayout::of(&s);
        assert_eq!(l.len, 3);
        assert_eq!(l.forward_index(0), 2);
        assert_eq!(l.backward_index(0), 2);
        let s = Sentence::from_pairs(&["ab", "c"], &["O", "O"]);
        let l = StreamLayout::of(&s);
        assert_eq!((l.len, l.starts.clone(), l.ends.clone()), (6, vec![1, 4], vec![2, 4]));
        assert_eq!(l.forward_index(0), 3);
        assert_eq!(l.backward_index(1), 2);
    }

    #[test]
    fn shapes_and_order() {
        let st = stack(2, 3, 1);
        let s = Sentence::from_pairs(&["a", "cat", "sat"], &["O", "O", "O"]);
        let e = st.embed_sentence(&s, false, &mut Rng::new(0));
        assert!(e.iter().all(|v| v.len() == 8));
        assert_eq!(&e[1].data()[6..], &[3.0, 4.0]);
        assert_eq!(&e[2].data()[6..], &[0.0, 0.0]);
    }

    #[test]
    fn eval_mode_is_pure() {
        let st = stack(2, 3, 1);
        let s = Sentence::from_pairs(&["a", "cat"], &["O", "O"]);
        let a = st.embed_sentence(&s, false, &mut Rng::new(0));
        let b = st.embed_sentence(&s, false, &mut Rng::new(99));
        assert_eq!(a, b);
        let c = st.embed_sentence(&s, true, &mut Rng::new(0));
        assert_ne!(a, c);
    }

    #[test]
    fn contextual_only_dropout_keeps_word_part() {
        let mut st = stack(2, 3, 1);
        st.dropout_scope = DropoutScope::ContextualOnly;
        let s = Sentence::from_pairs(&["cat"], &["O"]);
        for seed in 0..20 {
            let e = st.embed_sentence(&s, true, &mut Rng::new(seed));
            assert_eq!(&e[0].data()[6..], &[3.0, 4.0]);
        }
    }

    #[test]
    fn graph_route_matches_plain() {
        let st = stack(2, 3, 5);
        let s = Sentence::from_pairs(&["the", "cat", "a"], &["O", "O", "O"]);
        let plain = st.embed_clean(&s);
        let mut g = Graph::new();
        let vars = st.embed_graph(&mut g, &s, false, &mut Rng::new(0));
        for (a, v) in plain.iter().zip(vars) {
            assert_eq!(a, g.value(v));
        }
    }
}
