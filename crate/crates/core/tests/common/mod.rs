#![allow(dead_code)]

use std::path::PathBuf;

use seqtag_core::corpus::{discover_scheme, parse_conll, ColumnSpec, Corpus, ParseOptions, Sentence};
use seqtag_core::embeddings::{load_word_vectors, CharLm, CharVocab, Direction, OovPolicy, StackedEmbedding};
use seqtag_core::numerics::Rng;
use seqtag_core::tagger::{ModelConfig, TaggerModel};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).expect("fixture is readable")
}

/// The bundled 10-sentence, two-type corpus, used as train and dev.
pub fn toy_corpus() -> Corpus {
    let text = read_fixture("toy_train.conll");
    let scheme = discover_scheme(&text, &ColumnSpec::default()).unwrap();
    let train = parse_conll(&text, &scheme, &ParseOptions::default()).unwrap();
    Corpus {
        dev: train.clone(),
        test: Vec::new(),
        train,
        scheme,
    }
}

pub fn char_vocab(sentences: &[Sentence]) -> CharVocab {
    let text: String = sentences.iter().flat_map(|s| s.words().map(|w| format!("{w} "))).collect();
    CharVocab::from_text(&text)
}

pub fn toy_stack(corpus: &Corpus, d_char: usize, d_lm: usize, rng: &mut Rng) -> StackedEmbedding {
    let word = load_word_vectors(&read_fixture("toy_vectors.txt"), OovPolicy::LowercaseThenZero).unwrap();
    let vocab = char_vocab(&corpus.train);
    StackedEmbedding::new(
        word,
        CharLm::random(Direction::Forward, vocab.clone(), d_char, d_lm, rng),
        CharLm::random(Direction::Backward, vocab, d_char, d_lm, rng),
        0.5,
    )
}

pub fn toy_model(corpus: &Corpus, hidden: usize, seed: u64) -> TaggerModel {
    let mut rng = Rng::new(seed);
    let stack = toy_stack(corpus, 4, 8, &mut rng);
    let config = ModelConfig {
        hidden,
        ..ModelConfig::default()
    };
    TaggerModel::new(stack, corpus.scheme.clone(), config, &mut rng)
}

/// Random sentence over a small alphabet.
pub fn random_sentence(rng: &mut Rng, max_len: usize) -> Sentence {
    let n = 1 + rng.below(max_len);
    let words: Vec<String> = (0..n)
        .map(|_| {
            let len = 1 + rng.below(6);
            (0..len).map(|_| (b'a' + rng.below(26) as u8) as char).collect()
        })
        .collect();
    let refs: Vec<&str> = words.iter().map(String::as_str).collect();
    Sentence::from_pairs(&refs, &vec!["O"; n])
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM step written out coordinate by coordinate, independent of the
/// library's array routines.
pub fn scalar_lstm_step(
    cell: &seqtag_core::tagger::LstmCellParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = h_prev.len();
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    for r in 0..n {
        let pre = |w: &seqtag_core::numerics::Array, b: &seqtag_core::numerics::Array| {
            let mut s = b.data()[r];
            for k in 0..n {
                s += w.get(r, k) * h_prev[k];
            }
            for (k, xk) in x.iter().enumerate() {
                s += w.get(r, n + k) * xk;
            }
            s
        };
        let f = sigmoid(pre(cell.w_f.value(), cell.b_f.value()));
        let i = sigmoid(pre(cell.w_i.value(), cell.b_i.value()));
        let c_tilde = pre(cell.w_c.value(), cell.b_c.value()).tanh();
        let o = sigmoid(pre(cell.w_o.value(), cell.b_o.value()));
        c[r] = f * c_prev[r] + i * c_tilde;
        h[r] = o * c[r].tanh();
    }
    (h, c)
}

/// Random values in `[-1, 1)`.
pub fn random_values(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect()
}

/// A small model for gradient checks: one entity type (T = 3), tiny
/// embeddings, `hidden` units per direction.
pub fn tiny_model(hidden: usize, fine_tune_lm: bool, sigma_sq: Option<f64>, seed: u64) -> TaggerModel {
    use seqtag_core::corpus::TagScheme;
    use seqtag_core::embeddings::WordEmbeddingTable;
    use seqtag_core::numerics::Array;
    let mut rng = Rng::new(seed);
    let vocab = CharVocab::from_text("abcde ");
    let words = vec!["ab".to_string(), "cd".to_string()];
    let vectors = Array::matrix(2, 2, random_values(&mut rng, 4));
    let stack = StackedEmbedding::new(
        WordEmbeddingTable::new(words, vectors, OovPolicy::Zero),
        CharLm::random(Direction::Forward, vocab.clone(), 2, 2, &mut rng),
        CharLm::random(Direction::Backward, vocab, 2, 2, &mut rng),
        0.0,
    );
    let config = ModelConfig {
        hidden,
        fine_tune_lm,
        sigma_sq,
        ..ModelConfig::default()
    };
    let mut model = TaggerModel::new(stack, TagScheme::new(["X"]), config, &mut rng);
    let t = model.num_tags();
    model.crf = seqtag_core::crf::CrfParams::random(t, 0.5, &mut rng);
    model.crf.sigma_sq = sigma_sq.unwrap_or(f64::INFINITY);
    model
        .proj_bias
        .set_value(Array::vector(random_values(&mut rng, t)));
    model
}
