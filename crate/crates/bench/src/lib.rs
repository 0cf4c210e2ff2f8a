//! Shared inputs for the criterion benchmarks.

use seqtag_core::corpus::{discover_scheme, parse_conll, ColumnSpec, ParseOptions, Sentence};
use seqtag_core::crf::{CrfParams, Emissions};
use seqtag_core::embeddings::{load_word_vectors, CharLm, CharVocab, Direction, OovPolicy, StackedEmbedding};
use seqtag_core::numerics::{Array, Rng};
use seqtag_core::tagger::{ModelConfig, TaggerModel};

const TRAIN: &str = include_str!("../../core/fixtures/toy_train.conll");
const VECTORS: &str = include_str!("../../core/fixtures/toy_vectors.txt");

/// Random emissions and transitions for a `len × tags` lattice.
pub fn lattice(len: usize, tags: usize, seed: u64) -> (Emissions, CrfParams) {
    let mut rng = Rng::new(seed);
    let data = (0..len * tags).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
    (Emissions::new(Array::matrix(len, tags, data)), CrfParams::random(tags, 1.0, &mut rng))
}

/// The toy training sentences and a tagger over them.
pub fn toy_model(hidden: usize, d_lm: usize) -> (Vec<Sentence>, TaggerModel) {
    let scheme = discover_scheme(TRAIN, &ColumnSpec::default()).expect("fixture parses");
    let sentences = parse_conll(TRAIN, &scheme, &ParseOptions::default()).expect("fixture parses");
    let mut rng = Rng::new(1);
    let text: String = sentences.iter().flat_map(|s| s.words().map(|w| format!("{w} "))).collect();
    let vocab = CharVocab::from_text(&text);
    let stack = StackedEmbedding::new(
        load_word_vectors(VECTORS, OovPolicy::LowercaseThenZero).expect("fixture parses"),
        CharLm::random(Direction::Forward, vocab.clone(), 8, d_lm, &mut rng),
        CharLm::random(Direction::Backward, vocab, 8, d_lm, &mut rng),
        0.5,
    );
    let config = ModelConfig {
        hidden,
        ..ModelConfig::default()
    };
    let model = TaggerModel::new(stack, scheme, config, &mut rng);
    (sentences, model)
}
