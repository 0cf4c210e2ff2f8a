use std::path::Path;

use serde::{Deserialize, Serialize};

use super::lstm::LstmCellParams;
use crate::checkpoint::{self, CheckpointError, Container};
use crate::corpus::{Sentence, Tag, TagScheme};
use crate::crf::{self, CrfParams, Emissions};
use crate::embeddings::{CharLm, DropoutScope, OovPolicy, StackedEmbedding, WordEmbeddingTable};
use crate::numerics::array::{self, matvec};
use crate::numerics::{Array, Graph, ParamSet, Parameter, Rng, Var};

pub const TAGGER_KIND: &str = "tagger";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Hidden size per LSTM direction.
    pub hidden: usize,
    /// Train the character LMs along with the tagger.
    pub fine_tune_lm: bool,
    /// Forbid IOB2-illegal transitions when decoding.
    pub constrain_decoding: bool,
    pub max_seq_len: usize,
    /// Prior variance of the L2 penalty; `None` disables it.
    pub sigma_sq: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 256,
            fine_tune_lm: false,
            constrain_decoding: true,
            max_seq_len: 512,
            sigma_sq: None,
        }
    }
}

/// Embeddings → BiLSTM → linear emission projection → linear-chain CRF.
#[derive(Debug, Clone)]
pub struct TaggerModel {
    pub stack: StackedEmbedding,
    pub fwd_cell: LstmCellParams,
    pub bwd_cell: LstmCellParams,
    /// `T × 2h`.
    pub projection: Parameter,
    pub proj_bias: Parameter,
    pub crf: CrfParams,
    pub scheme: TagScheme,
    pub config: ModelConfig,
}

impl TaggerModel {
    /// Glorot-initialized LSTMs and projection; zero CRF scores.
    pub fn new(stack: StackedEmbedding, scheme: TagScheme, config: ModelConfig, rng: &mut Rng) -> TaggerModel {
        let (h, d_in, t) = (config.hidden, stack.total_dim(), scheme.len());
        assert!(h > 0, "hidden size must be positive");
        let mut crf = CrfParams::zeros(t);
        crf.sigma_sq = config.sigma_sq.unwrap_or(f64::INFINITY);
        TaggerModel {
            fwd_cell: LstmCellParams::glorot("tagger.fwd", h, d_in, rng),
            bwd_cell: LstmCellParams::glorot("tagger.bwd", h, d_in, rng),
            projection: Parameter::glorot("tagger.projection", t, 2 * h, rng),
            proj_bias: Parameter::zeros("tagger.proj_bias", crate::numerics::Shape::Vector(t)),
            crf,
            stack,
            scheme,
            config,
        }
    }

    pub fn num_tags(&self) -> usize {
        self.scheme.len()
    }

    pub fn hidden(&self) -> usize {
        self.fwd_cell.hidden()
    }

    fn check_len(&self, n: usize) {
        assert!(
            n <= self.config.max_seq_len,
            "sentence of {n} tokens exceeds max_seq_len {}; window it first",
            self.config.max_seq_len
        );
    }

    /// `concat(h_fwd_t, h_bwd_t)` per token, both directions from zero state.
    pub fn bilstm(&self, inputs: &[Array]) -> Vec<Array> {
        let run = |cell: &LstmCellParams, xs: &mut dyn Iterator<Item = &Array>| -> Vec<Array> {
            let mut h = Array::zeros(crate::numerics::Shape::Vector(cell.hidden()));
            let mut c = h.clone();
            xs.map(|x| {
                (h, c) = cell.step(x, &h, &c);
                h.clone()
            })
            .collect()
        };
        let fwd = run(&self.fwd_cell, &mut inputs.iter());
        let mut bwd = run(&self.bwd_cell, &mut inputs.iter().rev());
        bwd.reverse();
        fwd.iter().zip(&bwd).map(|(f, b)| array::concat(&[f, b])).collect()
    }

    /// Emission scores for already-embedded tokens.
    pub fn emissions_from_inputs(&self, inputs: &[Array]) -> Emissions {
        let rows: Vec<Vec<f64>> = self
            .bilstm(inputs)
            .iter()
            .map(|o| array::add(&matvec(self.projection.value(), o), self.proj_bias.value()).into_data())
            .collect();
        Emissions::from_rows(&rows)
    }

    /// `N × T` emission scores. Panics on an empty or over-length sentence.
    pub fn forward_pass(&self, sentence: &Sentence, training: bool, rng: &mut Rng) -> Emissions {
        self.check_len(sentence.len());
        self.emissions_from_inputs(&self.stack.embed_sentence(sentence, training, rng))
    }

    /// The CRF used for decoding.
    pub fn decoding_crf(&self) -> CrfParams {
        if self.config.constrain_decoding {
            crf::constrain_transitions(&self.crf, &self.scheme)
        } else {
            self.crf.clone()
        }
    }

    pub fn decode(&self, em: &Emissions, decoding_crf: &CrfParams) -> Vec<Tag> {
        let (path, _) = crf::viterbi(em, decoding_crf);
        path.into_iter().map(|i| self.scheme.tag(i).clone()).collect()
    }

    /// Viterbi tags in eval mode.
    pub fn predict(&self, sentence: &Sentence) -> Vec<Tag> {
        if sentence.is_empty() {
            return Vec::new();
        }
        self.check_len(sentence.len());
        let em = self.emissions_from_inputs(&self.stack.embed_clean(sentence));
        self.decode(&em, &self.decoding_crf())
    }

    pub fn gold_indices(&self, sentence: &Sentence) -> Vec<usize> {
        sentence
            .tokens()
            .iter()
            .map(|t| {
                self.scheme
                    .index_of(&t.tag)
                    .unwrap_or_else(|| panic!("tag `{}` is not in the model's scheme", t.tag))
            })
            .collect()
    }

    /// Eval-mode negative log-likelihood including the L2 penalty.
    pub fn sentence_nll(&self, sentence: &Sentence) -> f64 {
        self.check_len(sentence.len());
        let em = self.emissions_from_inputs(&self.stack.embed_clean(sentence));
        crf::nll(&em, &self.crf, &self.gold_indices(sentence), self)
    }

    /// `log Z − score(gold)` as a graph node over input vectors `inputs`.
    pub fn nll_graph(&self, g: &mut Graph, inputs: &[Var], gold: &[usize]) -> Var {
        let fv = self.fwd_cell.bind(g, true);
        let bv = self.bwd_cell.bind(g, true);
        let fwd = fv.run(g, inputs);
        let rev: Vec<Var> = inputs.iter().rev().copied().collect();
        let mut bwd = bv.run(g, &rev);
        bwd.reverse();
        let p = g.param(&self.projection);
        let b = g.param(&self.proj_bias);
        let emissions: Vec<Var> = fwd
            .iter()
            .zip(&bwd)
            .map(|(&f, &bk)| {
                let o = g.concat(&[f, bk]);
                let po = g.matvec(p, o);
                g.add(po, b)
            })
            .collect();
        let cv = self.crf.bind(g, true);
        crf::nll_graph(g, &emissions, &cv, gold)
    }

    /// Full graph loss for one sentence: embeddings (graph route, so the
    /// LMs receive gradients when fine-tuning) plus the CRF negative
    /// log-likelihood and the L2 penalty.
    pub fn loss_graph(&self, g: &mut Graph, sentence: &Sentence, training: bool, rng: &mut Rng) -> Var {
        self.check_len(sentence.len());
        let inputs = if self.config.fine_tune_lm {
            self.stack.embed_graph(g, sentence, training, rng)
        } else {
            let clean = self.stack.embed_clean(sentence);
            self.stack.dropout_graph(g, &clean, training, rng)
        };
        let nll = self.nll_graph(g, &inputs, &self.gold_indices(sentence));
        let mut params = Vec::new();
        self.visit(&mut |p| params.push(g.param(p)));
        match crf::l2_penalty_graph(g, &params, self.crf.sigma_sq) {
            Some(pen) => g.add(nll, pen),
            None => nll,
        }
    }

    /// Adds `∂/∂λ Σλ²/(2σ²) = λ/σ²` to every trainable gradient.
    pub fn add_l2_gradient(&mut self) {
        let sigma_sq = self.crf.sigma_sq;
        if sigma_sq.is_infinite() {
            return;
        }
        self.visit_mut(&mut |p| {
            let v = p.value().clone();
            p.grad_mut().add_scaled(&v, 1.0 / sigma_sq);
        });
    }

    fn header(&self, metadata: serde_json::Value) -> serde_json::Value {
        serde_json::json!({
            "config": self.config,
            "scheme": self.scheme,
            "word": {
                "words": self.stack.word.words(),
                "oov_policy": self.stack.word.oov_policy(),
            },
            "dropout_p": self.stack.dropout_p,
            "dropout_scope": self.stack.dropout_scope,
            "fwd_lm": self.stack.fwd_lm.header(serde_json::Value::Null),
            "bwd_lm": self.stack.bwd_lm.header(serde_json::Value::Null),
            "metadata": metadata,
        })
    }

    pub fn to_container(&self, metadata: serde_json::Value) -> Container {
        let mut c = Container::new(TAGGER_KIND, self.header(metadata));
        c.push("word.vectors", self.stack.word.vectors().clone());
        checkpoint::push_params(&mut c, &self.stack.fwd_lm);
        checkpoint::push_params(&mut c, &self.stack.bwd_lm);
        checkpoint::push_params(&mut c, &self.fwd_cell);
        checkpoint::push_params(&mut c, &self.bwd_cell);
        checkpoint::push_params(&mut c, &self.projection);
        checkpoint::push_params(&mut c, &self.proj_bias);
        checkpoint::push_params(&mut c, &self.crf);
        c
    }

    pub fn from_container(c: &Container) -> Result<TaggerModel, CheckpointError> {
        #[derive(Deserialize)]
        struct WordHeader {
            words: Vec<String>,
            oov_policy: OovPolicy,
        }
        #[derive(Deserialize)]
        struct Header {
            config: ModelConfig,
            scheme: TagScheme,
            word: WordHeader,
            dropout_p: f64,
            dropout_scope: DropoutScope,
            fwd_lm: serde_json::Value,
            bwd_lm: serde_json::Value,
        }
        c.expect_kind(TAGGER_KIND)?;
        let h: Header = serde_json::from_value(c.header.clone())
            .map_err(|e| CheckpointError::Malformed(format!("tagger header: {e}")))?;
        let vectors = c.get("word.vectors")?.clone();
        if vectors.rows() != h.word.words.len() || vectors.cols() == 0 {
            return Err(CheckpointError::Malformed("word vector table does not match its vocabulary".into()));
        }
        let mut fwd_lm = CharLm::from_header(&h.fwd_lm)?;
        let mut bwd_lm = CharLm::from_header(&h.bwd_lm)?;
        checkpoint::load_params(c, &mut fwd_lm)?;
        checkpoint::load_params(c, &mut bwd_lm)?;
        let word = WordEmbeddingTable::new(h.word.words, vectors, h.word.oov_policy);
        let mut stack = StackedEmbedding::new(word, fwd_lm, bwd_lm, h.dropout_p);
        stack.dropout_scope = h.dropout_scope;
        let mut model = TaggerModel::new(stack, h.scheme, h.config, &mut Rng::new(0));
        checkpoint::load_params(c, &mut model.fwd_cell)?;
        checkpoint::load_params(c, &mut model.bwd_cell)?;
        checkpoint::load_params(c, &mut model.projection)?;
        checkpoint::load_params(c, &mut model.proj_bias)?;
        checkpoint::load_params(c, &mut model.crf)?;
        Ok(model)
    }

    /// Writes the binary checkpoint and a JSON sidecar holding the header
    /// (configuration plus `metadata`).
    pub fn save(&self, path: &Path, metadata: serde_json::Value) -> Result<(), CheckpointError> {
        let c = self.to_container(metadata);
        c.write(path)?;
        let mut sidecar = c.header.clone();
        if let Some(word) = sidecar.get_mut("word") {
            word["words"] = serde_json::json!(self.stack.word.len());
        }
        checkpoint::write_sidecar(path, &sidecar)
    }

    pub fn load(path: &Path) -> Result<TaggerModel, CheckpointError> {
        TaggerModel::from_container(&Container::read(path)?)
    }
}

/// Trainable parameters: the character LMs only when fine-tuning; the
/// word table never.
impl ParamSet for TaggerModel {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        if self.config.fine_tune_lm {
            self.stack.fwd_lm.visit(f);
            self.stack.bwd_lm.visit(f);
        }
        self.fwd_cell.visit(f);
        self.bwd_cell.visit(f);
        f(&self.projection);
        f(&self.proj_bias);
        self.crf.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        if self.config.fine_tune_lm {
            self.stack.fwd_lm.visit_mut(f);
            self.stack.bwd_lm.visit_mut(f);
        }
        self.fwd_cell.visit_mut(f);
        self.bwd_cell.visit_mut(f);
        f(&mut self.projection);
        f(&mut self.proj_bias);
        self.crf.visit_mut(f);
    }
}
