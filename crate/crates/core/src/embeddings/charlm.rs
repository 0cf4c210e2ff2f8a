use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, CheckpointError, Container};
use crate::numerics::array::{self, matvec};
use crate::numerics::{Array, Graph, ParamSet, Parameter, Rng, Shape, Var};
use crate::tagger::lstm::{LstmCellParams, LstmVars};

pub const CHARLM_KIND: &str = "charlm";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(Direction::Forward),
            "backward" => Ok(Direction::Backward),
            other => Err(format!("unknown direction `{other}`")),
        }
    }
}

/// Character inventory. Index 0 is the unknown symbol, 1 the boundary
/// symbol; the remaining characters follow in code-point order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocab {
    chars: Vec<char>,
}

impl CharVocab {
    pub const UNK: usize = 0;
    pub const BOUNDARY: usize = 1;
    const RESERVED: usize = 2;

    pub fn new(chars: impl IntoIterator<Item = char>) -> CharVocab {
        let set: BTreeSet<char> = chars.into_iter().collect();
        CharVocab {
            chars: set.into_iter().collect(),
        }
    }

    pub fn from_text(text: &str) -> CharVocab {
        CharVocab::new(text.chars().filter(|c| *c != '\n' && *c != '\r'))
    }

    /// Symbol count including the two reserved entries.
    pub fn len(&self) -> usize {
        self.chars.len() + Self::RESERVED
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn index(&self, c: char) -> usize {
        self.chars
            .binary_search(&c)
            .map_or(Self::UNK, |i| i + Self::RESERVED)
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        text.chars().map(|c| self.index(c)).collect()
    }
}

/// Character-level LSTM language model predicting the next symbol.
#[derive(Debug, Clone)]
pub struct CharLm {
    pub direction: Direction,
    pub vocab: CharVocab,
    pub embed: Parameter,
    pub cell: LstmCellParams,
    pub out_w: Parameter,
    pub out_b: Parameter,
}

impl CharLm {
    pub fn zeros(direction: Direction, vocab: CharVocab, d_char: usize, d_lm: usize) -> CharLm {
        let prefix = format!("charlm.{direction}");
        let c = vocab.len();
        CharLm {
            direction,
            embed: Parameter::zeros(format!("{prefix}.embed"), Shape::Matrix(c, d_char)),
            cell: LstmCellParams::zeros(&format!("{prefix}.lstm"), d_lm, d_char),
            out_w: Parameter::zeros(format!("{prefix}.out_w"), Shape::Matrix(c, d_lm)),
            out_b: Parameter::zeros(format!("{prefix}.out_b"), Shape::Vector(c)),
            vocab,
        }
    }

    /// Glorot-uniform matrices, zero biases.
    pub fn random(direction: Direction, vocab: CharVocab, d_char: usize, d_lm: usize, rng: &mut Rng) -> CharLm {
        let mut lm = CharLm::zeros(direction, vocab, d_char, d_lm);
        let c = lm.vocab.len();
        lm.embed = Parameter::glorot(lm.embed.name().to_string(), c, d_char, rng);
        lm.cell = LstmCellParams::glorot(&format!("charlm.{direction}.lstm"), d_lm, d_char, rng);
        lm.out_w = Parameter::glorot(lm.out_w.name().to_string(), c, d_lm, rng);
        lm
    }

    pub fn d_char(&self) -> usize {
        self.embed.value().cols()
    }

    pub fn d_lm(&self) -> usize {
        self.cell.hidden()
    }

    pub fn zero_state(&self) -> (Array, Array) {
        let z = Array::zeros(Shape::Vector(self.d_lm()));
        (z.clone(), z)
    }

    /// Hidden state after each symbol of `ids`, from a zero state.
    pub fn hidden_states(&self, ids: &[usize]) -> Vec<Array> {
        let (mut h, mut c) = self.zero_state();
        ids.iter()
            .map(|&id| {
                let x = Array::vector(self.embed.value().row(id).to_vec());
                (h, c) = self.cell.step(&x, &h, &c);
                h.clone()
            })
            .collect()
    }

    pub fn log_probs(&self, h: &Array) -> Array {
        array::log_softmax(&array::add(&matvec(self.out_w.value(), h), self.out_b.value()))
    }

    /// Hidden states and next-symbol log-probabilities, one per character.
    /// Characters outside the vocabulary map to the unknown symbol.
    pub fn lm_score(&self, text: &str) -> (Vec<Array>, Vec<Array>) {
        let hs = self.hidden_states(&self.vocab.encode(text));
        let lps = hs.iter().map(|h| self.log_probs(h)).collect();
        (hs, lps)
    }

    /// Mean next-symbol negative log-likelihood over `ids[1..]`.
    pub fn mean_nll(&self, ids: &[usize]) -> f64 {
        assert!(ids.len() >= 2, "need at least two symbols to score a prediction");
        let hs = self.hidden_states(&ids[..ids.len() - 1]);
        let total: f64 = hs
            .iter()
            .zip(&ids[1..])
            .map(|(h, &next)| -self.log_probs(h).data()[next])
            .sum();
        total / hs.len() as f64
    }

    pub fn perplexity(&self, ids: &[usize]) -> f64 {
        self.mean_nll(ids).exp()
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> CharLmVars {
        CharLmVars {
            embed: g.bind(&self.embed, trainable),
            cell: self.cell.bind(g, trainable),
            out_w: g.bind(&self.out_w, trainable),
            out_b: g.bind(&self.out_b, trainable),
        }
    }

    pub fn to_container(&self, metadata: serde_json::Value) -> Container {
        let mut c = Container::new(CHARLM_KIND, self.header(metadata));
        checkpoint::push_params(&mut c, self);
        c
    }

    pub(crate) fn header(&self, metadata: serde_json::Value) -> serde_json::Value {
        serde_json::json!({
            "direction": self.direction,
            "chars": self.vocab.chars().iter().collect::<String>(),
            "d_char": self.d_char(),
            "d_lm": self.d_lm(),
            "metadata": metadata,
        })
    }

    pub(crate) fn from_header(header: &serde_json::Value) -> Result<CharLm, CheckpointError> {
        #[derive(Deserialize)]
        struct Header {
            direction: Direction,
            chars: String,
            d_char: usize,
            d_lm: usize,
        }
        let h: Header = serde_json::from_value(header.clone())
            .map_err(|e| CheckpointError::Malformed(format!("char LM header: {e}")))?;
        Ok(CharLm::zeros(h.direction, CharVocab::new(h.chars.chars()), h.d_char, h.d_lm))
    }

    pub fn from_container(c: &Container) -> Result<CharLm, CheckpointError> {
        c.expect_kind(CHARLM_KIND)?;
        let mut lm = CharLm::from_header(&c.header)?;
        checkpoint::load_params(c, &mut lm)?;
        Ok(lm)
    }

    /// Writes the binary checkpoint and a JSON sidecar with `metadata`.
    pub fn save(&self, path: &Path, metadata: serde_json::Value) -> Result<(), CheckpointError> {
        let c = self.to_container(metadata);
        c.write(path)?;
        checkpoint::write_sidecar(path, &c.header)
    }

    pub fn load(path: &Path) -> Result<CharLm, CheckpointError> {
        CharLm::from_container(&Container::read(path)?)
    }
}

impl ParamSet for CharLm {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        f(&self.embed);
        self.cell.visit(f);
        f(&self.out_w);
        f(&self.out_b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.embed);
        self.cell.visit_mut(f);
        f(&mut self.out_w);
        f(&mut self.out_b);
    }
}

/// A character LM bound into a graph.
#[derive(Debug, Clone, Copy)]
pub struct CharLmVars {
    pub embed: Var,
    pub cell: LstmVars,
    pub out_w: Var,
    pub out_b: Var,
}

impl CharLmVars {
    /// Hidden state after each symbol, starting from `(h0, c0)`.
    /// Also returns the final cell state.
    pub fn states(&self, g: &mut Graph, ids: &[usize], h0: Var, c0: Var) -> (Vec<Var>, Var) {
        let (mut h, mut c) = (h0, c0);
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            let x = g.row(self.embed, id);
            (h, c) = self.cell.step(g, x, h, c);
            out.push(h);
        }
        (out, c)
    }

    pub fn states_from_zero(&self, g: &mut Graph, ids: &[usize]) -> Vec<Var> {
        let h0 = g.constant(Array::zeros(Shape::Vector(self.cell.hidden)));
        let c0 = g.constant(Array::zeros(Shape::Vector(self.cell.hidden)));
        self.states(g, ids, h0, c0).0
    }

    /// Negative log-probability of `next` given hidden state `h`.
    pub fn nll(&self, g: &mut Graph, h: Var, next: usize) -> Var {
        let wh = g.matvec(self.out_w, h);
        let logits = g.add(wh, self.out_b);
        let lse = g.logsumexp(logits);
        let picked = g.pick(logits, next);
        g.sub(lse, picked)
    }
}
