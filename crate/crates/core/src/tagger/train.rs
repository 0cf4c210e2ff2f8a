use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::TaggerModel;
use crate::checkpoint::CheckpointError;
use crate::corpus::{window_long_sentences, Corpus, CorpusError, Sentence};
use crate::eval::{evaluate, RepairMode, Scores};
use crate::numerics::{clip_grad_norm, sgd_step, Array, Gradients, Graph, ParamSet, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DevMetric {
    #[default]
    MicroF1,
    /// Negated mean dev loss, so that higher is still better.
    Loss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub anneal_factor: f64,
    pub patience: usize,
    pub batch_size: usize,
    pub max_seq_len: usize,
    pub embedding_dropout: f64,
    pub max_epochs: usize,
    pub min_lr: f64,
    pub seed: u64,
    pub dev_metric: DevMetric,
    /// Gradient norm clip per update; `None` disables clipping.
    pub clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            initial_lr: 0.1,
            anneal_factor: 0.5,
            patience: 3,
            batch_size: 32,
            max_seq_len: 512,
            embedding_dropout: 0.5,
            max_epochs: 100,
            min_lr: 1e-4,
            seed: 1,
            dev_metric: DevMetric::MicroF1,
            clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad("initial_lr must be positive");
        }
        if !(self.anneal_factor > 0.0 && self.anneal_factor < 1.0) {
            return bad("anneal_factor must lie in (0, 1)");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.max_seq_len == 0 {
            return bad("max_seq_len must be at least 1");
        }
        if !(0.0..1.0).contains(&self.embedding_dropout) {
            return bad("embedding_dropout must lie in [0, 1)");
        }
        if self.min_lr < 0.0 {
            return bad("min_lr must be non-negative");
        }
        if self.clip.is_some_and(|c| c <= 0.0) {
            return bad("clip must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    Improved,
    Stalled,
    Annealed,
}

/// Learning-rate annealing on patience. Scores are higher-is-better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub best: Option<f64>,
    pub since_improvement: usize,
    pub anneal_events: usize,
}

impl AnnealSchedule {
    pub fn new(lr: f64, factor: f64, patience: usize) -> AnnealSchedule {
        AnnealSchedule {
            lr,
            factor,
            patience,
            best: None,
            since_improvement: 0,
            anneal_events: 0,
        }
    }

    /// Records one epoch's dev score. A strict improvement resets the
    /// counter; reaching `patience` stalls multiplies the rate by `factor`.
    pub fn observe(&mut self, score: f64) -> Observation {
        if self.best.is_none_or(|b| score > b) {
            self.best = Some(score);
            self.since_improvement = 0;
            return Observation::Improved;
        }
        self.since_improvement += 1;
        if self.since_improvement >= self.patience {
            self.lr *= self.factor;
            self.since_improvement = 0;
            self.anneal_events += 1;
            return Observation::Annealed;
        }
        Observation::Stalled
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub current_lr: f64,
    pub epoch: usize,
    pub best_dev_score: Option<f64>,
    pub epochs_since_improvement: usize,
    pub best_epoch: Option<usize>,
    pub best_checkpoint_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Rate used during this epoch.
    pub lr: f64,
    /// Mean per-sentence training loss (with dropout, before each update).
    pub train_loss: f64,
    pub dev: Scores,
    pub dev_loss: Option<f64>,
    pub improved: bool,
}

impl EpochLog {
    pub fn render_text(&self) -> String {
        let mut s = format!(
            "epoch {:>3}  lr {:.6}  train_loss {:.6}  dev P {:.2} R {:.2} F1 {:.2}",
            self.epoch,
            self.lr,
            self.train_loss,
            100.0 * self.dev.precision,
            100.0 * self.dev.recall,
            100.0 * self.dev.f1
        );
        if let Some(l) = self.dev_loss {
            s.push_str(&format!("  dev_loss {l:.6}"));
        }
        if self.improved {
            s.push_str("  *");
        }
        s
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite {what} at epoch {epoch}, batch {batch}; parameter norms: {}", render_norms(.param_norms))]
    NonFinite {
        what: String,
        epoch: usize,
        batch: usize,
        param_norms: Vec<(String, f64)>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
}

fn render_norms(norms: &[(String, f64)]) -> String {
    norms.iter().map(|(n, v)| format!("{n}={v:.4e}")).collect::<Vec<_>>().join(", ")
}

/// Where to write the best model, and the provenance stored with it.
#[derive(Debug, Clone)]
pub struct CheckpointSink {
    pub path: PathBuf,
    pub provenance: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub state: TrainState,
    pub best_model: TaggerModel,
    pub log: Vec<EpochLog>,
}

/// Clean embeddings cached per sentence when the character LMs are frozen.
struct Inputs(Option<Vec<Vec<Array>>>);

impl Inputs {
    fn build(model: &TaggerModel, sentences: &[Sentence]) -> Inputs {
        if model.config.fine_tune_lm {
            return Inputs(None);
        }
        Inputs(Some(sentences.par_iter().map(|s| model.stack.embed_clean(s)).collect()))
    }

    fn clean(&self, model: &TaggerModel, sentences: &[Sentence], i: usize) -> Vec<Array> {
        match &self.0 {
            Some(cache) => cache[i].clone(),
            None => model.stack.embed_clean(&sentences[i]),
        }
    }
}

fn sentence_gradients(model: &TaggerModel, sentence: &Sentence, clean: Option<&[Array]>, scale: f64, rng: &mut Rng) -> (f64, Gradients) {
    let mut g = Graph::new();
    let inputs = match clean {
        Some(c) => model.stack.dropout_graph(&mut g, c, true, rng),
        None => model.stack.embed_graph(&mut g, sentence, true, rng),
    };
    let nll = model.nll_graph(&mut g, &inputs, &model.gold_indices(sentence));
    let scaled = g.scale(nll, scale);
    (g.value(nll).item(), g.backward(scaled))
}

/// Tags for every sentence, in order, decoded in eval mode.
pub fn predict_all(model: &TaggerModel, sentences: &[Sentence]) -> Vec<Vec<crate::corpus::Tag>> {
    let crf = model.decoding_crf();
    sentences
        .par_iter()
        .map(|s| {
            if s.is_empty() {
                return Vec::new();
            }
            let em = model.emissions_from_inputs(&model.stack.embed_clean(s));
            model.decode(&em, &crf)
        })
        .collect()
}

fn dev_eval(model: &TaggerModel, dev: &[Sentence], inputs: &Inputs, metric: DevMetric) -> (Scores, Option<f64>) {
    let crf = model.decoding_crf();
    let results: Vec<(Vec<crate::corpus::Tag>, f64)> = (0..dev.len())
        .into_par_iter()
        .map(|i| {
            let em = model.emissions_from_inputs(&inputs.clean(model, dev, i));
            let loss = match metric {
                DevMetric::Loss => crate::crf::forward_log_z(&em, &model.crf)
                    - crate::crf::score_sequence(&em, &model.crf, &model.gold_indices(&dev[i])),
                DevMetric::MicroF1 => 0.0,
            };
            (model.decode(&em, &crf), loss)
        })
        .collect();
    let gold: Vec<_> = dev.iter().map(Sentence::tags).collect();
    let pred: Vec<_> = results.iter().map(|(p, _)| p.clone()).collect();
    let report = evaluate(&gold, &pred, RepairMode::NewSpan).expect("predictions align with gold");
    let loss = (metric == DevMetric::Loss)
        .then(|| results.iter().map(|(_, l)| l).sum::<f64>() / dev.len() as f64 + model_penalty(model));
    (report.micro_scores(), loss)
}

fn model_penalty(model: &TaggerModel) -> f64 {
    crate::crf::l2_penalty(model, model.crf.sigma_sq)
}

/// Mini-batch SGD with annealing on patience; keeps the best model by
/// the dev metric.
pub fn fit(
    model: &mut TaggerModel,
    corpus: &Corpus,
    config: &TrainConfig,
    sink: Option<&CheckpointSink>,
) -> Result<FitOutcome, TrainError> {
    config.validate()?;
    corpus.check_trainable()?;
    model.config.max_seq_len = config.max_seq_len;
    model.stack.dropout_p = config.embedding_dropout;
    let nonempty = |ss: &[Sentence]| ss.iter().filter(|s| !s.is_empty()).cloned().collect::<Vec<_>>();
    let train = window_long_sentences(&nonempty(&corpus.train), config.max_seq_len);
    let dev = window_long_sentences(&nonempty(&corpus.dev), config.max_seq_len);
    if train.is_empty() {
        return Err(CorpusError::EmptySplit { split: "train" }.into());
    }
    if dev.is_empty() {
        return Err(CorpusError::EmptySplit { split: "dev" }.into());
    }
    let train_inputs = Inputs::build(model, &train);
    let dev_inputs = Inputs::build(model, &dev);

    let mut rng = Rng::new(config.seed);
    let mut schedule = AnnealSchedule::new(config.initial_lr, config.anneal_factor, config.patience);
    let mut state = TrainState {
        current_lr: config.initial_lr,
        epoch: 0,
        best_dev_score: None,
        epochs_since_improvement: 0,
        best_epoch: None,
        best_checkpoint_path: None,
    };
    let mut best_model = model.clone();
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.max_epochs {
        let lr = schedule.lr;
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let scale = 1.0 / batch.len() as f64;
            let rngs: Vec<Rng> = batch.iter().map(|_| rng.fork()).collect();
            let frozen = &*model;
            let results: Vec<(f64, Gradients)> = batch
                .par_iter()
                .zip(rngs)
                .map(|(&i, mut r)| {
                    let clean = train_inputs.0.as_ref().map(|c| c[i].as_slice());
                    sentence_gradients(frozen, &train[i], clean, scale, &mut r)
                })
                .collect();
            let batch_loss: f64 = results.iter().map(|(l, _)| l).sum::<f64>() * scale;
            let nonfinite = |what: &str, model: &TaggerModel| TrainError::NonFinite {
                what: what.into(),
                epoch,
                batch: b + 1,
                param_norms: model.value_norms(),
            };
            if !batch_loss.is_finite() {
                return Err(nonfinite("loss", model));
            }
            loss_sum += results.iter().map(|(l, _)| l).sum::<f64>();
            model.zero_grads();
            for (_, grads) in &results {
                grads.accumulate_into(model);
            }
            model.add_l2_gradient();
            if let Some(max) = config.clip {
                clip_grad_norm(model, max);
            }
            if let Err(e) = sgd_step(model, lr) {
                return Err(nonfinite(&format!("gradient in `{}`", e.name), model));
            }
        }
        let train_loss = loss_sum / train.len() as f64;

        let (dev_scores, dev_loss) = dev_eval(model, &dev, &dev_inputs, config.dev_metric);
        let score = match config.dev_metric {
            DevMetric::MicroF1 => dev_scores.f1,
            DevMetric::Loss => -dev_loss.expect("loss computed for the loss metric"),
        };
        let observation = schedule.observe(score);
        let improved = observation == Observation::Improved;
        if improved {
            best_model = model.clone();
            state.best_epoch = Some(epoch);
            if let Some(sink) = sink {
                let metadata = serde_json::json!({
                    "train_config": config,
                    "epoch": epoch,
                    "dev_score": score,
                    "provenance": sink.provenance,
                });
                model.save(&sink.path, metadata)?;
                state.best_checkpoint_path = Some(sink.path.clone());
            }
        }
        let entry = EpochLog {
            epoch,
            lr,
            train_loss,
            dev: dev_scores,
            dev_loss,
            improved,
        };
        log::info!("{}", entry.render_text());
        log.push(entry);
        state.epoch = epoch;
        state.current_lr = schedule.lr;
        state.best_dev_score = schedule.best;
        state.epochs_since_improvement = schedule.since_improvement;
        if observation == Observation::Annealed {
            log::info!("learning rate annealed to {}", schedule.lr);
        }
        if schedule.lr < config.min_lr {
            log::info!("learning rate {} below min_lr {}; stopping", schedule.lr, config.min_lr);
            break;
        }
    }
    Ok(FitOutcome { state, best_model, log })
}
