//! BiLSTM-CRF tagger: model, checkpointing, and the annealed SGD training
//! loop.

pub mod lstm;
mod model;
mod train;

pub use lstm::{LstmCellParams, LstmVars};
pub use model::{ModelConfig, TaggerModel, TAGGER_KIND};
pub use train::{
    fit, predict_all, AnnealSchedule, CheckpointSink, DevMetric, EpochLog, FitOutcome, Observation,
    TrainConfig, TrainError, TrainState,
};
