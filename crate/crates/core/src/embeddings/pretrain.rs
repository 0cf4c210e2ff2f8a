use serde::{Deserialize, Serialize};

use super::charlm::{CharLm, CharVocab, Direction};
use super::EmbeddingError;
use crate::numerics::{clip_grad_norm, sgd_step, Graph, ParamSet, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub d_char: usize,
    pub d_lm: usize,
    pub lr: f64,
    pub epochs: usize,
    pub bptt_window: usize,
    /// Windows per parameter update.
    pub batch: usize,
    pub clip: Option<f64>,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            d_char: 16,
            d_lm: 64,
            lr: 1.0,
            epochs: 10,
            bptt_window: 50,
            batch: 1,
            clip: Some(5.0),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainEpoch {
    pub direction: Direction,
    pub epoch: usize,
    /// Mean training loss over the epoch's windows.
    pub loss: f64,
    /// Perplexity of the whole stream after the epoch.
    pub perplexity: f64,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub forward: CharLm,
    pub backward: CharLm,
    pub log: Vec<PretrainEpoch>,
}

/// `⟨B⟩line1⟨B⟩line2…⟨B⟩` over the non-blank lines of `text`.
pub fn lm_stream(vocab: &CharVocab, text: &str) -> Vec<usize> {
    let mut ids = vec![CharVocab::BOUNDARY];
    for line in text.lines().map(|l| l.trim_end_matches('\r')) {
        if line.trim().is_empty() {
            continue;
        }
        ids.extend(vocab.encode(line));
        ids.push(CharVocab::BOUNDARY);
    }
    ids
}

/// Trains a forward LM on the stream and a backward LM on its reverse.
pub fn pretrain_lm(text: &str, config: &PretrainConfig) -> Result<PretrainOutcome, EmbeddingError> {
    if config.bptt_window == 0 || config.batch == 0 {
        return Err(EmbeddingError::Config("bptt_window and batch must be positive".into()));
    }
    let vocab = CharVocab::from_text(text);
    let stream = lm_stream(&vocab, text);
    if stream.len() < 2 {
        return Err(EmbeddingError::Empty("language model corpus"));
    }
    let chars = stream.len() - 1;
    if chars < config.bptt_window {
        return Err(EmbeddingError::Config(format!(
            "corpus has {chars} predictable symbols, fewer than the window of {}",
            config.bptt_window
        )));
    }
    let mut rng = Rng::new(config.seed);
    let mut log = Vec::new();
    let mut forward = CharLm::random(Direction::Forward, vocab.clone(), config.d_char, config.d_lm, &mut rng);
    train_one(&mut forward, &stream, config, &mut log)?;
    let reversed: Vec<usize> = stream.iter().rev().copied().collect();
    let mut backward = CharLm::random(Direction::Backward, vocab, config.d_char, config.d_lm, &mut rng);
    train_one(&mut backward, &reversed, config, &mut log)?;
    Ok(PretrainOutcome { forward, backward, log })
}

/// Truncated backpropagation through time over consecutive windows, with
/// the recurrent state carried (detached) from one window to the next.
pub fn train_one(
    lm: &mut CharLm,
    stream: &[usize],
    config: &PretrainConfig,
    log: &mut Vec<PretrainEpoch>,
) -> Result<(), EmbeddingError> {
    let w = config.bptt_window;
    let starts: Vec<usize> = (0..stream.len() - 1).step_by(w).collect();
    for epoch in 1..=config.epochs {
        let (mut h, mut c) = lm.zero_state();
        let mut total = 0.0;
        lm.zero_grads();
        let mut pending = 0;
        for (n, &start) in starts.iter().enumerate() {
            let end = (start + w).min(stream.len() - 1);
            let mut g = Graph::new();
            let vars = lm.bind(&mut g, true);
            let h0 = g.constant(h.clone());
            let c0 = g.constant(c.clone());
            let (hs, c_last) = vars.states(&mut g, &stream[start..end], h0, c0);
            let mut loss = vars.nll(&mut g, hs[0], stream[start + 1]);
            for (t, &hv) in hs.iter().enumerate().skip(1) {
                let term = vars.nll(&mut g, hv, stream[start + t + 1]);
                loss = g.add(loss, term);
            }
            let count = (end - start) as f64;
            let batch_len = config.batch.min(starts.len() - n + pending) as f64;
            let scaled = g.scale(loss, 1.0 / (count * batch_len));
            total += g.value(loss).item() / count;
            g.backward(scaled).accumulate_into(lm);
            h = g.value(*hs.last().expect("window is non-empty")).clone();
            c = g.value(c_last).clone();
            pending += 1;
            if pending == config.batch || n + 1 == starts.len() {
                if let Some(max) = config.clip {
                    clip_grad_norm(lm, max);
                }
                sgd_step(lm, config.lr).map_err(|e| EmbeddingError::NonFinite {
                    epoch,
                    parameter: e.name,
                })?;
                lm.zero_grads();
                pending = 0;
            }
        }
        let perplexity = lm.perplexity(stream);
        let loss = total / starts.len() as f64;
        log::info!("{} LM epoch {epoch}: loss {loss:.4}, perplexity {perplexity:.4}", lm.direction);
        log.push(PretrainEpoch {
            direction: lm.direction,
            epoch,
            loss,
            perplexity,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_layout() {
        let v = CharVocab::from_text("ab");
        assert_eq!(lm_stream(&v, "ab\n\nb\n"), [1, 2, 3, 1, 3, 1]);
    }

    #[test]
    fn errors() {
        let cfg = PretrainConfig::default();
        assert!(matches!(pretrain_lm("", &cfg), Err(EmbeddingError::Empty(_))));
        assert!(matches!(pretrain_lm("\n \n", &cfg), Err(EmbeddingError::Empty(_))));
        assert!(matches!(pretrain_lm("abc", &cfg), Err(EmbeddingError::Config(_))));
    }
}
