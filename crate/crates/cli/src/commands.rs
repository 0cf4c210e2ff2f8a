use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use seqtag_core::checkpoint::sha256_hex;
use seqtag_core::corpus::{
    corpus_stats as compute_stats, discover_scheme, parse_conll, window_sentence, ColumnSpec, Corpus, CorpusStats, ParseOptions,
    Sentence, Tag, TagScheme, Token,
};
use seqtag_core::embeddings::{
    load_word_vectors, pretrain_lm as run_pretrain, CharLm, CharVocab, Direction, EmbeddingError, StackedEmbedding,
};
use seqtag_core::eval::{evaluate as score, read_aligned_pair, read_three_column, render_json, render_text, RepairMode};
use seqtag_core::numerics::Rng;
use seqtag_core::tagger::{fit, predict_all, CheckpointSink, TaggerModel, TrainError};

use crate::config::{existing, optional_existing, RunConfig};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// An error paired with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn input(error: anyhow::Error) -> Failure {
        Failure { code: EXIT_INPUT, error }
    }

    pub fn numeric(error: anyhow::Error) -> Failure {
        Failure { code: EXIT_NUMERIC, error }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Failure {
        Failure::input(error)
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn json_line(value: &impl serde::Serialize) -> String {
    serde_json::to_string(value).expect("report serializes")
}

pub fn corpus_stats(files: &[PathBuf], json: bool) -> Result<(), Failure> {
    let mut total = CorpusStats::default();
    let mut per_file = Vec::new();
    for path in files {
        let text = read(path)?;
        let columns = ColumnSpec::default();
        let scheme = discover_scheme(&text, &columns).with_context(|| path.display().to_string())?;
        let sentences = parse_conll(&text, &scheme, &ParseOptions::default()).with_context(|| path.display().to_string())?;
        let stats = compute_stats(&sentences);
        total.merge(&stats);
        per_file.push((path.display().to_string(), stats));
    }
    if json {
        let files: serde_json::Map<String, serde_json::Value> = per_file
            .iter()
            .map(|(p, s)| (p.clone(), serde_json::to_value(s).expect("stats serialize")))
            .collect();
        println!("{}", json_line(&serde_json::json!({"files": files, "total": total})));
    } else {
        for (p, s) in &per_file {
            println!("# {p}");
            print!("{}", s.render_text());
        }
        if per_file.len() > 1 {
            println!("# total");
            print!("{}", total.render_text());
        }
    }
    Ok(())
}

fn prepare_out(config: &RunConfig) -> anyhow::Result<PathBuf> {
    let out = config.out_dir()?.to_path_buf();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    config.echo(&out)?;
    Ok(out)
}

pub fn pretrain_lm(config: &RunConfig) -> Result<(), Failure> {
    let text_path = existing(&config.text, "text")?;
    let out = prepare_out(config)?;
    let text = read(&text_path)?;
    let outcome = run_pretrain(&text, &config.pretrain_config()).map_err(|e| match e {
        EmbeddingError::NonFinite { .. } => Failure::numeric(e.into()),
        other => Failure::input(other.into()),
    })?;
    let metadata = serde_json::json!({
        "pretrain_config": config.pretrain_config(),
        "text_sha256": sha256_hex(text.as_bytes()),
        "log": outcome.log,
    });
    outcome.forward.save(&out.join("forward.charlm"), metadata.clone()).map_err(anyhow::Error::from)?;
    outcome.backward.save(&out.join("backward.charlm"), metadata).map_err(anyhow::Error::from)?;
    let mut log_text = String::new();
    for e in &outcome.log {
        let line = format!("{} epoch {} loss {:.6} perplexity {:.6}", e.direction, e.epoch, e.loss, e.perplexity);
        println!("{line}");
        log_text.push_str(&line);
        log_text.push('\n');
    }
    write(&out.join("pretrain_log.txt"), &log_text)?;
    let jsonl: String = outcome.log.iter().map(|e| json_line(e) + "\n").collect();
    write(&out.join("pretrain_log.jsonl"), &jsonl)?;
    Ok(())
}

fn load_split(path: &Path, scheme: &TagScheme, config: &RunConfig) -> anyhow::Result<Vec<Sentence>> {
    let options = ParseOptions {
        iob: config.iob_mode,
        ..ParseOptions::default()
    };
    parse_conll(&read(path)?, scheme, &options).with_context(|| path.display().to_string())
}

fn load_lm(path: &Option<PathBuf>, key: &str, direction: Direction) -> anyhow::Result<Option<CharLm>> {
    let Some(p) = optional_existing(path, key)? else {
        return Ok(None);
    };
    let lm = CharLm::load(&p).with_context(|| format!("loading {}", p.display()))?;
    if lm.direction != direction {
        return Err(anyhow!("{} holds a {} LM, expected {direction}", p.display(), lm.direction));
    }
    Ok(Some(lm))
}

pub fn train(config: &RunConfig) -> Result<(), Failure> {
    let train_path = existing(&config.train, "train")?;
    let dev_path = existing(&config.dev, "dev")?;
    let test_path = optional_existing(&config.test, "test")?;
    let vectors_path = existing(&config.vectors, "vectors")?;
    let out = prepare_out(config)?;

    let train_text = read(&train_path)?;
    let dev_text = read(&dev_path)?;
    let scheme = match &config.entity_types {
        Some(types) => TagScheme::new(types.iter().map(String::as_str)),
        None => {
            let a = discover_scheme(&train_text, &ColumnSpec::default()).context("train")?;
            let b = discover_scheme(&dev_text, &ColumnSpec::default()).context("dev")?;
            TagScheme::new(a.entity_types().iter().chain(b.entity_types()).map(String::as_str))
        }
    };
    let corpus = Corpus {
        train: load_split(&train_path, &scheme, config)?,
        dev: load_split(&dev_path, &scheme, config)?,
        test: match &test_path {
            Some(p) => load_split(p, &scheme, config)?,
            None => Vec::new(),
        },
        scheme: scheme.clone(),
    };
    corpus.check_trainable().map_err(anyhow::Error::from)?;

    let vectors_text = read(&vectors_path)?;
    let word = load_word_vectors(&vectors_text, config.oov_policy).with_context(|| vectors_path.display().to_string())?;
    let mut rng = Rng::new(config.seed);
    let mut lm_for = |path: &Option<PathBuf>, key: &str, direction: Direction| -> anyhow::Result<CharLm> {
        if let Some(lm) = load_lm(path, key, direction)? {
            return Ok(lm);
        }
        log::warn!("no {direction} LM checkpoint given; using a randomly initialized one");
        let text: String = corpus.train.iter().flat_map(|s| s.words().map(|w| format!("{w} "))).collect();
        Ok(CharLm::random(direction, CharVocab::from_text(&text), config.d_char, config.d_lm, &mut rng))
    };
    let fwd = lm_for(&config.lm_forward, "lm_forward", Direction::Forward)?;
    let bwd = lm_for(&config.lm_backward, "lm_backward", Direction::Backward)?;
    if fwd.d_lm() != bwd.d_lm() {
        return Err(Failure::input(anyhow!("forward and backward LMs differ in hidden size")));
    }
    let mut stack = StackedEmbedding::new(word, fwd, bwd, config.embedding_dropout);
    stack.dropout_scope = config.dropout_scope;
    let mut model = TaggerModel::new(stack, scheme, config.model_config(), &mut rng);

    let mut digests = serde_json::Map::new();
    for (key, path) in [
        ("train", Some(&train_path)),
        ("dev", Some(&dev_path)),
        ("test", test_path.as_ref()),
        ("vectors", Some(&vectors_path)),
        ("lm_forward", config.lm_forward.as_ref()),
        ("lm_backward", config.lm_backward.as_ref()),
    ] {
        if let Some(p) = path {
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            digests.insert(format!("{key}_sha256"), sha256_hex(&bytes).into());
        }
    }
    // The output directory is left out so checkpoints do not depend on where they are written.
    let mut recorded = serde_json::to_value(config).expect("config serializes");
    recorded.as_object_mut().expect("config is an object").remove("out");
    let sink = CheckpointSink {
        path: out.join("best.ckpt"),
        provenance: serde_json::json!({"run_config": recorded, "digests": digests}),
    };
    let outcome = fit(&mut model, &corpus, &config.train_config(), Some(&sink)).map_err(|e| match e {
        TrainError::NonFinite { .. } => Failure::numeric(e.into()),
        other => Failure::input(other.into()),
    })?;

    let text: String = outcome.log.iter().map(|l| l.render_text() + "\n").collect();
    write(&out.join("train_log.txt"), &text)?;
    let jsonl: String = outcome.log.iter().map(|l| json_line(l) + "\n").collect();
    write(&out.join("train_log.jsonl"), &jsonl)?;
    write(&out.join("train_state.json"), &(serde_json::to_string_pretty(&outcome.state).expect("state serializes") + "\n"))?;
    println!(
        "best epoch {} with dev score {:.6}; checkpoint {}",
        outcome.state.best_epoch.unwrap_or_default(),
        outcome.state.best_dev_score.unwrap_or(f64::NAN),
        sink.path.display()
    );

    if !corpus.test.is_empty() {
        let pred = predict_all(&outcome.best_model, &corpus.test);
        let gold: Vec<Vec<Tag>> = corpus.test.iter().map(Sentence::tags).collect();
        let report = score(&gold, &pred, RepairMode::NewSpan).map_err(anyhow::Error::from)?;
        let table = render_text(&report);
        println!("test evaluation:\n{table}");
        write(&out.join("test_eval.txt"), &table)?;
        write(&out.join("test_eval.json"), &(json_line(&render_json(&report)) + "\n"))?;
    }
    Ok(())
}

/// Input lines grouped into sentences, remembering which line each token
/// came from.
struct TagInput<'a> {
    lines: Vec<&'a str>,
    sentences: Vec<(Vec<usize>, Sentence)>,
}

fn read_tag_input(text: &str) -> TagInput<'_> {
    let lines: Vec<&str> = text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
    let mut sentences = Vec::new();
    let mut idx = Vec::new();
    let mut tokens = Vec::new();
    let mut flush = |idx: &mut Vec<usize>, tokens: &mut Vec<Token>| {
        if !idx.is_empty() {
            sentences.push((std::mem::take(idx), Sentence::new(std::mem::take(tokens))));
        }
    };
    for (i, line) in lines.iter().enumerate() {
        let first = line.split([' ', '\t']).find(|f| !f.is_empty());
        match first {
            None => flush(&mut idx, &mut tokens),
            Some(f) if f.starts_with("-DOCSTART-") => flush(&mut idx, &mut tokens),
            Some(f) => {
                idx.push(i);
                tokens.push(Token::new(f, Tag::Outside));
            }
        }
    }
    flush(&mut idx, &mut tokens);
    TagInput { lines, sentences }
}

pub fn tag(model_path: &Path, input: &Path, output: &Path) -> Result<(), Failure> {
    let model = TaggerModel::load(model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let text = read(input)?;
    let parsed = read_tag_input(&text);
    let mut windows = Vec::new();
    let mut owners = Vec::new();
    for (k, (_, s)) in parsed.sentences.iter().enumerate() {
        for w in window_sentence(s, model.config.max_seq_len).0 {
            windows.push(w);
            owners.push(k);
        }
    }
    let predicted = predict_all(&model, &windows);
    let mut per_sentence: Vec<Vec<Tag>> = vec![Vec::new(); parsed.sentences.len()];
    for (k, tags) in owners.into_iter().zip(predicted) {
        per_sentence[k].extend(tags);
    }
    let mut line_tags: Vec<Option<&Tag>> = vec![None; parsed.lines.len()];
    for ((idx, _), tags) in parsed.sentences.iter().zip(&per_sentence) {
        for (&i, t) in idx.iter().zip(tags) {
            line_tags[i] = Some(t);
        }
    }
    let mut out = String::with_capacity(text.len() * 2);
    for (line, t) in parsed.lines.iter().zip(line_tags) {
        out.push_str(line);
        if let Some(t) = t {
            out.push('\t');
            out.push_str(&t.to_string());
        }
        out.push('\n');
    }
    write(output, &out)?;
    Ok(())
}

pub fn evaluate(gold: &Path, pred: Option<&Path>, json: bool, out: Option<&Path>) -> Result<(), Failure> {
    let gold_text = read(gold)?;
    let (g, p) = match pred {
        Some(pp) => read_aligned_pair(&gold_text, &read(pp)?),
        None => read_three_column(&gold_text),
    }
    .map_err(anyhow::Error::from)?;
    let report = score(&g, &p, RepairMode::NewSpan).map_err(anyhow::Error::from)?;
    let table = render_text(&report);
    let json_text = json_line(&render_json(&report));
    if json {
        println!("{json_text}");
    } else {
        print!("{table}");
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write(&dir.join("eval.txt"), &table)?;
        write(&dir.join("eval.json"), &(json_text + "\n"))?;
    }
    Ok(())
}
