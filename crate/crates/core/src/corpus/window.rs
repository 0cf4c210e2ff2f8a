use super::{Sentence, Tag};

/// Splits one sentence into windows of at most `max_len` tokens.
///
/// Each cut is placed at the latest boundary within the limit that does not
/// fall inside an entity (the next token is not `I-`). If the whole window
/// is one entity, the cut falls at the limit and the second flag is `true`.
pub fn window_sentence(sentence: &Sentence, max_len: usize) -> (Vec<Sentence>, bool) {
    assert!(max_len >= 1, "max_seq_len must be at least 1");
    let tokens = sentence.tokens();
    if tokens.len() <= max_len {
        return (vec![sentence.clone()], false);
    }
    let mut out = Vec::new();
    let mut forced = false;
    let mut start = 0;
    while tokens.len() - start > max_len {
        let limit = start + max_len;
        let cut = (start + 1..=limit)
            .rev()
            .find(|&i| !matches!(tokens[i].tag, Tag::Inside(_)));
        let cut = cut.unwrap_or_else(|| {
            forced = true;
            limit
        });
        out.push(Sentence::new(tokens[start..cut].to_vec()));
        start = cut;
    }
    out.push(Sentence::new(tokens[start..].to_vec()));
    (out, forced)
}

/// Windows every over-length sentence; shorter ones pass through unchanged.
pub fn window_long_sentences(sentences: &[Sentence], max_len: usize) -> Vec<Sentence> {
    let mut out = Vec::with_capacity(sentences.len());
    for (i, s) in sentences.iter().enumerate() {
        let (windows, forced) = window_sentence(s, max_len);
        if forced {
            log::warn!(
                "sentence {i}: an entity longer than {max_len} tokens was split at the length limit"
            );
        }
        out.extend(windows);
    }
    out
}
