use thiserror::Error;

use crate::corpus::Tag;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlignmentError {
    #[error("line {line}: gold and prediction diverge ({detail})")]
    Diverged { line: usize, detail: String },
    #[error("line {line}: {detail}")]
    Malformed { line: usize, detail: String },
}

type TagSeqs = Vec<Vec<Tag>>;

fn fields(line: &str) -> Vec<&str> {
    line.split([' ', '\t']).filter(|f| !f.is_empty()).collect()
}

fn parse_tag(raw: &str, line: usize) -> Result<Tag, AlignmentError> {
    raw.parse().map_err(|_| AlignmentError::Malformed {
        line,
        detail: format!("malformed tag `{raw}`"),
    })
}

fn is_docstart(fs: &[&str]) -> bool {
    fs.first().is_some_and(|f| f.starts_with("-DOCSTART-"))
}

fn flush(cur: &mut Vec<Tag>, out: &mut TagSeqs) {
    if !cur.is_empty() {
        out.push(std::mem::take(cur));
    }
}

/// Reads two CoNLL files line by line. Both must have blank lines in the
/// same places and the same token in the first column; tags come from the
/// last column of each.
pub fn read_aligned_pair(gold: &str, pred: &str) -> Result<(TagSeqs, TagSeqs), AlignmentError> {
    let mut g_lines = gold.lines();
    let mut p_lines = pred.lines();
    let (mut gs, mut ps) = (Vec::new(), Vec::new());
    let (mut gcur, mut pcur) = (Vec::new(), Vec::new());
    let mut line = 0;
    loop {
        line += 1;
        let (g, p) = match (g_lines.next(), p_lines.next()) {
            (None, None) => break,
            (g, p) => (g.unwrap_or(""), p.unwrap_or("")),
        };
        let (gf, pf) = (fields(g), fields(p));
        if is_docstart(&gf) && is_docstart(&pf) {
            continue;
        }
        match (gf.is_empty(), pf.is_empty()) {
            (true, true) => {
                flush(&mut gcur, &mut gs);
                flush(&mut pcur, &mut ps);
                continue;
            }
            (false, false) => {}
            _ => {
                return Err(AlignmentError::Diverged {
                    line,
                    detail: "blank line in only one file".into(),
                })
            }
        }
        if gf.len() < 2 || pf.len() < 2 {
            return Err(AlignmentError::Malformed {
                line,
                detail: "expected a token and a tag column".into(),
            });
        }
        if gf[0] != pf[0] {
            return Err(AlignmentError::Diverged {
                line,
                detail: format!("token `{}` vs `{}`", gf[0], pf[0]),
            });
        }
        gcur.push(parse_tag(gf[gf.len() - 1], line)?);
        pcur.push(parse_tag(pf[pf.len() - 1], line)?);
    }
    flush(&mut gcur, &mut gs);
    flush(&mut pcur, &mut ps);
    Ok((gs, ps))
}

/// Reads `token … gold pred` lines: gold is the second-to-last column and
/// the prediction the last.
pub fn read_three_column(text: &str) -> Result<(TagSeqs, TagSeqs), AlignmentError> {
    let (mut gs, mut ps) = (Vec::new(), Vec::new());
    let (mut gcur, mut pcur) = (Vec::new(), Vec::new());
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let f = fields(raw);
        if is_docstart(&f) {
            continue;
        }
        if f.is_empty() {
            flush(&mut gcur, &mut gs);
            flush(&mut pcur, &mut ps);
            continue;
        }
        if f.len() < 3 {
            return Err(AlignmentError::Malformed {
                line,
                detail: format!("expected at least 3 columns, found {}", f.len()),
            });
        }
        gcur.push(parse_tag(f[f.len() - 2], line)?);
        pcur.push(parse_tag(f[f.len() - 1], line)?);
    }
    flush(&mut gcur, &mut gs);
    flush(&mut pcur, &mut ps);
    Ok((gs, ps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_pair_reads_sentences() {
        let gold = "a B-D\nb O\n\nc O\n";
        let pred = "a O\nb O\n\nc B-D\n";
        let (g, p) = read_aligned_pair(gold, pred).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(p[1], vec![Tag::Begin("D".into())]);
    }

    #[test]
    fn divergence_reports_first_line() {
        let err = read_aligned_pair("a O\nb O\n\nc O\n", "a O\nx O\n\nc O\n").unwrap_err();
        assert!(matches!(err, AlignmentError::Diverged { line: 2, .. }), "{err}");
        let err = read_aligned_pair("a O\nb O\n", "a O\n\nb O\n").unwrap_err();
        assert!(matches!(err, AlignmentError::Diverged { line: 2, .. }), "{err}");
        let err = read_aligned_pair("a O\nb O\n", "a O\n").unwrap_err();
        assert!(matches!(err, AlignmentError::Diverged { line: 2, .. }), "{err}");
    }

    #[test]
    fn three_column() {
        let (g, p) = read_three_column("a NN B-D O\nb NN I-D O\n").unwrap();
        assert_eq!(g[0].len(), 2);
        assert_eq!(p[0], vec![Tag::Outside, Tag::Outside]);
        assert!(read_three_column("a O\n").is_err());
    }
}
