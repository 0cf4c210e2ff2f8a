//! CoNLL column format: one token per line, blank line between sentences.

use serde::{Deserialize, Serialize};

use super::tag::{Tag, TagScheme};
use super::{CorpusError, Sentence, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delimiter {
    /// Any run of spaces and tabs.
    Whitespace,
    Tab,
    Space,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagColumn {
    Last,
    Index(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub token_col: usize,
    pub tag_col: TagColumn,
    pub delimiter: Delimiter,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        ColumnSpec {
            token_col: 0,
            tag_col: TagColumn::Last,
            delimiter: Delimiter::Whitespace,
        }
    }
}

impl ColumnSpec {
    pub fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self.delimiter {
            Delimiter::Whitespace => line.split([' ', '\t']).filter(|f| !f.is_empty()).collect(),
            Delimiter::Tab => line.split('\t').collect(),
            Delimiter::Space => line.split(' ').collect(),
        }
    }

    fn tag_index(&self, fields: usize) -> usize {
        match self.tag_col {
            TagColumn::Last => fields.saturating_sub(1),
            TagColumn::Index(i) => i,
        }
    }

    fn required_fields(&self) -> usize {
        match self.tag_col {
            TagColumn::Last => self.token_col + 2,
            TagColumn::Index(i) => self.token_col.max(i) + 1,
        }
    }
}

/// What to do with an `I-t` that does not continue a `t` chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IobMode {
    /// Reject the file.
    Strict,
    /// Rewrite the orphan to `B-t` and log a warning (IOB1 input).
    #[default]
    Repair,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    pub columns: ColumnSpec,
    pub iob: IobMode,
}

/// One non-blank, non-`-DOCSTART-` line, split into fields.
struct Row<'a> {
    pub line_no: usize,
    pub fields: Vec<&'a str>,
}

/// Groups the lines of a CoNLL stream into sentences of rows.
/// Line numbers are 1-based.
fn rows_by_sentence<'a>(
    text: &'a str,
    columns: &ColumnSpec,
) -> Result<Vec<Vec<Row<'a>>>, CorpusError> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    let needed = columns.required_fields();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            continue;
        }
        let fields = columns.split(line);
        if fields.first().is_some_and(|f| f.starts_with("-DOCSTART-")) {
            continue;
        }
        if fields.len() < needed {
            return Err(CorpusError::Parse {
                line: line_no,
                message: format!("expected at least {needed} columns, found {}", fields.len()),
            });
        }
        if fields[columns.token_col].is_empty() {
            return Err(CorpusError::Parse {
                line: line_no,
                message: "empty token field".into(),
            });
        }
        current.push(Row { line_no, fields });
    }
    if !current.is_empty() {
        out.push(current);
    }
    Ok(out)
}

/// Parses a CoNLL stream into sentences, in stream order.
pub fn parse_conll(
    text: &str,
    scheme: &TagScheme,
    options: &ParseOptions,
) -> Result<Vec<Sentence>, CorpusError> {
    let groups = rows_by_sentence(text, &options.columns)?;
    let mut sentences = Vec::with_capacity(groups.len());
    for rows in groups {
        let mut tokens: Vec<Token> = Vec::with_capacity(rows.len());
        for row in rows {
            let raw_tag = row.fields[options.columns.tag_index(row.fields.len())];
            let mut tag: Tag = raw_tag.parse().map_err(|_| CorpusError::UnknownTag {
                line: row.line_no,
                tag: raw_tag.to_string(),
            })?;
            if !scheme.contains(&tag) {
                return Err(CorpusError::UnknownTag {
                    line: row.line_no,
                    tag: raw_tag.to_string(),
                });
            }
            if !TagScheme::allows(tokens.last().map(|t| &t.tag), &tag) {
                match options.iob {
                    IobMode::Strict => {
                        return Err(CorpusError::SchemeViolation {
                            line: row.line_no,
                            tag: raw_tag.to_string(),
                        })
                    }
                    IobMode::Repair => {
                        log::warn!("line {}: orphan {raw_tag} rewritten to B-", row.line_no);
                        if let Tag::Inside(t) = tag {
                            tag = Tag::Begin(t);
                        }
                    }
                }
            }
            tokens.push(Token {
                text: row.fields[options.columns.token_col].to_string(),
                tag,
            });
        }
        sentences.push(Sentence::new(tokens));
    }
    Ok(sentences)
}

/// Collects the entity types named in the tag column of a stream.
pub fn discover_scheme(text: &str, columns: &ColumnSpec) -> Result<TagScheme, CorpusError> {
    let mut tags = Vec::new();
    for rows in rows_by_sentence(text, columns)? {
        for row in rows {
            let raw = row.fields[columns.tag_index(row.fields.len())];
            let tag: Tag = raw.parse().map_err(|_| CorpusError::UnknownTag {
                line: row.line_no,
                tag: raw.to_string(),
            })?;
            tags.push(tag);
        }
    }
    Ok(TagScheme::covering(&tags))
}

/// Writes `token<TAB>tag` lines with a blank line after each sentence.
pub fn write_conll(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for t in s.tokens() {
            out.push_str(&t.text);
            out.push('\t');
            out.push_str(&t.tag.to_string());
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gene() -> TagScheme {
        TagScheme::new(["Gene"])
    }

    #[test]
    fn single_token() {
        let s = parse_conll("IL2\tB-Gene\n\n", &gene(), &ParseOptions::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].tokens()[0].text, "IL2");
        assert_eq!(s[0].tokens()[0].tag, Tag::Begin("Gene".into()));
    }

    #[test]
    fn empty_stream() {
        assert!(parse_conll("", &gene(), &ParseOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn docstart_and_crlf_are_ignored() {
        let text = "-DOCSTART- -X- O O\r\n\r\nIL2 NN B-Gene\r\nbinds VB O\r\n";
        let s = parse_conll(text, &gene(), &ParseOptions::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].len(), 2);
    }

    #[test]
    fn too_few_columns_reports_line() {
        let err = parse_conll("a O\nb\n", &gene(), &ParseOptions::default()).unwrap_err();
        assert_eq!(
            err,
            CorpusError::Parse {
                line: 2,
                message: "expected at least 2 columns, found 1".into()
            }
        );
    }

    #[test]
    fn unknown_tag_reports_line() {
        let err = parse_conll("a O\n\nb B-Disease\n", &gene(), &ParseOptions::default()).unwrap_err();
        assert_eq!(err, CorpusError::UnknownTag { line: 3, tag: "B-Disease".into() });
    }

    #[test]
    fn orphan_inside_is_repaired_or_rejected() {
        let text = "a O\nb I-Gene\n";
        let s = parse_conll(text, &gene(), &ParseOptions::default()).unwrap();
        assert_eq!(s[0].tokens()[1].tag, Tag::Begin("Gene".into()));
        let strict = ParseOptions {
            iob: IobMode::Strict,
            ..ParseOptions::default()
        };
        assert_eq!(
            parse_conll(text, &gene(), &strict).unwrap_err(),
            CorpusError::SchemeViolation { line: 2, tag: "I-Gene".into() }
        );
    }

    #[test]
    fn explicit_columns() {
        let spec = ColumnSpec {
            token_col: 1,
            tag_col: TagColumn::Index(0),
            delimiter: Delimiter::Tab,
        };
        let opts = ParseOptions { columns: spec, iob: IobMode::Strict };
        let s = parse_conll("B-Gene\tIL-2\tx\n", &gene(), &opts).unwrap();
        assert_eq!(s[0].tokens()[0].text, "IL-2");
    }

    #[test]
    fn tokens_survive_byte_exact() {
        let text = "N-acetyl-cysteine O\nα-synuclein B-Gene\n";
        let s = parse_conll(text, &gene(), &ParseOptions::default()).unwrap();
        assert_eq!(s[0].tokens()[0].text, "N-acetyl-cysteine");
        assert_eq!(s[0].tokens()[1].text, "α-synuclein");
    }

    #[test]
    fn discover_collects_types() {
        let s = discover_scheme("a B-Gene\nb O\n\nc I-Species\n", &ColumnSpec::default()).unwrap();
        assert_eq!(s.entity_types(), ["Gene", "Species"]);
    }
}
