//! CoNLL-U treebank format. Only FORM, UPOS, HEAD, and DEPREL are modeled;
//! the remaining columns ride along opaquely so that accepted files round-trip.
//! Multiword-token ranges and empty nodes are preserved on disk but skipped
//! for annotation layers.

use std::io::{BufRead, Write};

use super::FormatError;
use crate::types::AnnotatedSentence;

/// One sentence as stored on disk: leading comments, the raw 10-column rows,
/// and the modeled annotation layers extracted from them.
#[derive(Debug, Clone, PartialEq)]
pub struct ConlluSentence {
    pub comments: Vec<String>,
    rows: Vec<[String; 10]>,
    annotated: AnnotatedSentence,
}

impl ConlluSentence {
    pub fn annotated(&self) -> &AnnotatedSentence {
        &self.annotated
    }

    /// Builds a sentence with canonical rows (unmodeled columns set to `_`).
    pub fn from_annotated(sentence: AnnotatedSentence) -> Self {
        let rows = sentence
            .tokens()
            .iter()
            .enumerate()
            .map(|(i, form)| {
                let upos = sentence
                    .pos()
                    .and_then(|p| p[i].clone())
                    .unwrap_or_else(|| "_".into());
                let head = sentence
                    .heads()
                    .and_then(|h| h[i])
                    .map(|h| h.to_string())
                    .unwrap_or_else(|| "_".into());
                let deprel = sentence
                    .deprels()
                    .and_then(|d| d[i].clone())
                    .unwrap_or_else(|| "_".into());
                [
                    (i + 1).to_string(),
                    form.clone(),
                    "_".into(),
                    upos,
                    "_".into(),
                    "_".into(),
                    head,
                    deprel,
                    "_".into(),
                    "_".into(),
                ]
            })
            .collect();
        Self {
            comments: Vec::new(),
            rows,
            annotated: sentence,
        }
    }
}

enum RowId {
    Token(usize),
    Range,
    Empty,
}

fn parse_id(field: &str, lineno: usize) -> Result<RowId, FormatError> {
    if field.contains('-') {
        Ok(RowId::Range)
    } else if field.contains('.') {
        Ok(RowId::Empty)
    } else {
        field
            .parse::<usize>()
            .map(RowId::Token)
            .map_err(|_| FormatError::parse(lineno, format!("invalid token ID `{field}`")))
    }
}

pub fn read_conllu(reader: impl BufRead) -> Result<Vec<ConlluSentence>, FormatError> {
    let mut sentences = Vec::new();
    let mut comments: Vec<String> = Vec::new();
    let mut rows: Vec<[String; 10]> = Vec::new();
    let mut token_lines: Vec<usize> = Vec::new();
    let mut first_line = 0usize;

    let finish = |comments: &mut Vec<String>,
                      rows: &mut Vec<[String; 10]>,
                      token_lines: &mut Vec<usize>,
                      first_line: usize|
     -> Result<Option<ConlluSentence>, FormatError> {
        if comments.is_empty() && rows.is_empty() {
            return Ok(None);
        }
        let annotated = extract_annotated(rows, token_lines, first_line)?;
        Ok(Some(ConlluSentence {
            comments: std::mem::take(comments),
            rows: std::mem::take(rows),
            annotated,
        }))
    };

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.is_empty() {
            if let Some(s) = finish(&mut comments, &mut rows, &mut token_lines, first_line)? {
                sentences.push(s);
            }
            token_lines.clear();
            continue;
        }
        if comments.is_empty() && rows.is_empty() {
            first_line = lineno;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if !rows.is_empty() {
                return Err(FormatError::parse(lineno, "comment inside sentence body"));
            }
            comments.push(comment.trim_start().to_string());
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 10 {
            return Err(FormatError::parse(
                lineno,
                format!("expected 10 tab-separated columns, found {}", fields.len()),
            ));
        }
        if let RowId::Token(_) = parse_id(fields[0], lineno)? {
            token_lines.push(lineno);
        }
        let mut row: [String; 10] = Default::default();
        for (slot, field) in row.iter_mut().zip(fields) {
            *slot = field.to_string();
        }
        rows.push(row);
    }
    if let Some(s) = finish(&mut comments, &mut rows, &mut token_lines, first_line)? {
        sentences.push(s);
    }
    Ok(sentences)
}

fn extract_annotated(
    rows: &[[String; 10]],
    token_lines: &[usize],
    first_line: usize,
) -> Result<AnnotatedSentence, FormatError> {
    let mut tokens = Vec::new();
    let mut pos = Vec::new();
    let mut heads = Vec::new();
    let mut deprels = Vec::new();
    let mut line_iter = token_lines.iter();
    for row in rows {
        let lineno = match parse_id(&row[0], first_line)? {
            RowId::Token(id) => {
                let lineno = *line_iter.next().unwrap_or(&first_line);
                if id != tokens.len() + 1 {
                    return Err(FormatError::parse(
                        lineno,
                        format!("token ID `{id}` out of sequence, expected {}", tokens.len() + 1),
                    ));
                }
                lineno
            }
            _ => continue,
        };
        tokens.push(row[1].clone());
        pos.push(if row[3] == "_" {
            None
        } else {
            Some(row[3].clone())
        });
        heads.push(if row[6] == "_" {
            None
        } else {
            let h: usize = row[6].parse().map_err(|_| {
                FormatError::parse(lineno, format!("non-integer HEAD `{}`", row[6]))
            })?;
            Some(h)
        });
        deprels.push(if row[7] == "_" {
            None
        } else {
            Some(row[7].clone())
        });
    }
    let pos = pos.iter().any(Option::is_some).then_some(pos);
    let heads = heads.iter().any(Option::is_some).then_some(heads);
    let deprels = deprels.iter().any(Option::is_some).then_some(deprels);
    AnnotatedSentence::new(tokens, pos, None, heads, deprels)
        .map_err(|e| FormatError::at_line(first_line, e))
}

pub fn write_conllu(
    sentences: &[ConlluSentence],
    mut writer: impl Write,
) -> Result<(), FormatError> {
    for sentence in sentences {
        for comment in &sentence.comments {
            writeln!(writer, "# {comment}")?;
        }
        for row in &sentence.rows {
            writeln!(writer, "{}", row.join("\t"))?;
        }
        writeln!(writer)?;
    }
    Ok(())
}
