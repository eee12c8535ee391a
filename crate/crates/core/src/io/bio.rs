//! BIO column format: `token<TAB>label` per line, blank line between
//! sentences. Label strings are not interpreted here; validity is the
//! business of the projection operations.

use std::io::{BufRead, Write};

use super::FormatError;

/// One sentence as parallel token/label vectors.
pub type BioSentence = (Vec<String>, Vec<String>);

pub fn read_bio(reader: impl BufRead) -> Result<Vec<BioSentence>, FormatError> {
    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            if !tokens.is_empty() {
                sentences.push((std::mem::take(&mut tokens), std::mem::take(&mut labels)));
            }
            continue;
        }
        let (token, label) = line
            .split_once('\t')
            .ok_or_else(|| FormatError::parse(idx + 1, "expected `token<TAB>label`"))?;
        if label.contains('\t') {
            return Err(FormatError::parse(idx + 1, "too many columns"));
        }
        tokens.push(token.to_string());
        labels.push(label.to_string());
    }
    if !tokens.is_empty() {
        sentences.push((tokens, labels));
    }
    Ok(sentences)
}

pub fn write_bio(sentences: &[BioSentence], mut writer: impl Write) -> Result<(), FormatError> {
    for (i, (tokens, labels)) in sentences.iter().enumerate() {
        if i > 0 {
            writeln!(writer)?;
        }
        for (token, label) in tokens.iter().zip(labels) {
            writeln!(writer, "{token}\t{label}")?;
        }
    }
    Ok(())
}
