//! Readers and writers for the on-disk formats the toolkit consumes and
//! produces: fastText-style `.vec` embeddings, Pharaoh alignments, CoNLL-U
//! treebanks, PVEC checkpoints, weighted dictionaries, and BIO columns.
//!
//! Readers validate as they parse and report violations with line numbers.
//! Writers emit a canonical form; `read -> write -> read` is the identity on
//! every accepted input, and byte-exact on files already in canonical form.

mod bio;
mod conllu;
mod dictionary;
mod pharaoh;
mod pvec;
mod vec;

pub use bio::{read_bio, write_bio};
pub use conllu::{read_conllu, write_conllu, ConlluSentence};
pub use dictionary::{read_dictionary, write_dictionary};
pub use pharaoh::{read_pharaoh, write_pharaoh};
pub use pvec::{read_pvec, write_pvec};
pub use vec::{read_vec, write_vec};

use std::io;

use thiserror::Error;

use crate::types::TypeError;

/// Error raised while reading or writing an on-disk format.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Malformed(String),
    #[error("line {line}: {source}")]
    Invariant {
        line: usize,
        #[source]
        source: TypeError,
    },
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl FormatError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        FormatError::Parse {
            line,
            message: message.into(),
        }
    }

    fn at_line(line: usize, source: TypeError) -> Self {
        FormatError::Invariant { line, source }
    }
}

/// Reads a two-column TSV of word pairs (used for alignment supervision).
pub fn read_tsv_pairs(reader: impl io::BufRead) -> Result<Vec<(String, String)>, FormatError> {
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                pairs.push((a.to_string(), b.to_string()));
            }
            _ => {
                return Err(FormatError::parse(
                    idx + 1,
                    "expected exactly two tab-separated non-empty fields",
                ))
            }
        }
    }
    Ok(pairs)
}
