//! Pharaoh alignment format: one sentence pair per line, whitespace-separated
//! `i-j` links. Sentence lengths are not encoded; they are inferred as
//! `max index + 1` and can be widened afterwards via [`LinkSet::with_lengths`].

use std::io::{BufRead, Write};

use super::FormatError;
use crate::types::LinkSet;

pub fn read_pharaoh(reader: impl BufRead) -> Result<Vec<LinkSet>, FormatError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let mut pairs = Vec::new();
        for field in line.split_ascii_whitespace() {
            let (i, j) = field
                .split_once('-')
                .ok_or_else(|| FormatError::parse(lineno, format!("malformed pair `{field}`")))?;
            let i: usize = i.parse().map_err(|_| {
                FormatError::parse(lineno, format!("invalid source index in `{field}`"))
            })?;
            let j: usize = j.parse().map_err(|_| {
                FormatError::parse(lineno, format!("invalid target index in `{field}`"))
            })?;
            pairs.push((i, j));
        }
        out.push(LinkSet::from_pairs_inferred(pairs));
    }
    Ok(out)
}

pub fn write_pharaoh(link_sets: &[LinkSet], mut writer: impl Write) -> Result<(), FormatError> {
    for links in link_sets {
        let mut first = true;
        for (i, j) in links.links() {
            if first {
                write!(writer, "{i}-{j}")?;
                first = false;
            } else {
                write!(writer, " {i}-{j}")?;
            }
        }
        writeln!(writer)?;
    }
    Ok(())
}
