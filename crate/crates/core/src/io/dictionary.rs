//! Weighted bilingual dictionary TSV: `source<TAB>target[<TAB>weight]`,
//! weight defaulting to 1.0.

use std::io::{BufRead, Write};

use super::FormatError;
use crate::types::{TypeError, WeightedDictionary};

pub fn read_dictionary(reader: impl BufRead) -> Result<WeightedDictionary, FormatError> {
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let (source, target, weight) = match fields.as_slice() {
            [s, t] => (*s, *t, 1.0),
            [s, t, w] => {
                let weight: f64 = w.parse().map_err(|_| {
                    FormatError::parse(lineno, format!("invalid weight `{w}`"))
                })?;
                (*s, *t, weight)
            }
            _ => {
                return Err(FormatError::parse(
                    lineno,
                    format!("expected 2 or 3 columns, found {}", fields.len()),
                ))
            }
        };
        if source.is_empty() || target.is_empty() {
            return Err(FormatError::at_line(lineno, TypeError::EmptyToken));
        }
        if !weight.is_finite() || weight < 0.0 {
            return Err(FormatError::at_line(
                lineno,
                TypeError::NegativeWeight {
                    word: source.to_string(),
                    target: target.to_string(),
                    weight,
                },
            ));
        }
        rows.push((source.to_string(), target.to_string(), weight));
    }
    WeightedDictionary::from_rows(rows).map_err(FormatError::from)
}

pub fn write_dictionary(
    dict: &WeightedDictionary,
    mut writer: impl Write,
) -> Result<(), FormatError> {
    for (source, translations) in dict.iter() {
        for (target, weight) in translations {
            writeln!(writer, "{source}\t{target}\t{weight}")?;
        }
    }
    Ok(())
}
