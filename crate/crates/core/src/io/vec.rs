//! fastText-style `.vec` text format: a header line `n d` followed by one
//! line per item, `token v1 .. vd`.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use super::FormatError;
use crate::types::{EmbeddingSpace, TypeError};

pub fn read_vec(reader: impl BufRead) -> Result<EmbeddingSpace, FormatError> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| FormatError::parse(1, "missing header line"))??;
    let mut parts = header.split_ascii_whitespace();
    let (n, d) = match (parts.next(), parts.next(), parts.next()) {
        (Some(n), Some(d), None) => {
            let n: usize = n
                .parse()
                .map_err(|_| FormatError::parse(1, format!("invalid item count `{n}`")))?;
            let d: usize = d
                .parse()
                .map_err(|_| FormatError::parse(1, format!("invalid dimension `{d}`")))?;
            (n, d)
        }
        _ => return Err(FormatError::parse(1, "header must be `n d`")),
    };
    if d == 0 {
        return Err(FormatError::at_line(1, TypeError::ZeroDimension));
    }

    let mut items = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * d);
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_ascii_whitespace();
        let token = fields
            .next()
            .ok_or_else(|| FormatError::parse(lineno, "empty row"))?;
        if !seen.insert(token.to_string()) {
            return Err(FormatError::at_line(
                lineno,
                TypeError::DuplicateItem(token.to_string()),
            ));
        }
        let mut count = 0;
        for field in fields {
            let value: f64 = field.parse().map_err(|_| {
                FormatError::parse(lineno, format!("non-numeric field `{field}`"))
            })?;
            if !value.is_finite() {
                return Err(FormatError::at_line(
                    lineno,
                    TypeError::NonFinite(format!("token `{token}`")),
                ));
            }
            values.push(value);
            count += 1;
        }
        if count != d {
            return Err(FormatError::parse(
                lineno,
                format!("expected {d} values, found {count}"),
            ));
        }
        items.push(token.to_string());
    }
    if items.len() != n {
        return Err(FormatError::Malformed(format!(
            "header declares {n} items, found {}",
            items.len()
        )));
    }
    // Rows arrive item-major; the space stores items as columns.
    let matrix = DMatrix::from_row_slice(n.max(1), d, &values).transpose();
    let matrix = if n == 0 {
        DMatrix::zeros(d, 0)
    } else {
        matrix
    };
    EmbeddingSpace::new(items, matrix).map_err(FormatError::from)
}

pub fn write_vec(space: &EmbeddingSpace, mut writer: impl Write) -> Result<(), FormatError> {
    writeln!(writer, "{} {}", space.len(), space.dimension())?;
    for (j, item) in space.items().iter().enumerate() {
        write!(writer, "{item}")?;
        for value in space.vectors().column(j).iter() {
            write!(writer, " {value}")?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(text: &str) -> EmbeddingSpace {
        read_vec(text.as_bytes()).unwrap()
    }

    #[test]
    fn reads_two_item_space() {
        let s = space("2 2\na 1 0\nb 0 1");
        assert_eq!(s.items(), ["a".to_string(), "b".to_string()]);
        assert_eq!(s.vectors().column(0).as_slice(), [1.0, 0.0]);
        assert_eq!(s.vectors().column(1).as_slice(), [0.0, 1.0]);
    }

    #[test]
    fn reads_single_item_three_dims() {
        let s = space("1 3\nx 0.5 -0.5 2.0");
        assert_eq!(s.len(), 1);
        assert_eq!(s.dimension(), 3);
        assert_eq!(s.vectors().column(0).as_slice(), [0.5, -0.5, 2.0]);
    }

    #[test]
    fn duplicate_token_reports_line() {
        let err = read_vec("2 2\na 1 0\na 0 1".as_bytes()).unwrap_err();
        match err {
            FormatError::Invariant { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_reports_line() {
        let err = read_vec("1 3\nx 1 2".as_bytes()).unwrap_err();
        match err {
            FormatError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_numeric_field_reports_line() {
        let err = read_vec("1 2\nx 1 foo".as_bytes()).unwrap_err();
        match err {
            FormatError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("foo"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let s = space("3 2\na 1 0\nb 0.25 -1\nc 1e-3 2");
        let mut buf = Vec::new();
        write_vec(&s, &mut buf).unwrap();
        let reread = read_vec(buf.as_slice()).unwrap();
        assert_eq!(s, reread);
    }

    #[test]
    fn canonical_output_is_stable() {
        let text = "2 2\na 1 0\nb 0.25 -1\n";
        let s = space(text);
        let mut buf = Vec::new();
        write_vec(&s, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);
    }
}
