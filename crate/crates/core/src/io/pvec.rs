//! PVEC checkpoint format. ASCII header (`PVEC 1`, one `name<TAB>dims` line
//! per parameter, blank line), then the concatenated little-endian IEEE-754
//! f32 payload in header order, row-major.

use std::io::{Read, Write};

use super::FormatError;
use crate::types::ParamVector;

const MAGIC: &str = "PVEC 1";

pub fn read_pvec(mut reader: impl Read) -> Result<ParamVector, FormatError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;

    let header_end = find_blank_line(&bytes).ok_or_else(|| {
        FormatError::Malformed("missing blank line terminating the PVEC header".into())
    })?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| FormatError::Malformed("PVEC header is not valid UTF-8".into()))?;
    let payload = &bytes[header_end + 2..];

    let mut lines = header.split('\n');
    let magic = lines.next().unwrap_or("");
    if magic != MAGIC {
        return Err(FormatError::Malformed(format!(
            "bad magic: expected `{MAGIC}`, found `{magic}`"
        )));
    }

    let mut names = Vec::new();
    let mut shapes = Vec::new();
    let mut total = 0usize;
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let (name, dims) = line
            .split_once('\t')
            .ok_or_else(|| FormatError::parse(lineno, "expected `name<TAB>dims`"))?;
        let shape: Vec<usize> = if dims.is_empty() {
            Vec::new()
        } else {
            dims.split(',')
                .map(|d| {
                    d.parse::<usize>().map_err(|_| {
                        FormatError::parse(lineno, format!("invalid dimension `{d}`"))
                    })
                })
                .collect::<Result<_, _>>()?
        };
        let count: usize = shape.iter().product();
        total = total
            .checked_add(count)
            .ok_or_else(|| FormatError::Malformed("total size overflows".into()))?;
        names.push(name.to_string());
        shapes.push(shape);
    }

    if payload.len() != total * 4 {
        return Err(FormatError::Malformed(format!(
            "declared size ({} bytes) does not match payload size ({} bytes)",
            total * 4,
            payload.len()
        )));
    }

    let mut pv = ParamVector::new();
    let mut offset = 0usize;
    for (name, shape) in names.into_iter().zip(shapes) {
        let count: usize = shape.iter().product();
        let data = payload[offset..offset + count * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        offset += count * 4;
        pv.insert(name, shape, data)?;
    }
    Ok(pv)
}

pub fn write_pvec(pv: &ParamVector, mut writer: impl Write) -> Result<(), FormatError> {
    writeln!(writer, "{MAGIC}")?;
    for (name, entry) in pv.iter() {
        let dims = entry
            .shape
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(writer, "{name}\t{dims}")?;
    }
    writeln!(writer)?;
    for (_, entry) in pv.iter() {
        for value in &entry.data {
            writer.write_all(&value.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Byte offset of the `\n` that ends the last header line, such that the
/// following byte is the blank line's `\n`.
fn find_blank_line(bytes: &[u8]) -> Option<usize> {
    bytes.windows(2).position(|w| w == b"\n\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(pv: &ParamVector) -> ParamVector {
        let mut buf = Vec::new();
        write_pvec(pv, &mut buf).unwrap();
        read_pvec(buf.as_slice()).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut pv = ParamVector::new();
        pv.insert("w", vec![2], vec![1.0, 2.0]).unwrap();
        pv.insert("layer.bias", vec![2, 2], vec![-0.5, 0.25, 1e-7, 3.0])
            .unwrap();
        let reread = round_trip(&pv);
        assert_eq!(pv, reread);
        // Bytes too: writing the reread value reproduces the file.
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_pvec(&pv, &mut a).unwrap();
        write_pvec(&reread, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_param_vector_round_trips() {
        let pv = ParamVector::new();
        let mut buf = Vec::new();
        write_pvec(&pv, &mut buf).unwrap();
        assert_eq!(buf, b"PVEC 1\n\n");
        assert_eq!(round_trip(&pv), pv);
    }

    #[test]
    fn truncated_payload_is_size_mismatch() {
        let mut pv = ParamVector::new();
        pv.insert("w", vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        write_pvec(&pv, &mut buf).unwrap();
        buf.truncate(buf.len() - 4);
        let err = read_pvec(buf.as_slice()).unwrap_err();
        assert!(matches!(err, FormatError::Malformed(m) if m.contains("payload size")));
    }

    #[test]
    fn magic_mismatch_rejected() {
        let err = read_pvec(b"PVEC 2\n\n".as_slice()).unwrap_err();
        assert!(matches!(err, FormatError::Malformed(m) if m.contains("magic")));
    }

    #[test]
    fn scalar_shape_round_trips() {
        let mut pv = ParamVector::new();
        pv.insert("s", vec![], vec![42.0]).unwrap();
        assert_eq!(round_trip(&pv), pv);
    }
}
