//! Text ingestion and binary snapshots for [`SampleMatrix`].
//!
//! Triples are `i,j,value` with 1-based indices, one per line. Blank lines and
//! lines starting with `#` are skipped.
//!
//! A snapshot is the magic `L2S1`, then `m` and `n` as little-endian `u64`,
//! then one `(i: u64, j: u64, value: f64)` record per nonzero until end of
//! file. Snapshot indices are 0-based.

use std::io::{BufRead, Read, Write};

use super::SampleMatrix;
use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"L2S1";

/// Parses `i,j,value` lines into zero-based triples, checking indices against
/// the `rows x cols` shape.
pub fn parse_triples<R: BufRead>(reader: R, rows: usize, cols: usize) -> Result<Vec<(usize, usize, f64)>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("expected `i,j,value`, got {} field(s)", fields.len()),
            });
        }
        let index = |s: &str, bound: usize, what: &str| -> Result<usize> {
            let v: usize =
                s.parse().map_err(|_| Error::Parse { line: lineno, reason: format!("bad {what} index `{s}`") })?;
            if v == 0 || v > bound {
                return Err(Error::Parse { line: lineno, reason: format!("{what} index {v} outside 1..={bound}") });
            }
            Ok(v - 1)
        };
        let i = index(fields[0], rows, "row")?;
        let j = index(fields[1], cols, "column")?;
        let value: f64 = fields[2]
            .parse()
            .map_err(|_| Error::Parse { line: lineno, reason: format!("bad value `{}`", fields[2]) })?;
        if !value.is_finite() {
            return Err(Error::Parse { line: lineno, reason: "value must be finite".into() });
        }
        out.push((i, j, value));
    }
    Ok(out)
}

pub fn write_snapshot<W: Write>(matrix: &SampleMatrix, mut w: W) -> Result<()> {
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&(matrix.nrows() as u64).to_le_bytes())?;
    w.write_all(&(matrix.ncols() as u64).to_le_bytes())?;
    for (i, j, x) in matrix.triples() {
        w.write_all(&(i as u64).to_le_bytes())?;
        w.write_all(&(j as u64).to_le_bytes())?;
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reloads a snapshot, rebuilding every tree from the records.
pub fn read_snapshot<R: Read>(mut r: R) -> Result<SampleMatrix> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 20 || &bytes[..4] != SNAPSHOT_MAGIC {
        return Err(Error::Format("missing L2S1 snapshot header".into()));
    }
    let rows = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = &bytes[20..];
    if body.len() % 24 != 0 {
        return Err(Error::Format(format!("truncated record: {} trailing bytes", body.len() % 24)));
    }
    let mut matrix = SampleMatrix::new(rows, cols)?;
    for rec in body.chunks_exact(24) {
        let i = u64::from_le_bytes(rec[0..8].try_into().unwrap()) as usize;
        let j = u64::from_le_bytes(rec[8..16].try_into().unwrap()) as usize;
        let x = f64::from_le_bytes(rec[16..24].try_into().unwrap());
        matrix.set(i, j, x).map_err(|e| Error::Format(format!("bad record ({i}, {j}): {e}")))?;
    }
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_comments_and_blanks() {
        let text = "# header\n1,1,2.5\n\n 2 , 3 , -1e-3 \n";
        let t = parse_triples(text.as_bytes(), 2, 3).unwrap();
        assert_eq!(t, vec![(0, 0, 2.5), (1, 2, -1e-3)]);
    }

    #[test]
    fn reports_line_numbers() {
        let text = "1,1,1\n# ok\n2,x,1\n";
        match parse_triples(text.as_bytes(), 2, 2) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_triples("3,1,1".as_bytes(), 2, 2), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_triples("1,1".as_bytes(), 2, 2), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn snapshot_layout() {
        let a = SampleMatrix::from_triples(2, 3, &[(1, 2, 4.0)]).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&a, &mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 16 + 24);
        assert_eq!(&buf[..4], b"L2S1");
        assert_eq!(u64::from_le_bytes(buf[4..12].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(buf[20..28].try_into().unwrap()), 1);
        let b = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(b.get(1, 2).unwrap(), 4.0);
        assert!(read_snapshot(&buf[..30]).is_err());
        assert!(read_snapshot(&b"XXXX"[..]).is_err());
    }
}
