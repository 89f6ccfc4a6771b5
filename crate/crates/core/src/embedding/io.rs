use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use super::EmbeddingSpace;
use crate::error::{Error, Result};

/// Reads the text embedding format: a `<count> <dim>` header followed by one
/// `<token> <v1> ... <vdim>` line per word. With `limit`, only the first
/// `limit` rows are kept.
pub fn load_embeddings(path: impl AsRef<Path>, language: &str, limit: Option<usize>) -> Result<EmbeddingSpace> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file), &path.display().to_string(), language, limit)
}

pub(crate) fn read_embeddings<R: BufRead>(
    reader: R,
    name: &str,
    language: &str,
    limit: Option<usize>,
) -> Result<EmbeddingSpace> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(name, e))?,
        None => return Err(Error::parse(name, 1, "missing header")),
    };
    let fields: Vec<&str> = header.trim_end().split(' ').collect();
    let (count, dim) = match fields.as_slice() {
        [c, d] => {
            let c = c.parse::<usize>();
            let d = d.parse::<usize>();
            match (c, d) {
                (Ok(c), Ok(d)) => (c, d),
                _ => return Err(Error::parse(name, 1, format!("malformed header `{header}`"))),
            }
        }
        _ => return Err(Error::parse(name, 1, format!("malformed header `{header}`"))),
    };
    let keep = limit.map_or(count, |l| l.min(count));

    let mut words = Vec::with_capacity(keep);
    let mut values = Vec::with_capacity(keep * dim);
    let mut seen = std::collections::HashSet::with_capacity(keep);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if words.len() == keep {
            if limit.is_some() {
                break;
            }
            let line = line.map_err(|e| Error::io(name, e))?;
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::parse(name, lineno, format!("more rows than the {count} declared in header")));
        }
        let line = line.map_err(|e| Error::io(name, e))?;
        let line = line.trim_end_matches(['\r', ' ']);
        let mut parts = line.split(' ');
        let token = parts.next().unwrap_or_default();
        if token.is_empty() {
            return Err(Error::parse(name, lineno, "empty token"));
        }
        let start = values.len();
        for p in parts {
            let v: f64 = p
                .parse()
                .map_err(|_| Error::parse(name, lineno, format!("invalid number `{p}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(name, lineno, format!("non-finite value `{p}`")));
            }
            values.push(v);
        }
        let got = values.len() - start;
        if got != dim {
            return Err(Error::parse(
                name,
                lineno,
                format!("dimension mismatch: expected {dim} values, found {got}"),
            ));
        }
        if !seen.insert(token.to_string()) {
            return Err(Error::parse(name, lineno, format!("duplicate token `{token}`")));
        }
        words.push(token.to_string());
    }
    if words.len() < keep {
        return Err(Error::parse(
            name,
            words.len() + 2,
            format!("header declares {count} rows, file has {}", words.len()),
        ));
    }
    let matrix = Array2::from_shape_vec((words.len(), dim), values).expect("row lengths checked");
    EmbeddingSpace::from_rows(language, words, matrix)
}

/// Writes `space` in the text embedding format with 6-decimal values.
pub fn save_embeddings(space: &EmbeddingSpace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_embeddings(space, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_embeddings<W: Write>(space: &EmbeddingSpace, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{} {}", space.len(), space.dim())?;
    for (word, row) in space.vocab().words().iter().zip(space.matrix().rows()) {
        w.write_all(word.as_bytes())?;
        for v in row {
            // avoid "-0.000000" so equal spaces always print identically
            let v = if v.abs() < 5e-7 { 0.0 } else { *v };
            write!(w, " {v:.6}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn read(text: &str, limit: Option<usize>) -> Result<EmbeddingSpace> {
        read_embeddings(text.as_bytes(), "mem", "xx", limit)
    }

    #[test]
    fn reads_two_by_three() {
        let s = read("2 3\na 1 0 0\nb 0 1 0", None).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.dim(), 3);
        assert_eq!(s.row(0).to_vec(), vec![1.0, 0.0, 0.0]);
        assert_eq!(s.row(1).to_vec(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn limit_keeps_prefix() {
        let s = read("2 3\na 1 0 0\nb 0 1 0", Some(1)).unwrap();
        assert_eq!(s.vocab().words(), ["a"]);
    }

    #[test]
    fn dimension_mismatch_reports_line() {
        let err = read("2 3\na 1 0\nb 0 1 0", None).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("dimension mismatch"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fasttext_trailing_space_accepted() {
        let s = read("1 2\nx 0.5 0.25 \n", None).unwrap();
        assert_eq!(s.row(0).to_vec(), vec![0.5, 0.25]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(read("2\na 1", None), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read("1 1\na NaN", None), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(read("2 1\na 1\na 2", None), Err(Error::Parse { line: 3, .. })));
        // a token containing a space shows up as an extra field
        assert!(matches!(read("1 1\nnew york 1", None), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(read("3 1\na 1\nb 2", None), Err(Error::Parse { .. })));
    }

    #[test]
    fn empty_space_writes_header_only() {
        let s = read("0 4\n", None).unwrap();
        let mut buf = Vec::new();
        write_embeddings(&s, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 4\n");
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        let s = read("2 3\na 1 0 0\nb 0 1 0", None).unwrap();
        save_embeddings(&s, &path).unwrap();
        let t = load_embeddings(&path, "xx", None).unwrap();
        assert_eq!(s.vocab().words(), t.vocab().words());
        for (a, b) in s.matrix().iter().zip(t.matrix().iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let s = read("0 2\n", None).unwrap();
        let err = save_embeddings(&s, "/nonexistent-dir/sub/v.txt").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    proptest! {
        #[test]
        fn round_trip_within_print_precision(
            rows in proptest::collection::vec(proptest::collection::vec(-100.0f64..100.0, 3), 0..12)
        ) {
            let words: Vec<String> = (0..rows.len()).map(|i| format!("t{i}")).collect();
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let m = Array2::from_shape_vec((rows.len(), 3), flat).unwrap();
            let s = EmbeddingSpace::from_rows("xx", words, m).unwrap();
            let mut buf = Vec::new();
            write_embeddings(&s, &mut buf).unwrap();
            let t = read_embeddings(buf.as_slice(), "mem", "xx", None).unwrap();
            prop_assert_eq!(s.vocab().words(), t.vocab().words());
            for (a, b) in s.matrix().iter().zip(t.matrix().iter()) {
                prop_assert!((a - b).abs() <= 5e-7 + 1e-12);
            }
        }
    }
}
