//! The extreme-classification sparse text format.
//!
//! ```text
//! num_points num_features num_labels
//! l1,l2,... i1:v1 i2:v2 ...
//! ```
//!
//! A line starting with whitespace (or whose first token holds a `:`) has no
//! labels. Files starting with the gzip magic bytes are decompressed
//! transparently; [`write_xc`] compresses when the path ends in `.gz`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use pghash_core::data::{Dataset, DatasetMeta, SparseExample};

use crate::error::{Error, Result};

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

pub fn parse_xc(path: &Path) -> Result<(DatasetMeta, Dataset)> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let got = file.read(&mut magic).map_err(|e| Error::io(path, e))?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let ds = if got == 2 && magic == GZIP_MAGIC {
        read_xc(BufReader::new(MultiGzDecoder::new(file)), path)?
    } else {
        read_xc(BufReader::new(file), path)?
    };
    Ok((ds.meta(), ds))
}

/// Streams records from `reader`; `source` only labels error messages.
pub fn read_xc<R: BufRead>(reader: R, source: &Path) -> Result<Dataset> {
    let err = |line: usize, msg: String| Error::Parse { path: source.to_path_buf(), line, msg };
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (num_points, num_features, num_labels) = loop {
        let Some((no, line)) = lines.next() else {
            return Err(err(1, "missing header `num_points num_features num_labels`".into()));
        };
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(err(no, format!("header needs 3 fields, found {}", fields.len())));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| err(no, format!("non-numeric header field {s:?}")));
        break (num(fields[0])?, num(fields[1])?, num(fields[2])?);
    };

    let mut examples = Vec::with_capacity(num_points.min(1 << 20));
    for (no, line) in lines {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        examples.push(parse_record(&line, num_features, num_labels).map_err(|m| err(no, m))?);
    }
    if examples.len() != num_points {
        return Err(err(0, format!("header declares {num_points} points, file holds {}", examples.len())));
    }
    Ok(Dataset { num_features, num_labels, examples })
}

fn parse_record(line: &str, num_features: usize, num_labels: usize) -> std::result::Result<SparseExample, String> {
    let mut tokens = line.split_whitespace().peekable();
    let mut labels = Vec::new();
    let starts_blank = line.starts_with(char::is_whitespace);
    if !starts_blank {
        if let Some(first) = tokens.peek().filter(|t| !t.contains(':')) {
            for l in first.split(',').filter(|s| !s.is_empty()) {
                let l: usize = l.parse().map_err(|_| format!("non-numeric label {l:?}"))?;
                if l >= num_labels {
                    return Err(format!("label {l} out of range (num_labels {num_labels})"));
                }
                labels.push(l);
            }
            tokens.next();
        }
    }
    labels.sort_unstable();
    labels.dedup();
    let mut features = Vec::new();
    for tok in tokens {
        let (i, v) = tok.split_once(':').ok_or_else(|| format!("feature {tok:?} is not index:value"))?;
        let i: usize = i.parse().map_err(|_| format!("non-numeric feature index {i:?}"))?;
        let v: f64 = v.parse().map_err(|_| format!("non-numeric feature value {v:?}"))?;
        if i >= num_features {
            return Err(format!("feature index {i} out of range (num_features {num_features})"));
        }
        if !v.is_finite() {
            return Err(format!("non-finite feature value {v}"));
        }
        features.push((i, v));
    }
    features.sort_by_key(|f| f.0);
    if features.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err("duplicate feature index".into());
    }
    SparseExample::new(features, labels).map_err(|e| e.to_string())
}

pub fn write_xc_to<W: Write>(mut w: W, ds: &Dataset) -> std::io::Result<()> {
    writeln!(w, "{} {} {}", ds.len(), ds.num_features, ds.num_labels)?;
    for ex in &ds.examples {
        let labels: Vec<String> = ex.labels.iter().map(usize::to_string).collect();
        w.write_all(labels.join(",").as_bytes())?;
        for &(i, v) in &ex.features {
            // `{}` prints the shortest representation that parses back exactly
            write!(w, " {i}:{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()
}

pub fn write_xc(path: &Path, ds: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    let res = if gz {
        let mut enc = GzEncoder::new(BufWriter::new(file), Compression::default());
        write_xc_to(&mut enc, ds).and_then(|_| enc.finish().map(|_| ()))
    } else {
        write_xc_to(BufWriter::new(file), ds)
    };
    res.map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        read_xc(text.as_bytes(), Path::new("mem"))
    }

    #[test]
    fn parses_the_format() {
        let ds = parse("2 5 3\n0,2 1:0.5 4:1.0\n 0:1.0\n").unwrap();
        assert_eq!(ds.examples[0].labels, [0, 2]);
        assert_eq!(ds.examples[0].features, [(1, 0.5), (4, 1.0)]);
        assert!(ds.examples[1].labels.is_empty());
        assert_eq!(ds.examples[1].features, [(0, 1.0)]);
        assert_eq!(ds.meta().avg_labels_per_point, 1.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse("1 5 3\n0 7:1.0\n").unwrap_err().to_string();
        assert!(e.contains("mem:2") && e.contains("feature index 7"), "{e}");
        let e = parse("1 5 3\nx 1:1.0\n").unwrap_err().to_string();
        assert!(e.contains("mem:2") && e.contains("label"), "{e}");
        let e = parse("1 5 3\n0 1:abc\n").unwrap_err().to_string();
        assert!(e.contains("mem:2"), "{e}");
        assert!(parse("").is_err());
        assert!(parse("1 five 3\n").unwrap_err().to_string().contains("mem:1"));
        assert!(parse("2 5 3\n0 1:1\n").unwrap_err().to_string().contains("declares 2"));
    }

    #[test]
    fn labels_only_and_unsorted_features() {
        let ds = parse("2 5 4\n3\n1 4:2 0:1\n").unwrap();
        assert_eq!(ds.examples[0].labels, [3]);
        assert!(ds.examples[0].features.is_empty());
        assert_eq!(ds.examples[1].features, [(0, 1.0), (4, 2.0)]);
        assert!(parse("1 5 4\n1 2:1 2:3\n").is_err());
    }
}
