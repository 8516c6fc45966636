use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An identified embedding, optionally tagged with its forgery-method label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    #[serde(default)]
    pub label: Option<String>,
    pub vec: Vec<f64>,
}

impl SampleRecord {
    pub fn new(id: impl Into<String>, label: Option<&str>, vec: Vec<f64>) -> Self {
        SampleRecord {
            id: id.into(),
            label: label.map(str::to_owned),
            vec,
        }
    }
}

/// A collection of records sharing one dimension, with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    records: Vec<SampleRecord>,
    dim: usize,
}

impl SampleSet {
    /// Builds a set from a non-empty record list, inferring the dimension
    /// from the first record.
    pub fn new(records: Vec<SampleRecord>) -> Result<Self> {
        let dim = records.first().ok_or(Error::EmptySet)?.vec.len();
        Self::with_dim(dim, records)
    }

    /// Builds a set of known dimension. The record list may be empty.
    pub fn with_dim(dim: usize, records: Vec<SampleRecord>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if r.vec.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: r.vec.len(),
                    id: Some(r.id.clone()),
                });
            }
            if r.vec.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(r.id.clone()));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(SampleSet { records, dim })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::with_dim(dim, Vec::new())
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<SampleRecord> {
        self.records
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SampleRecord> {
        self.records.iter()
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.records.iter().map(|r| r.vec.as_slice())
    }

    /// Returns a copy with every vector scaled to unit L2 norm.
    pub fn l2_normalized(&self) -> Result<SampleSet> {
        let records = self
            .records
            .iter()
            .map(|r| {
                let vec = crate::linalg::normalized(&r.vec)
                    .ok_or_else(|| Error::ZeroNorm(Some(r.id.clone())))?;
                Ok(SampleRecord {
                    id: r.id.clone(),
                    label: r.label.clone(),
                    vec,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SampleSet {
            records,
            dim: self.dim,
        })
    }
}

impl<'a> IntoIterator for &'a SampleSet {
    type Item = &'a SampleRecord;
    type IntoIter = std::slice::Iter<'a, SampleRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

/// On-disk layout of an embedding file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    /// One `{"id":…, "label":…|null, "vec":[…]}` object per line.
    Jsonl,
    /// Header `id,label,v0..v{D-1}`; an empty label cell means "unlabeled".
    Csv,
}

impl SampleFormat {
    /// `.csv` selects CSV, anything else JSONL.
    pub fn from_path(path: &Path) -> SampleFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => SampleFormat::Csv,
            _ => SampleFormat::Jsonl,
        }
    }
}

pub fn load_samples(path: impl AsRef<Path>, format: SampleFormat) -> Result<SampleSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_samples(BufReader::new(file), format, path)
}

/// Parses an embedding stream; `origin` is only used in error messages.
pub fn parse_samples<R: Read>(reader: R, format: SampleFormat, origin: &Path) -> Result<SampleSet> {
    let records = match format {
        SampleFormat::Jsonl => parse_jsonl(BufReader::new(reader), origin)?,
        SampleFormat::Csv => parse_csv(reader, origin)?,
    };
    SampleSet::new(records)
}

fn parse_jsonl<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<SampleRecord>> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Raw {
        id: String,
        #[serde(default)]
        label: Option<String>,
        vec: Vec<Number>,
    }

    // Accepts plain JSON numbers plus the quoted spellings produced by
    // `quote_nonfinite`, so that a NaN can be reported against its record id.
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Number {
        Num(f64),
        Text(String),
    }

    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let raw: Raw = serde_json::from_str(&quote_nonfinite(trimmed))
            .map_err(|e| Error::parse(origin, idx + 1, e))?;
        let mut vec = Vec::with_capacity(raw.vec.len());
        for n in raw.vec {
            let v = match n {
                Number::Num(v) => v,
                Number::Text(t) => match t.as_str() {
                    "NaN" | "nan" => f64::NAN,
                    "Infinity" | "inf" => f64::INFINITY,
                    "-Infinity" | "-inf" => f64::NEG_INFINITY,
                    other => {
                        return Err(Error::parse(
                            origin,
                            idx + 1,
                            format!("expected a number, found string {other:?}"),
                        ))
                    }
                },
            };
            if !v.is_finite() {
                return Err(Error::NonFinite(raw.id));
            }
            vec.push(v);
        }
        records.push(SampleRecord {
            id: raw.id,
            label: raw.label,
            vec,
        });
    }
    Ok(records)
}

/// Wraps bare `NaN`, `Infinity` and `-Infinity` tokens (as emitted by
/// Python's `json` module) in quotes so the line becomes valid JSON.
fn quote_nonfinite(line: &str) -> std::borrow::Cow<'_, str> {
    if !line.contains("NaN") && !line.contains("Infinity") {
        return line.into();
    }
    let mut out = String::with_capacity(line.len() + 8);
    let mut in_string = false;
    let mut escaped = false;
    let mut rest = line;
    while let Some(c) = rest.chars().next() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            rest = &rest[c.len_utf8()..];
            continue;
        }
        if c == '"' {
            in_string = true;
            out.push(c);
            rest = &rest[1..];
            continue;
        }
        let token = ["-Infinity", "Infinity", "NaN"]
            .into_iter()
            .find(|t| rest.starts_with(t));
        match token {
            Some(t) => {
                out.push('"');
                out.push_str(t);
                out.push('"');
                rest = &rest[t.len()..];
            }
            None => {
                out.push(c);
                rest = &rest[c.len_utf8()..];
            }
        }
    }
    out.into()
}

fn parse_csv<R: Read>(reader: R, origin: &Path) -> Result<Vec<SampleRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(origin, 1, e))?
        .clone();
    if headers.len() < 3 || &headers[0] != "id" || &headers[1] != "label" {
        return Err(Error::parse(origin, 1, "expected header `id,label,v0,...`"));
    }
    for (i, h) in headers.iter().skip(2).enumerate() {
        if h != format!("v{i}") {
            return Err(Error::parse(
                origin,
                1,
                format!("expected column `v{i}`, found `{h}`"),
            ));
        }
    }
    let dim = headers.len() - 2;

    let mut records = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| Error::parse(origin, line, e))?;
        if row.len() != dim + 2 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: row.len().saturating_sub(2),
                id: row.get(0).map(str::to_owned),
            });
        }
        let id = row[0].to_owned();
        let label = (!row[1].is_empty()).then(|| row[1].to_owned());
        let mut vec = Vec::with_capacity(dim);
        for cell in row.iter().skip(2) {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, line, format!("invalid number `{cell}`")))?;
            if !v.is_finite() {
                return Err(Error::NonFinite(id));
            }
            vec.push(v);
        }
        records.push(SampleRecord { id, label, vec });
    }
    Ok(records)
}

pub fn save_samples(set: &SampleSet, path: impl AsRef<Path>, format: SampleFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_samples(set, &mut w, format).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_samples<W: Write>(
    set: &SampleSet,
    w: &mut W,
    format: SampleFormat,
) -> std::io::Result<()> {
    match format {
        SampleFormat::Jsonl => {
            for r in set {
                serde_json::to_writer(&mut *w, r)?;
                w.write_all(b"\n")?;
            }
        }
        SampleFormat::Csv => {
            let mut wtr = csv::Writer::from_writer(&mut *w);
            let mut header = vec!["id".to_owned(), "label".to_owned()];
            header.extend((0..set.dim()).map(|i| format!("v{i}")));
            wtr.write_record(&header)?;
            for r in set {
                let mut row = Vec::with_capacity(set.dim() + 2);
                row.push(r.id.clone());
                row.push(r.label.clone().unwrap_or_default());
                row.extend(r.vec.iter().map(|v| v.to_string()));
                wtr.write_record(&row)?;
            }
            wtr.flush()?;
        }
    }
    Ok(())
}
