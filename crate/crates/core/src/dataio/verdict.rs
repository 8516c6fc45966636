use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Face verification models used for scoring.
pub const VERDICT_MODELS: usize = 3;

/// Per-model, per-pair attack outcomes: `rows[i][j]` is true when model `i`
/// accepted the j-th adversarial pair as the target identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerdictMatrix {
    rows: Vec<Vec<bool>>,
}

impl VerdictMatrix {
    pub fn new(rows: Vec<Vec<bool>>) -> Result<Self> {
        if rows.len() != VERDICT_MODELS {
            return Err(Error::ShapeMismatch(format!(
                "verdict matrix needs {VERDICT_MODELS} model rows, got {}",
                rows.len()
            )));
        }
        let n = rows[0].len();
        if n == 0 {
            return Err(Error::EmptySet);
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::ShapeMismatch(format!(
                "row {} has {} pairs, row 1 has {n}",
                i + 1,
                r.len()
            )));
        }
        Ok(VerdictMatrix { rows })
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    pub fn pairs(&self) -> usize {
        self.rows[0].len()
    }
}

pub fn load_verdicts(path: impl AsRef<Path>) -> Result<VerdictMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_verdicts(file, path)
}

/// Parses a headerless CSV of `0`/`1` cells, one row per model.
pub fn parse_verdicts<R: Read>(reader: R, origin: &Path) -> Result<VerdictMatrix> {
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| match cell.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::parse(
                    origin,
                    idx + 1,
                    format!("expected 0 or 1, found `{other}`"),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    VerdictMatrix::new(rows)
}

pub fn save_verdicts(matrix: &VerdictMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        for row in &matrix.rows {
            let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}
