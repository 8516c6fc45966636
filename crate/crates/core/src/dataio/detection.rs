use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Detection models scored in the driving track (one white-box, one black-box).
pub const MODELS: usize = 2;
/// Evaluation scenes per object type.
pub const SCENES: usize = 5;
/// Frames extracted from each scene video.
pub const FRAMES_PER_SCENE: usize = 240;

/// One line of a detection log: how many target-class objects (car, truck,
/// bus) model `model` found in frame `frame` of scene `scene`. All indices
/// are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionEntry {
    pub model: u8,
    pub scene: u8,
    pub frame: u16,
    pub count: u32,
}

/// The complete `MODELS × SCENES × FRAMES_PER_SCENE` grid of target counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionLog {
    counts: Vec<u32>,
}

fn cell(model: usize, scene: usize, frame: usize) -> usize {
    ((model - 1) * SCENES + (scene - 1)) * FRAMES_PER_SCENE + (frame - 1)
}

impl DetectionLog {
    /// Validates that `entries` cover every cell exactly once.
    pub fn from_entries(entries: &[DetectionEntry]) -> Result<Self> {
        let mut counts: Vec<Option<u32>> = vec![None; MODELS * SCENES * FRAMES_PER_SCENE];
        for e in entries {
            let (m, s, f) = (e.model as usize, e.scene as usize, e.frame as usize);
            if !(1..=MODELS).contains(&m)
                || !(1..=SCENES).contains(&s)
                || !(1..=FRAMES_PER_SCENE).contains(&f)
            {
                return Err(Error::OutOfRange(format!(
                    "(model {m}, scene {s}, frame {f}) outside 1..={MODELS} x 1..={SCENES} x 1..={FRAMES_PER_SCENE}"
                )));
            }
            let slot = &mut counts[cell(m, s, f)];
            if slot.is_some() {
                return Err(Error::DuplicateCell(e.model, e.scene, e.frame));
            }
            *slot = Some(e.count);
        }
        let missing: Vec<(u8, u8, u16)> = Self::cells()
            .filter(|&(m, s, f)| counts[cell(m, s, f)].is_none())
            .map(|(m, s, f)| (m as u8, s as u8, f as u16))
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingCells {
                count: missing.len(),
                missing,
            });
        }
        Ok(DetectionLog {
            counts: counts.into_iter().map(|c| c.unwrap_or_default()).collect(),
        })
    }

    /// Builds a log from a closure over 1-based (model, scene, frame).
    pub fn from_fn(mut f: impl FnMut(usize, usize, usize) -> u32) -> Self {
        let counts = Self::cells().map(|(m, s, fr)| f(m, s, fr)).collect();
        DetectionLog { counts }
    }

    /// 1-based (model, scene, frame) triples in storage order.
    pub fn cells() -> impl Iterator<Item = (usize, usize, usize)> {
        (1..=MODELS).flat_map(|m| {
            (1..=SCENES).flat_map(move |s| (1..=FRAMES_PER_SCENE).map(move |f| (m, s, f)))
        })
    }

    pub fn count(&self, model: usize, scene: usize, frame: usize) -> u32 {
        self.counts[cell(model, scene, frame)]
    }

    pub fn entries(&self) -> Vec<DetectionEntry> {
        Self::cells()
            .map(|(m, s, f)| DetectionEntry {
                model: m as u8,
                scene: s as u8,
                frame: f as u16,
                count: self.count(m, s, f),
            })
            .collect()
    }
}

pub fn load_detection_log(path: impl AsRef<Path>) -> Result<DetectionLog> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_detection_log(file, path)
}

pub fn parse_detection_log<R: Read>(reader: R, origin: &Path) -> Result<DetectionLog> {
    let mut entries = Vec::with_capacity(MODELS * SCENES * FRAMES_PER_SCENE);
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: DetectionEntry =
            serde_json::from_str(&line).map_err(|e| Error::parse(origin, idx + 1, e))?;
        entries.push(entry);
    }
    DetectionLog::from_entries(&entries)
}

pub fn save_detection_log(log: &DetectionLog, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        for e in log.entries() {
            serde_json::to_writer(&mut *w, &e)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_grid() -> Vec<DetectionEntry> {
        DetectionLog::cells()
            .map(|(m, s, f)| DetectionEntry {
                model: m as u8,
                scene: s as u8,
                frame: f as u16,
                count: (m + s + f) as u32 % 3,
            })
            .collect()
    }

    #[test]
    fn complete_log_parses() {
        let text: String = full_grid()
            .iter()
            .map(|e| serde_json::to_string(e).unwrap() + "\n")
            .collect();
        let log = parse_detection_log(text.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(log.entries().len(), 2400);
        assert_eq!(log.count(2, 5, 240), ((2 + 5 + 240) % 3) as u32);
    }

    #[test]
    fn missing_cell_is_listed() {
        let mut entries = full_grid();
        let removed = entries.remove(1234);
        let err = DetectionLog::from_entries(&entries).unwrap_err();
        match &err {
            Error::MissingCells { count, missing } => {
                assert_eq!(*count, 1);
                assert_eq!(missing[0], (removed.model, removed.scene, removed.frame));
            }
            other => panic!("unexpected {other}"),
        }
        let text = err.to_string();
        assert!(text.contains(&format!(
            "({},{},{})",
            removed.model, removed.scene, removed.frame
        )));
    }

    #[test]
    fn duplicate_cell_is_rejected() {
        let mut entries = full_grid();
        entries.push(DetectionEntry {
            model: 1,
            scene: 1,
            frame: 1,
            count: 0,
        });
        assert!(matches!(
            DetectionLog::from_entries(&entries),
            Err(Error::DuplicateCell(1, 1, 1))
        ));
    }

    #[test]
    fn out_of_range_index() {
        for bad in [
            (0u8, 1u8, 1u16),
            (3, 1, 1),
            (1, 6, 1),
            (1, 1, 241),
            (1, 1, 0),
        ] {
            let e = DetectionEntry {
                model: bad.0,
                scene: bad.1,
                frame: bad.2,
                count: 0,
            };
            assert!(matches!(
                DetectionLog::from_entries(&[e]),
                Err(Error::OutOfRange(_))
            ));
        }
    }

    #[test]
    fn unknown_field_is_a_parse_error() {
        let text = "{\"model\":1,\"scene\":1,\"frame\":1,\"count\":0,\"extra\":1}\n";
        assert!(matches!(
            parse_detection_log(text.as_bytes(), Path::new("mem")),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
