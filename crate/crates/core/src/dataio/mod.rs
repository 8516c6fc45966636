//! Readers and writers for every on-disk format the crate consumes:
//! embedding sets (JSONL / CSV), 8-bit RGB PNG rasters, driving-track
//! detection logs and face-track verdict matrices.
//!
//! Everything here is lossless: floats are written in shortest round-trip
//! form and nothing is normalized on load.

mod detection;
mod image;
mod samples;
mod verdict;

pub use detection::{
    load_detection_log, parse_detection_log, save_detection_log, DetectionEntry, DetectionLog,
    FRAMES_PER_SCENE, MODELS, SCENES,
};
pub use image::{decode_png_rgb, encode_png_rgb, load_png_rgb, save_png_rgb, ImageBuffer};
pub use samples::{
    load_samples, parse_samples, save_samples, write_samples, SampleFormat, SampleRecord, SampleSet,
};
pub use verdict::{load_verdicts, parse_verdicts, save_verdicts, VerdictMatrix, VERDICT_MODELS};
