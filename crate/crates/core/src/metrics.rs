//! Official scoring formulas for all three tracks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataio::{DetectionLog, ImageBuffer, VerdictMatrix, FRAMES_PER_SCENE, MODELS, SCENES};
use crate::error::{Error, Result};

/// A score plus its named ingredients, as emitted by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub score: f64,
    pub components: BTreeMap<String, f64>,
}

impl ScoreReport {
    fn new(score: f64, components: &[(&str, f64)]) -> Self {
        ScoreReport {
            score,
            components: components
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        }
    }
}

/// Area under the ROC curve as the Mann-Whitney pair statistic: the share of
/// (positive, negative) pairs ranked correctly, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score #{i}")));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid(
            "ROC-AUC needs both positive and negative labels",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Doubled pair credit: 2 per strict win, 1 per tie. Kept integral for exactness.
    let mut credit: u128 = 0;
    let mut neg_below: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let s = scores[order[start]];
        let end = start
            + order[start..]
                .iter()
                .take_while(|&&i| scores[i] == s)
                .count();
        let group_pos = order[start..end].iter().filter(|&&i| labels[i]).count() as u64;
        let group_neg = (end - start) as u64 - group_pos;
        credit += 2 * group_pos as u128 * neg_below as u128 + group_pos as u128 * group_neg as u128;
        neg_below += group_neg;
        start = end;
    }
    Ok(credit as f64 / (2 * pos as u128 * neg as u128) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeepfakeScoreInput {
    pub precision5: f64,
    pub auc: f64,
    pub subjective: f64,
}

fn unit_interval(name: &str, x: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(Error::OutOfRange(format!("{name} = {x} is outside [0, 1]")))
    }
}

/// `0.6·precision@5 + 0.3·AUC + 0.1·subjective`.
pub fn deepfake_final_score(input: DeepfakeScoreInput) -> Result<f64> {
    let p = unit_interval("precision5", input.precision5)?;
    let a = unit_interval("auc", input.auc)?;
    let s = unit_interval("subjective", input.subjective)?;
    Ok(0.6 * p + 0.3 * a + 0.1 * s)
}

pub fn deepfake_report(input: DeepfakeScoreInput) -> Result<ScoreReport> {
    Ok(ScoreReport::new(
        deepfake_final_score(input)?,
        &[
            ("precision5", input.precision5),
            ("auc", input.auc),
            ("subjective", input.subjective),
        ],
    ))
}

/// Attack success rate averaged over the verification models.
pub fn face_attack_score(verdicts: &VerdictMatrix) -> f64 {
    let hits: usize = verdicts.rows().iter().flatten().filter(|&&v| v).count();
    hits as f64 / (verdicts.rows().len() * verdicts.pairs()) as f64
}

pub fn face_report(verdicts: &VerdictMatrix) -> ScoreReport {
    let n = verdicts.pairs() as f64;
    let mut components: Vec<(String, f64)> = verdicts
        .rows()
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let hits = row.iter().filter(|&&v| v).count();
            (format!("model{}", i + 1), hits as f64 / n)
        })
        .collect();
    components.push(("pairs".into(), n));
    ScoreReport {
        score: face_attack_score(verdicts),
        components: components.into_iter().collect(),
    }
}

/// Required printed-patch size in the driving track.
pub const PATCH_WIDTH: usize = 2790;
pub const PATCH_HEIGHT: usize = 1260;
/// More connected regions than this voids the submission.
pub const MAX_REGIONS: usize = 5;
/// Upper bound of the area bonus.
pub const AREA_BONUS: f64 = 0.2;

/// How the RGB patch's L1 mass is normalized by the pixel count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AreaNorm {
    /// Average the three channels first, so a full-white patch uses area 1.
    #[default]
    ChannelMean,
    /// Sum all channels over a per-pixel denominator; the bonus is clamped
    /// to `[0, 0.2]` since this can exceed the area.
    ChannelSum,
}

#[derive(Debug, Clone, Copy)]
pub struct DrivingScoreInput<'a> {
    pub log: &'a DetectionLog,
    pub patch: &'a ImageBuffer,
    pub connected_region_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrivingScore {
    pub score: f64,
    /// Share of frames with no target detection, averaged over models and scenes.
    pub evasion: f64,
    pub per_model: Vec<f64>,
    /// `‖m/255‖₁ / (W·H)` under the chosen normalization.
    pub area_fraction: f64,
    pub area_bonus: f64,
}

impl DrivingScore {
    pub fn report(&self) -> ScoreReport {
        let mut components = vec![
            ("evasion".to_string(), self.evasion),
            ("area_fraction".to_string(), self.area_fraction),
            ("area_bonus".to_string(), self.area_bonus),
        ];
        for (i, r) in self.per_model.iter().enumerate() {
            components.push((format!("model{}", i + 1), *r));
        }
        ScoreReport {
            score: self.score,
            components: components.into_iter().collect(),
        }
    }
}

/// Per-object driving score: mean evasion rate plus the small-area bonus.
pub fn driving_object_score(input: DrivingScoreInput<'_>, norm: AreaNorm) -> Result<DrivingScore> {
    let regions = input.connected_region_count;
    if regions > MAX_REGIONS {
        return Err(Error::VoidResult {
            regions,
            limit: MAX_REGIONS,
        });
    }
    let patch = input.patch;
    if patch.width() != PATCH_WIDTH || patch.height() != PATCH_HEIGHT {
        return Err(Error::ShapeMismatch(format!(
            "patch is {}x{}, expected {PATCH_WIDTH}x{PATCH_HEIGHT}",
            patch.width(),
            patch.height()
        )));
    }
    let per_model: Vec<f64> = (1..=MODELS)
        .map(|m| {
            let clear = (1..=SCENES)
                .flat_map(|s| (1..=FRAMES_PER_SCENE).map(move |f| (s, f)))
                .filter(|&(s, f)| input.log.count(m, s, f) == 0)
                .count();
            clear as f64 / (SCENES * FRAMES_PER_SCENE) as f64
        })
        .collect();
    let clear_total: f64 = per_model
        .iter()
        .map(|r| r * (SCENES * FRAMES_PER_SCENE) as f64)
        .sum();
    let evasion = clear_total / (MODELS * SCENES * FRAMES_PER_SCENE) as f64;

    let mass: u64 = patch.pixels().iter().map(|&v| v as u64).sum();
    let pixels = (PATCH_WIDTH * PATCH_HEIGHT) as f64;
    let area_fraction = match norm {
        AreaNorm::ChannelMean => mass as f64 / (255.0 * 3.0 * pixels),
        AreaNorm::ChannelSum => mass as f64 / (255.0 * pixels),
    };
    let area_bonus = (AREA_BONUS * (1.0 - area_fraction)).clamp(0.0, AREA_BONUS);
    Ok(DrivingScore {
        score: evasion + area_bonus,
        evasion,
        per_model,
        area_fraction,
        area_bonus,
    })
}

/// `0.8·truck + 0.2·person`.
pub fn driving_total_score(truck: f64, person: f64) -> f64 {
    0.8 * truck + 0.2 * person
}
