//! Match reports. Every field is always present in the JSON form; values
//! that do not apply are `null`.

use std::fmt::Write as _;

use earmatch_core::anthro::DISTANCE_COUNT;
use earmatch_core::calibration::ConversionFactors;
use earmatch_core::matcher::MatchResult;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorsReport {
    pub values: [f64; DISTANCE_COUNT],
    pub overall_average: f64,
    pub n_ears: usize,
    pub provenance: String,
}

impl From<&ConversionFactors> for FactorsReport {
    fn from(f: &ConversionFactors) -> Self {
        Self {
            values: *f.factors(),
            overall_average: f.overall_average(),
            n_ears: f.n_ears(),
            provenance: f.provenance().as_str().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub label: u8,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedReport {
    pub rank: usize,
    /// 0-based row in the database file.
    pub row: usize,
    pub subject_id: String,
    pub side: String,
    pub distance: f64,
    pub hrtf_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// `image` or `vector`.
    pub input: String,
    pub image_path: Option<String>,
    /// Predicted landmarks used for the distances, in the 224 frame.
    pub landmarks: Option<Vec<PointReport>>,
    pub px_vector: Option<[f64; DISTANCE_COUNT]>,
    pub cm_vector: [f64; DISTANCE_COUNT],
    pub factors: Option<FactorsReport>,
    pub subject_id: String,
    pub side: String,
    pub distance: f64,
    pub hrtf_ref: Option<String>,
    pub ranking: Vec<RankedReport>,
    pub warnings: Vec<String>,
}

pub fn ranking(result: &MatchResult<'_>, top_k: usize) -> Vec<RankedReport> {
    result
        .ranking()
        .iter()
        .take(top_k)
        .enumerate()
        .map(|(i, r)| RankedReport {
            rank: i + 1,
            row: r.row,
            subject_id: r.record.subject_id.clone(),
            side: r.record.side.as_str().to_string(),
            distance: r.distance,
            hrtf_ref: r.record.hrtf_ref.clone(),
        })
        .collect()
}

fn vector(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.6}"))
        .collect::<Vec<_>>()
        .join(" ")
}

impl MatchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// Line-oriented `key: value` form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "input: {}", self.input);
        if let Some(p) = &self.image_path {
            let _ = writeln!(s, "image: {p}");
        }
        if let Some(px) = &self.px_vector {
            let _ = writeln!(s, "px_vector: {}", vector(px));
        }
        if let Some(f) = &self.factors {
            let _ = writeln!(s, "factors: {} ({})", vector(&f.values), f.provenance);
        }
        let _ = writeln!(s, "cm_vector: {}", vector(&self.cm_vector));
        let _ = writeln!(
            s,
            "best_match: {} {} distance {:.6}",
            self.subject_id, self.side, self.distance
        );
        let _ = writeln!(s, "hrtf_ref: {}", self.hrtf_ref.as_deref().unwrap_or("-"));
        for r in &self.ranking {
            let _ = writeln!(
                s,
                "rank {}: row {} {} {} distance {:.6}",
                r.rank, r.row, r.subject_id, r.side, r.distance
            );
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}
