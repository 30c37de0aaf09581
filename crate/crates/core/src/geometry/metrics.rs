//! Reconstruction metrics: symmetric Chamfer distance, topology
//! success rate, and the per-frame report in JSON or plain-text form.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::vec3::{dist, Point3};

/// Chamfer variant recorded in every report.
pub const CHAMFER_VARIANT: &str = "symmetric-mean-euclidean";

/// Exact nearest-neighbor distance from each point in `from` to `to`.
pub fn nearest_distances(from: &[Point3], to: &[Point3]) -> Result<Vec<f64>, Error> {
    if from.is_empty() || to.is_empty() {
        return Err(Error::Invalid(
            "nearest-neighbor distances need two non-empty point sets".into(),
        ));
    }
    Ok(from
        .iter()
        .map(|a| to.iter().map(|b| dist(*a, *b)).fold(f64::INFINITY, f64::min))
        .collect())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Symmetric mean nearest-neighbor Euclidean distance,
/// `(mean_a min_b |a-b| + mean_b min_a |a-b|) / 2`, by exact brute
/// force. Empty inputs are an error, distinct from a zero distance.
pub fn chamfer(a: &[Point3], b: &[Point3]) -> Result<f64, Error> {
    let ab = mean(&nearest_distances(a, b)?);
    let ba = mean(&nearest_distances(b, a)?);
    Ok(0.5 * (ab + ba))
}

/// Percent of frames whose predicted genus equals the ground truth.
pub fn tsr(predicted_genus: &[f64], gt_genus: &[i64]) -> Result<f64, Error> {
    if predicted_genus.len() != gt_genus.len() {
        return Err(Error::Invalid(format!(
            "{} predictions vs {} ground-truth genera",
            predicted_genus.len(),
            gt_genus.len()
        )));
    }
    if predicted_genus.is_empty() {
        return Err(Error::Invalid("topology success rate over zero frames".into()));
    }
    let matches = predicted_genus
        .iter()
        .zip(gt_genus)
        .filter(|(p, g)| **p == **g as f64)
        .count();
    Ok(100.0 * matches as f64 / predicted_genus.len() as f64)
}

/// One evaluated frame.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    /// Chamfer distance in normalized units.
    pub chamfer: f64,
    /// Literal `(2 - chi) / 2`, possibly negative or half-integral.
    pub genus: f64,
    /// True when the mesh was closed, orientable, and non-empty and the
    /// genus came out a non-negative integer, i.e. the formula's
    /// preconditions actually held.
    pub genus_valid: bool,
    /// Predicted genus equals the ground truth.
    pub success: bool,
}

/// Aggregate report over an evaluated sequence.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub chamfer_variant: String,
    pub frames: Vec<FrameMetrics>,
    pub mean_cd: f64,
    /// Population standard deviation of per-frame Chamfer distances.
    pub std_cd: f64,
    /// Topology success rate in percent.
    pub tsr: f64,
}

impl MetricsReport {
    pub fn from_frames(frames: Vec<FrameMetrics>) -> Result<MetricsReport, Error> {
        if frames.is_empty() {
            return Err(Error::Invalid("metrics report over zero frames".into()));
        }
        let cds: Vec<f64> = frames.iter().map(|f| f.chamfer).collect();
        let mean_cd = mean(&cds);
        let var = cds.iter().map(|c| (c - mean_cd) * (c - mean_cd)).sum::<f64>()
            / cds.len() as f64;
        let std_cd = var.sqrt();
        let successes = frames.iter().filter(|f| f.success).count();
        let tsr = 100.0 * successes as f64 / frames.len() as f64;
        Ok(MetricsReport {
            chamfer_variant: CHAMFER_VARIANT.to_string(),
            frames,
            mean_cd,
            std_cd,
            tsr,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-width table, one row per frame plus a summary block.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:>6}  {:>12}  {:>7}  {:>6}  {:>7}\n",
            "frame", "chamfer", "genus", "valid", "success"
        ));
        for f in &self.frames {
            out.push_str(&format!(
                "{:>6}  {:>12.6}  {:>7.1}  {:>6}  {:>7}\n",
                f.frame, f.chamfer, f.genus, f.genus_valid, f.success
            ));
        }
        out.push_str(&format!(
            "\nchamfer variant : {}\nmean CD         : {:.6}\nstd CD          : {:.6}\nTSR             : {:.2}%\n",
            self.chamfer_variant, self.mean_cd, self.std_cd, self.tsr
        ));
        out
    }
}

/// Blue-to-red ramp over `[0, max]` for per-vertex distance heatmaps;
/// an all-zero input stays blue.
pub fn heatmap_colors(distances: &[f64]) -> Vec<[f64; 3]> {
    let max = distances.iter().copied().fold(0.0, f64::max);
    distances
        .iter()
        .map(|&d| {
            let t = if max > 0.0 { d / max } else { 0.0 };
            [t, 0.0, 1.0 - t]
        })
        .collect()
}
