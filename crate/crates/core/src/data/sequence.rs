//! Sequence generation: seeded deformation trajectories, per-frame surface
//! sampling, and one shared normalization into [-1, 1]^3.

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::seed::{derive_seed, rng_for};
use crate::vec3::Point3;

use super::deform::DeformationTrajectory;
use super::torus::{sample_torus_frame, CompleteFrame};

/// Attempts to draw a fold-free trajectory before giving up. In-range
/// trajectories can never fold (det J >= 0.7 * (1 - 0.8/3)), so this only
/// trips on out-of-contract parameter ranges.
pub const MAX_GENERATION_ATTEMPTS: usize = 100;

/// Generation settings for one synthetic sequence.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Sequences produced by a generation run; training conventionally
    /// holds the last one out.
    pub n_sequences: usize,
    pub n_frames: usize,
    pub points_per_frame: usize,
    /// Encoder window length; sequences shorter than this are useless.
    pub window: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            n_sequences: 5,
            n_frames: 64,
            points_per_frame: 2048,
            window: 4,
        }
    }
}

/// An ordered run of complete frames sharing one normalization transform:
/// normalized = (raw - center) * scale.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sequence {
    pub frames: Vec<CompleteFrame>,
    pub center: Point3,
    pub scale: f64,
    pub seed: u64,
}

impl Sequence {
    /// Ground-truth genus of every frame; warps are orientation-preserving
    /// diffeomorphisms of a torus.
    pub const GENUS: usize = 1;

    /// Map a point from raw object units to normalized units.
    pub fn normalize_point(&self, p: Point3) -> Point3 {
        [
            (p[0] - self.center[0]) * self.scale,
            (p[1] - self.center[1]) * self.scale,
            (p[2] - self.center[2]) * self.scale,
        ]
    }

    /// Wrap raw-unit frames into a sequence, fitting and applying the
    /// same joint AABB normalization [`generate_sequence`] uses.
    pub fn from_raw_frames(
        mut frames: Vec<CompleteFrame>,
        seed: u64,
    ) -> Result<Sequence, DataError> {
        if frames.is_empty() {
            return Err(DataError::EmptyInput {
                op: "Sequence::from_raw_frames",
            });
        }
        let (center, scale) = fit_normalization(&frames);
        for frame in &mut frames {
            for p in &mut frame.points {
                for (d, c) in center.iter().enumerate() {
                    p[d] = (p[d] - c) * scale;
                }
            }
        }
        Ok(Sequence {
            frames,
            center,
            scale,
            seed,
        })
    }
}

/// Generate a deterministic sequence: one trajectory draw, one surface
/// sample per frame, then a single AABB-centered normalization fitted to
/// all frames jointly so motion stays metrically consistent across time.
pub fn generate_sequence(cfg: &DataConfig, seed: u64) -> Result<Sequence, DataError> {
    if cfg.n_frames < cfg.window {
        return Err(DataError::SequenceTooShort {
            length: cfg.n_frames,
            window: cfg.window,
        });
    }
    let time_denom = (cfg.n_frames - 1).max(1) as f64;

    'attempt: for attempt in 0..MAX_GENERATION_ATTEMPTS {
        let mut rng = rng_for(seed, "trajectory", attempt as u64);
        let trajectory = DeformationTrajectory::sample(&mut rng);
        let frame_seed = derive_seed(seed, "frames", attempt as u64);

        let mut frames = Vec::with_capacity(cfg.n_frames);
        for t in 0..cfg.n_frames {
            let params = trajectory.at(t as f64 / time_denom);
            match sample_torus_frame(&params, t, cfg.points_per_frame, frame_seed) {
                Ok(frame) => frames.push(frame),
                Err(DataError::FoldedWarp { .. }) => continue 'attempt,
                Err(e) => return Err(e),
            }
        }

        let (center, scale) = fit_normalization(&frames);
        for frame in &mut frames {
            for p in &mut frame.points {
                for (d, c) in center.iter().enumerate() {
                    p[d] = (p[d] - c) * scale;
                }
            }
            // normals are invariant under uniform scale + translation
        }
        return Ok(Sequence {
            frames,
            center,
            scale,
            seed,
        });
    }
    Err(DataError::GenerationFailed {
        attempts: MAX_GENERATION_ATTEMPTS,
    })
}

/// AABB center and the scale that maps the largest half-extent to 1.
fn fit_normalization(frames: &[CompleteFrame]) -> (Point3, f64) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for frame in frames {
        for p in &frame.points {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
    }
    let center = [
        0.5 * (lo[0] + hi[0]),
        0.5 * (lo[1] + hi[1]),
        0.5 * (lo[2] + hi[2]),
    ];
    let half_extent = (0..3)
        .map(|d| 0.5 * (hi[d] - lo[d]))
        .fold(0.0f64, f64::max);
    (center, 1.0 / half_extent)
}
