//! Partial-to-complete reconstruction: observation window in, scored mesh
//! out.
//!
//! The reconstruct and eval commands share this path so identical inputs
//! always produce identical mesh bytes. Every random draw (view
//! directions, mask placement, resampling) comes from streams derived
//! from the caller's seed and the frame index, never from global state.

use crate::config::RunConfig;
use crate::data::Sequence;
use crate::encoder::encode_window;
use crate::error::Error;
use crate::geometry::{
    chamfer, genus, manifold_check, marching_cubes, nearest_distances, FrameMetrics,
    ManifoldReport, Mesh, ScalarGrid, GRID_HALF_EXTENT, ISO_LEVEL,
};
use crate::params::ParamStore;
use crate::sdfnet::{batch_query, SdfConfig};
use crate::seed::derive_seed;
use crate::training::build_window;
use crate::vec3::Point3;

/// One frame rebuilt from its observation window.
#[derive(Clone, Debug)]
pub struct FrameReconstruction {
    /// Frame index the window ends at.
    pub t: usize,
    pub z: Vec<f64>,
    pub grid: ScalarGrid,
    pub mesh: Mesh,
    pub manifold: ManifoldReport,
    /// Literal `(2 - chi) / 2` of the extracted mesh.
    pub genus: f64,
}

/// One frame's scores plus the artifacts heatmap rendering needs.
#[derive(Clone, Debug)]
pub struct FrameEval {
    pub metrics: FrameMetrics,
    pub mesh: Mesh,
    /// Nearest ground-truth distance per mesh vertex.
    pub vertex_distances: Vec<f64>,
}

/// Sample the conditioned field on a symmetric lattice spanning
/// [-GRID_HALF_EXTENT, GRID_HALF_EXTENT]^3, x-fastest like the grid
/// layout itself.
pub fn field_grid(
    store: &ParamStore,
    cfg: &SdfConfig,
    z: &[f64],
    resolution: usize,
) -> Result<ScalarGrid, Error> {
    let (min, max) = ScalarGrid::default_bounds();
    // validate the lattice before spending time on network queries
    let probe = ScalarGrid::new(resolution, min, max, vec![0.0; resolution.pow(3)])?;
    let mut points = Vec::with_capacity(resolution.pow(3));
    for k in 0..resolution {
        for j in 0..resolution {
            for i in 0..resolution {
                points.push(probe.position(i, j, k));
            }
        }
    }
    let values = batch_query(store, cfg, z, &points);
    ScalarGrid::new(resolution, min, max, values)
}

/// Rebuild frame `t_end` from the window ending there.
///
/// The window seed is derived from `(seed, t_end)`, so two models
/// evaluated with the same seed observe identical partial views of any
/// shared frame regardless of their window lengths.
pub fn reconstruct_frame(
    store: &ParamStore,
    cfg: &RunConfig,
    seq: &Sequence,
    t_end: usize,
    seed: u64,
) -> Result<FrameReconstruction, Error> {
    let window = build_window(
        seq,
        t_end,
        cfg.encoder.window,
        cfg.encoder.points_per_cloud,
        derive_seed(seed, "eval_window", t_end as u64),
    )?;
    let code = encode_window(store, &window, &cfg.encoder)?;
    let grid = field_grid(store, &cfg.sdfnet, &code.z, cfg.eval.grid_res)?;
    let mesh = marching_cubes(&grid, ISO_LEVEL);
    let manifold = manifold_check(&mesh);
    let g = genus(&mesh);
    Ok(FrameReconstruction {
        t: t_end,
        z: code.z,
        grid,
        mesh,
        manifold,
        genus: g,
    })
}

/// Score a reconstruction against the complete frame it observed.
///
/// An empty mesh scores the lattice diameter, the largest distance the
/// extraction bounds admit, and fails topology; this keeps sequence
/// evaluation total when a model collapses instead of aborting it.
pub fn score_frame(
    recon: &FrameReconstruction,
    gt_points: &[Point3],
) -> Result<FrameEval, Error> {
    if recon.mesh.is_empty() {
        let diameter = 2.0 * GRID_HALF_EXTENT * 3f64.sqrt();
        return Ok(FrameEval {
            metrics: FrameMetrics {
                frame: recon.t,
                chamfer: diameter,
                genus: recon.genus,
                genus_valid: false,
                success: false,
            },
            mesh: recon.mesh.clone(),
            vertex_distances: Vec::new(),
        });
    }
    let vertex_distances = nearest_distances(&recon.mesh.vertices, gt_points)?;
    let cd = chamfer(&recon.mesh.vertices, gt_points)?;
    let m = &recon.manifold;
    let genus_valid =
        !m.empty && m.closed && m.orientable && recon.genus >= 0.0 && recon.genus.fract() == 0.0;
    let success = genus_valid && recon.genus as usize == Sequence::GENUS;
    Ok(FrameEval {
        metrics: FrameMetrics {
            frame: recon.t,
            chamfer: cd,
            genus: recon.genus,
            genus_valid,
            success,
        },
        mesh: recon.mesh.clone(),
        vertex_distances,
    })
}

fn eval_one(
    store: &ParamStore,
    cfg: &RunConfig,
    seq: &Sequence,
    t_end: usize,
    seed: u64,
) -> Result<FrameEval, Error> {
    let recon = reconstruct_frame(store, cfg, seq, t_end, seed)?;
    score_frame(&recon, &seq.frames[t_end].points)
}

/// Evaluate every window-complete frame of `seq` (the first `max_frames`
/// of them when capped), in frame order.
///
/// Frames are split into contiguous chunks across `threads` workers and
/// results land in pre-assigned slots, so the report is byte-identical
/// for any thread count.
pub fn evaluate_sequence(
    store: &ParamStore,
    cfg: &RunConfig,
    seq: &Sequence,
    seed: u64,
    max_frames: Option<usize>,
    threads: usize,
) -> Result<Vec<FrameEval>, Error> {
    let first = cfg.encoder.window - 1;
    if first >= seq.frames.len() {
        return Err(Error::Invalid(format!(
            "sequence of {} frames has no window of length {}",
            seq.frames.len(),
            cfg.encoder.window
        )));
    }
    let mut ts: Vec<usize> = (first..seq.frames.len()).collect();
    if let Some(m) = max_frames {
        ts.truncate(m);
    }
    if ts.is_empty() {
        return Err(Error::Invalid("no frames selected for evaluation".into()));
    }

    let threads = threads.max(1).min(ts.len());
    let mut slots: Vec<Option<Result<FrameEval, Error>>> = (0..ts.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut rest: &mut [Option<Result<FrameEval, Error>>] = &mut slots;
        let mut offset = 0;
        for w in 0..threads {
            // spread the remainder over the leading chunks
            let count = ts.len() / threads + usize::from(w < ts.len() % threads);
            let (chunk, tail) = rest.split_at_mut(count);
            rest = tail;
            let ts_chunk = &ts[offset..offset + count];
            offset += count;
            scope.spawn(move || {
                for (slot, &t) in chunk.iter_mut().zip(ts_chunk) {
                    *slot = Some(eval_one(store, cfg, seq, t, seed));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.expect("every evaluation slot is filled"))
        .collect()
}
