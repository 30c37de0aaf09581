//! Acceptance gate: one checkable criterion per released capability,
//! printed as a PASS/FAIL line each. The test fails if any criterion
//! fails, but always runs all of them first.
//!
//! Budgets are wall-clock on a single core; every criterion seeds its
//! own randomness so reruns are exact.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use tempfile::TempDir;

use parco_core::autodiff::Tape;
use parco_core::config::RunConfig;
use parco_core::data::{
    analytic_torus_sdf, analytic_torus_sdf_gradient, augment, generate_sequence,
    sample_torus_frame, DataConfig, DeformationParams, Sequence, MAJOR_RADIUS, TUBE_RADIUS,
};
use parco_core::geometry::{
    chamfer, euler_characteristic, manifold_check, marching_cubes, tsr, Mesh, ScalarGrid,
    ISO_LEVEL,
};
use parco_core::gradcheck::{run_suite, MIN_PROBES_PER_CLASS};
use parco_core::params::{Binding, ParamStore};
use parco_core::recon::{reconstruct_frame, score_frame};
use parco_core::sdfnet::{load_checkpoint, modulate, sdf_forward_with_grad};
use parco_core::seed::rng_for;
use parco_core::training::loss::focal_scalar;
use parco_core::training::train_loop;
use parco_core::vec3::Point3;
use rand::Rng as _;

type Outcome = Result<String, String>;

fn fail(msg: impl Into<String>) -> Outcome {
    Err(msg.into())
}

// ---------------------------------------------------------------- A1 --

/// Full finite-difference suite: every autodiff op class, network
/// spatial and parameter gradients, and the end-to-end training loss,
/// each at 1e-3 relative tolerance with at least 100 probes per class.
fn a1_gradcheck_suite() -> Outcome {
    let start = Instant::now();
    let report = run_suite(&[], 3, 1e-3).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if !report.passed {
        return fail(format!("suite failed:\n{}", report.to_table()));
    }
    let mut worst = 0.0f64;
    for module in &report.modules {
        for class in &module.classes {
            if class.probes < MIN_PROBES_PER_CLASS {
                return fail(format!(
                    "{}/{} has only {} probes",
                    module.module, class.class, class.probes
                ));
            }
            worst = worst.max(class.max_rel_err);
        }
    }
    if elapsed > Duration::from_secs(60) {
        return fail(format!("took {:.1}s, budget 60s", elapsed.as_secs_f64()));
    }
    Ok(format!(
        "worst rel err {worst:.2e} over {} modules in {:.1}s",
        report.modules.len(),
        elapsed.as_secs_f64()
    ))
}

// ----------------------------------------------------------- A2 + A4 --

const A2_CONFIG: &str = r#"{
  "data": {"n_sequences": 1, "n_frames": 1, "points_per_frame": 2048, "window": 1},
  "encoder": {
    "m": 8, "k": 8, "d": 16,
    "edge_conv_widths": [16, 32],
    "attn_layers": 1,
    "window_T": 1,
    "points_per_cloud": 64
  },
  "sdfnet": {"hidden_width": 64, "mod_hidden": 32, "omega0": 8.0},
  "optimizer": {"lr": 3e-4},
  "run": {"steps": 3000, "surface_batch": 256, "query_batch": 256,
          "checkpoint_interval": 100000, "seed": 17},
  "eval": {"grid_res": 64}
}"#;

struct OverfitArtifacts {
    store: ParamStore,
    cfg: RunConfig,
    seq: Sequence,
    z: Vec<f64>,
}

/// Train the width-64 network on one identity-parameter torus frame and
/// extract its mesh; shared by A2 (reconstruction quality) and A4
/// (Eikonal residual of the same field).
fn overfit_single_frame() -> Result<(OverfitArtifacts, String), String> {
    let start = Instant::now();
    let cfg = RunConfig::from_json(A2_CONFIG).map_err(|e| e.to_string())?;
    let frame =
        sample_torus_frame(&DeformationParams::IDENTITY, 0, 2048, 41).map_err(|e| e.to_string())?;
    let seq = Sequence::from_raw_frames(vec![frame], 41).map_err(|e| e.to_string())?;

    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let outcome =
        train_loop(std::slice::from_ref(&seq), &cfg, dir.path(), None).map_err(|e| e.to_string())?;
    let ckpt = load_checkpoint(&outcome.final_checkpoint).map_err(|e| e.to_string())?;
    let mut store = ParamStore::new();
    for t in ckpt.tensors {
        if !t.name.starts_with("adam.") {
            store.insert(&t.name, t.values, t.shape);
        }
    }

    let recon = reconstruct_frame(&store, &cfg, &seq, 0, 23).map_err(|e| e.to_string())?;
    let eval = score_frame(&recon, &seq.frames[0].points).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    if elapsed > Duration::from_secs(600) {
        return Err(format!("took {:.0}s, budget 600s", elapsed.as_secs_f64()));
    }
    if !eval.metrics.genus_valid || eval.metrics.genus as usize != Sequence::GENUS {
        return Err(format!(
            "mesh genus {} (valid {}), want 1; manifold {:?}",
            eval.metrics.genus, eval.metrics.genus_valid, recon.manifold
        ));
    }
    if eval.metrics.chamfer >= 0.02 {
        return Err(format!(
            "chamfer {:.4} after {} steps, want < 0.02",
            eval.metrics.chamfer, outcome.steps_run
        ));
    }
    let detail = format!(
        "genus 1, CD {:.4} after {} steps in {:.0}s at 64^3",
        eval.metrics.chamfer,
        outcome.steps_run,
        elapsed.as_secs_f64()
    );
    let z = recon.z.clone();
    Ok((OverfitArtifacts { store, cfg, seq, z }, detail))
}

/// Mean |  |grad f| - 1 | over uniform queries of the overfit field, and
/// the same statistic for the analytic torus SDF as the oracle.
fn a4_eikonal_residual(art: &OverfitArtifacts) -> Outcome {
    let mut rng = rng_for(61, "a4_queries", 0);
    let n = 10_000;
    let points: Vec<Point3> = (0..n)
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();

    // analytic oracle: a true SDF has unit gradient almost everywhere
    let oracle_mean = points
        .iter()
        .map(|&p| {
            let g = analytic_torus_sdf_gradient(p, MAJOR_RADIUS, TUBE_RADIUS);
            ((g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt() - 1.0).abs()
        })
        .sum::<f64>()
        / n as f64;
    if oracle_mean >= 1e-9 {
        return fail(format!("analytic oracle residual {oracle_mean:.2e}, want < 1e-9"));
    }

    let mut total = 0.0;
    for chunk in points.chunks(500) {
        let mut tape = Tape::new();
        let binding = Binding::bind(&mut tape, &art.store).map_err(|e| e.to_string())?;
        let zt = tape
            .leaf(art.z.clone(), &[1, art.z.len()])
            .map_err(|e| e.to_string())?;
        let shifts = modulate(&mut tape, zt, &binding, &art.cfg.sdfnet).map_err(|e| e.to_string())?;
        let flat: Vec<f64> = chunk.iter().flat_map(|p| p.iter().copied()).collect();
        let x = tape.leaf(flat, &[chunk.len(), 3]).map_err(|e| e.to_string())?;
        let out = sdf_forward_with_grad(&mut tape, x, &shifts, &binding, &art.cfg.sdfnet)
            .map_err(|e| e.to_string())?;
        let grads = tape.values(out.grad);
        for row in grads.chunks(3) {
            total += ((row[0] * row[0] + row[1] * row[1] + row[2] * row[2]).sqrt() - 1.0).abs();
        }
    }
    let mean = total / n as f64;
    if mean >= 0.2 {
        return fail(format!("network residual {mean:.4}, want < 0.2"));
    }
    Ok(format!(
        "network residual {mean:.4}, analytic oracle {oracle_mean:.1e} over {n} queries"
    ))
}

// ---------------------------------------------------------------- A3 --

const A3_STEPS: usize = 4000;
const A3_EVAL_FRAMES: std::ops::Range<usize> = 3..63;

fn a3_config(window: usize) -> RunConfig {
    let mut cfg = RunConfig::from_json(
        r#"{
          "data": {"n_sequences": 5, "n_frames": 200, "points_per_frame": 1024, "window": 4},
          "encoder": {
            "m": 8, "k": 6, "d": 32,
            "edge_conv_widths": [16, 32],
            "attn_layers": 1,
            "window_T": 4,
            "points_per_cloud": 64
          },
          "sdfnet": {"hidden_width": 48, "mod_hidden": 32, "omega0": 8.0},
          "optimizer": {"lr": 3e-4},
          "run": {"steps": 4000, "surface_batch": 192, "query_batch": 192,
                  "checkpoint_interval": 1000000, "seed": 29},
          "eval": {"grid_res": 48}
        }"#,
    )
    .expect("A3 config parses");
    cfg.run.steps = A3_STEPS;
    cfg.encoder.window = window;
    cfg.data.window = window;
    cfg
}

fn a3_train(cfg: &RunConfig, train_set: &[Sequence]) -> Result<ParamStore, String> {
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let outcome = train_loop(train_set, cfg, dir.path(), None).map_err(|e| e.to_string())?;
    let ckpt = load_checkpoint(&outcome.final_checkpoint).map_err(|e| e.to_string())?;
    let mut store = ParamStore::new();
    for t in ckpt.tensors {
        if !t.name.starts_with("adam.") {
            store.insert(&t.name, t.values, t.shape);
        }
    }
    Ok(store)
}

/// Mean CD and TSR over an explicit frame range, so both window lengths
/// are scored on exactly the same held-out frames with the same
/// augmentation seed.
fn a3_score(
    store: &ParamStore,
    cfg: &RunConfig,
    held_out: &Sequence,
    eval_seed: u64,
) -> Result<(f64, f64), String> {
    let mut cds = Vec::new();
    let mut successes = 0usize;
    for t in A3_EVAL_FRAMES {
        let recon = reconstruct_frame(store, cfg, held_out, t, eval_seed).map_err(|e| e.to_string())?;
        let eval = score_frame(&recon, &held_out.frames[t].points).map_err(|e| e.to_string())?;
        cds.push(eval.metrics.chamfer);
        successes += eval.metrics.success as usize;
    }
    let mean_cd = cds.iter().sum::<f64>() / cds.len() as f64;
    let tsr = 100.0 * successes as f64 / cds.len() as f64;
    Ok((mean_cd, tsr))
}

/// Temporal ablation: identical data, seeds, and budgets; the windowed
/// model must match or beat the single-frame variant on both mean CD and
/// TSR over the held-out sequence.
fn a3_temporal_ablation() -> Outcome {
    let start = Instant::now();
    let full_cfg = a3_config(4);
    let sequences: Vec<Sequence> = (0..full_cfg.data.n_sequences)
        .map(|s| {
            generate_sequence(
                &full_cfg.data,
                parco_core::seed::derive_seed(full_cfg.run.seed, "sequence", s as u64),
            )
            .map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    let (train_set, held_out) = sequences.split_at(sequences.len() - 1);
    let held_out = &held_out[0];

    let full_store = a3_train(&full_cfg, train_set)?;
    let (full_cd, full_tsr) = a3_score(&full_store, &full_cfg, held_out, 97)?;

    let ablated_cfg = a3_config(1);
    let ablated_store = a3_train(&ablated_cfg, train_set)?;
    let (abl_cd, abl_tsr) = a3_score(&ablated_store, &ablated_cfg, held_out, 97)?;

    let elapsed = start.elapsed();
    let frames = A3_EVAL_FRAMES.len();
    let detail = format!(
        "T=4: CD {full_cd:.4} TSR {full_tsr:.0}% | T=1: CD {abl_cd:.4} TSR {abl_tsr:.0}% \
         over {frames} frames, {A3_STEPS} steps each, {:.0}s",
        elapsed.as_secs_f64()
    );
    if elapsed > Duration::from_secs(4 * 3600) {
        return fail(format!("took {:.0}s, budget 4h; {detail}", elapsed.as_secs_f64()));
    }
    if full_cd > abl_cd {
        return fail(format!("windowed CD worse than ablated: {detail}"));
    }
    if full_tsr < abl_tsr {
        return fail(format!("windowed TSR worse than ablated: {detail}"));
    }
    Ok(detail)
}

// ---------------------------------------------------------------- A5 --

/// Metric implementations against closed forms and brute-force oracles.
fn a5_metric_oracles() -> Outcome {
    // focal closed form: |e| * (exp(|e|) - 1)^alpha below the clamp
    let cases = [
        (1.0, 0.0, 2.0),
        (0.5, 0.0, 2.0),
        (-0.3, 0.4, 2.0),
        (2.0, 0.0, 1.0),
        (0.75, -0.25, 0.0),
    ];
    for (yhat, y, alpha) in cases {
        let e: f64 = (yhat - y).abs();
        let expected = if alpha == 0.0 {
            e
        } else {
            e * (e.exp() - 1.0).powf(alpha)
        };
        let got = focal_scalar(yhat, y, alpha);
        if (got - expected).abs() > 1e-12 {
            return fail(format!(
                "focal({yhat}, {y}, {alpha}) = {got:.13}, closed form {expected:.13}"
            ));
        }
    }
    let reference = focal_scalar(1.0, 0.0, 2.0);
    if (reference - 2.9524924).abs() > 1e-7 {
        return fail(format!("focal(1,0,2) = {reference:.7}, want 2.9524924"));
    }

    // Euler characteristic and genus on exact fixtures
    let cube = cube_mesh();
    if euler_characteristic(&cube) != 2 {
        return fail(format!("cube chi = {}, want 2", euler_characteristic(&cube)));
    }
    let (min, max) = ([-1.5, -1.5, -1.5], [1.5, 1.5, 1.5]);
    let torus_grid = ScalarGrid::sample(48, min, max, |p| {
        analytic_torus_sdf(p, MAJOR_RADIUS, TUBE_RADIUS)
    })
    .map_err(|e| e.to_string())?;
    let torus = marching_cubes(&torus_grid, ISO_LEVEL);
    if euler_characteristic(&torus) != 0 {
        return fail(format!("torus chi = {}, want 0", euler_characteristic(&torus)));
    }
    let two_spheres = disjoint_octahedra();
    if euler_characteristic(&two_spheres) != 4 {
        return fail(format!(
            "disjoint spheres chi = {}, want 4",
            euler_characteristic(&two_spheres)
        ));
    }

    // chamfer against the O(n^2) definition, bit for bit
    let a = sample_torus_frame(&DeformationParams::IDENTITY, 0, 100, 7)
        .map_err(|e| e.to_string())?
        .points;
    let b = sample_torus_frame(&DeformationParams::IDENTITY, 0, 100, 8)
        .map_err(|e| e.to_string())?
        .points;
    let got = chamfer(&a, &b).map_err(|e| e.to_string())?;
    let oracle = chamfer_oracle(&a, &b);
    if got != oracle {
        return fail(format!("chamfer {got:.17} != oracle {oracle:.17}"));
    }

    // TSR is exact rational arithmetic
    let t = tsr(&[1.0, 1.0, 0.0, 2.0], &[1, 1, 1, 1]).map_err(|e| e.to_string())?;
    if t != 50.0 {
        return fail(format!("tsr = {t}, want exactly 50"));
    }
    Ok("focal, chi/genus, chamfer, TSR all match their oracles".into())
}

fn cube_mesh() -> Mesh {
    let v = vec![
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [1.0, 1.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 1.0],
        [1.0, 1.0, 1.0],
        [0.0, 1.0, 1.0],
    ];
    // two triangles per face, outward-consistent winding
    let f = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [2, 3, 7],
        [2, 7, 6],
        [1, 2, 6],
        [1, 6, 5],
        [3, 0, 4],
        [3, 4, 7],
    ];
    Mesh::new(v, f).expect("cube is a valid mesh")
}

fn octahedron(center: Point3, radius: f64, base: usize) -> (Vec<Point3>, Vec<[usize; 3]>) {
    let mut v = Vec::new();
    for (axis, sign) in [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0), (2, 1.0), (2, -1.0)] {
        let mut p = center;
        p[axis] += sign * radius;
        v.push(p);
    }
    // +x/-x apexes joined around the y/z equator
    let f = [
        [0, 2, 4],
        [0, 4, 3],
        [0, 3, 5],
        [0, 5, 2],
        [1, 4, 2],
        [1, 3, 4],
        [1, 5, 3],
        [1, 2, 5],
    ]
    .iter()
    .map(|t| [t[0] + base, t[1] + base, t[2] + base])
    .collect();
    (v, f)
}

fn disjoint_octahedra() -> Mesh {
    let (mut v, mut f) = octahedron([-2.0, 0.0, 0.0], 1.0, 0);
    let (v2, f2) = octahedron([2.0, 0.0, 0.0], 1.0, 6);
    v.extend(v2);
    f.extend(f2);
    Mesh::new(v, f).expect("octahedra are valid meshes")
}

fn chamfer_oracle(a: &[Point3], b: &[Point3]) -> f64 {
    let nearest = |from: &[Point3], to: &[Point3]| -> f64 {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| {
                        let d = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
                        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / from.len() as f64
    };
    0.5 * (nearest(a, b) + nearest(b, a))
}

// ---------------------------------------------------------------- A6 --

/// Marching cubes on analytic fields: closed orientable 2-manifolds with
/// the right genus, vertices within 1.5 voxels of the true surface.
fn a6_marching_cubes_analytic() -> Outcome {
    let fixtures: [(&str, Box<dyn Fn(Point3) -> f64>, Point3, Point3, i64); 2] = [
        (
            "sphere",
            Box::new(|p: Point3| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - 0.8),
            [-1.1, -1.1, -1.1],
            [1.1, 1.1, 1.1],
            0,
        ),
        (
            "torus",
            Box::new(|p: Point3| analytic_torus_sdf(p, MAJOR_RADIUS, TUBE_RADIUS)),
            [-1.5, -1.5, -1.5],
            [1.5, 1.5, 1.5],
            1,
        ),
    ];
    let mut details = String::new();
    for (name, sdf, min, max, want_genus) in fixtures {
        let grid = ScalarGrid::sample(64, min, max, &sdf).map_err(|e| e.to_string())?;
        let mesh = marching_cubes(&grid, ISO_LEVEL);
        let report = manifold_check(&mesh);
        if report.empty || !report.closed || !report.orientable {
            return fail(format!("{name}: not a closed orientable surface: {report:?}"));
        }
        let chi = euler_characteristic(&mesh);
        let genus = (2 - chi) / 2;
        if chi % 2 != 0 || genus != want_genus {
            return fail(format!("{name}: chi {chi} -> genus {genus}, want {want_genus}"));
        }
        let voxel = grid.voxel_size(0);
        let worst = mesh
            .vertices
            .iter()
            .map(|&v| sdf(v).abs())
            .fold(0.0f64, f64::max);
        if worst > 1.5 * voxel {
            return fail(format!(
                "{name}: vertex {worst:.4} from surface, budget {:.4}",
                1.5 * voxel
            ));
        }
        let _ = write!(
            details,
            "{name}: genus {genus}, {} verts, worst {:.3} voxels; ",
            mesh.vertices.len(),
            worst / voxel
        );
    }
    Ok(details.trim_end_matches("; ").to_string())
}

// ---------------------------------------------------------------- A7 --

/// Every augmentation draw must keep exactly the points that face away
/// from the view and clear every mask ball, with mask counts and radii
/// inside their documented ranges.
fn a7_augmentation_predicate() -> Outcome {
    let cfg = DataConfig {
        n_sequences: 1,
        n_frames: 10,
        points_per_frame: 512,
        window: 4,
    };
    let seq = generate_sequence(&cfg, 83).map_err(|e| e.to_string())?;
    let mut checked = 0usize;
    let mut seed = 0u64;
    let mut attempts = 0usize;
    while checked < 1000 {
        attempts += 1;
        if attempts > 1500 {
            return fail(format!("only {checked} successful draws in 1500 attempts"));
        }
        seed += 1;
        let frame = &seq.frames[(seed as usize) % seq.frames.len()];
        let partial = match augment(frame, seed) {
            Ok(p) => p,
            // a draw may legally mask everything; it just doesn't count
            Err(_) => continue,
        };

        let k = partial.masks.len();
        if !(2..=6).contains(&k) {
            return fail(format!("seed {seed}: {k} masks, want 2..=6"));
        }
        for m in &partial.masks {
            if !(0.15..=0.25).contains(&m.radius) {
                return fail(format!("seed {seed}: mask radius {}", m.radius));
            }
        }

        let v = partial.view;
        let expected: Vec<usize> = (0..frame.points.len())
            .filter(|&i| {
                let n = frame.normals[i];
                let visible = n[0] * v[0] + n[1] * v[1] + n[2] * v[2] < 0.0;
                visible
                    && partial.masks.iter().all(|m| {
                        let d = [
                            frame.points[i][0] - m.center[0],
                            frame.points[i][1] - m.center[1],
                            frame.points[i][2] - m.center[2],
                        ];
                        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() >= m.radius
                    })
            })
            .collect();
        if expected != partial.source_indices {
            return fail(format!(
                "seed {seed}: kept {} points, predicate says {}",
                partial.source_indices.len(),
                expected.len()
            ));
        }
        for (&idx, p) in partial.source_indices.iter().zip(&partial.points) {
            if frame.points[idx] != *p {
                return fail(format!("seed {seed}: point {idx} not copied verbatim"));
            }
        }
        checked += 1;
    }
    Ok(format!("{checked} draws verified ({attempts} attempted)"))
}

// ---------------------------------------------------------------- A8 --

const A8_CONFIG: &str = r#"{
  "data": {"n_sequences": 2, "n_frames": 8, "points_per_frame": 256, "window": 2},
  "encoder": {
    "m": 4, "k": 4, "d": 8,
    "edge_conv_widths": [8, 12],
    "attn_layers": 1,
    "window_T": 2,
    "points_per_cloud": 32
  },
  "sdfnet": {"hidden_width": 16, "mod_hidden": 8},
  "run": {"steps": 50, "surface_batch": 16, "query_batch": 16,
          "checkpoint_interval": 1000, "seed": 53},
  "eval": {"grid_res": 16}
}"#;

fn tree_bytes(root: &Path) -> Result<Vec<(PathBuf, Vec<u8>)>, String> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) -> Result<(), String> {
        for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
            let entry = entry.map_err(|e| e.to_string())?;
            let path = entry.path();
            if path.is_dir() {
                walk(&path, root, out)?;
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.push((rel, fs::read(&path).map_err(|e| e.to_string())?));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, &mut out)?;
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

fn diff_trees(a: &Path, b: &Path) -> Result<(), String> {
    let ta = tree_bytes(a)?;
    let tb = tree_bytes(b)?;
    let names_a: Vec<_> = ta.iter().map(|(p, _)| p.clone()).collect();
    let names_b: Vec<_> = tb.iter().map(|(p, _)| p.clone()).collect();
    if names_a != names_b {
        return Err(format!("file sets differ: {names_a:?} vs {names_b:?}"));
    }
    for ((path, ba), (_, bb)) in ta.iter().zip(&tb) {
        if ba != bb {
            return Err(format!("{} differs ({} vs {} bytes)", path.display(), ba.len(), bb.len()));
        }
    }
    Ok(())
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_parco-sdf"))
        .args(args)
        .env_remove("PARCO_SDF_THREADS")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`parco-sdf {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(())
}

/// gen, train, and eval rerun with identical seeds must reproduce their
/// output trees byte for byte.
fn a8_cli_determinism() -> Outcome {
    let root = TempDir::new().map_err(|e| e.to_string())?;
    let config = root.path().join("config.json");
    fs::write(&config, A8_CONFIG).map_err(|e| e.to_string())?;
    let cfg = config.to_str().unwrap();
    let p = |name: &str| root.path().join(name);

    for name in ["data_a", "data_b"] {
        run_cli(&["gen", "--config", cfg, "--out", p(name).to_str().unwrap()])?;
    }
    diff_trees(&p("data_a"), &p("data_b")).map_err(|e| format!("gen: {e}"))?;

    for name in ["run_a", "run_b"] {
        run_cli(&[
            "train",
            "--config",
            cfg,
            "--data",
            p("data_a").to_str().unwrap(),
            "--out",
            p(name).to_str().unwrap(),
        ])?;
    }
    diff_trees(&p("run_a"), &p("run_b")).map_err(|e| format!("train: {e}"))?;

    for name in ["eval_a", "eval_b"] {
        run_cli(&[
            "eval",
            "--checkpoint",
            p("run_a").join("model.pcsd").to_str().unwrap(),
            "--data",
            p("data_a").join("seq_01").to_str().unwrap(),
            "--seed",
            "11",
            "--heatmap",
            "--out",
            p(name).to_str().unwrap(),
        ])?;
    }
    diff_trees(&p("eval_a"), &p("eval_b")).map_err(|e| format!("eval: {e}"))?;

    Ok("gen, train (50 steps), and eval each byte-identical across reruns".into())
}

// -------------------------------------------------------------- gate --

#[test]
fn acceptance() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();

    results.push(("A1 finite-difference gradient suite", a1_gradcheck_suite()));

    let overfit = overfit_single_frame();
    match overfit {
        Ok((art, detail)) => {
            results.push(("A2 single-frame overfit", Ok(detail)));
            results.push(("A4 Eikonal residual", a4_eikonal_residual(&art)));
        }
        Err(e) => {
            results.push(("A2 single-frame overfit", Err(e)));
            results.push(("A4 Eikonal residual", Err("skipped: A2 failed".into())));
        }
    }

    results.push(("A3 temporal ablation", a3_temporal_ablation()));
    results.push(("A5 metric oracles", a5_metric_oracles()));
    results.push(("A6 marching cubes on analytic SDFs", a6_marching_cubes_analytic()));
    results.push(("A7 augmentation predicate", a7_augmentation_predicate()));
    results.push(("A8 CLI determinism", a8_cli_determinism()));

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("{name}: PASS - {detail}"),
            Err(reason) => {
                failed += 1;
                println!("{name}: FAIL - {reason}");
            }
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
