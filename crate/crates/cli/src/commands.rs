//! Subcommand implementations. Every command echoes its fully resolved
//! configuration into the output directory and is byte-deterministic for
//! fixed inputs, seeds, and thread counts.

use std::fs;
use std::path::Path;

use parco_core::config::RunConfig;
use parco_core::data::{generate_sequence, load_sequence, save_sequence, Sequence};
use parco_core::geometry::{heatmap_colors, sign_changing_edges, write_obj, MetricsReport};
use parco_core::gradcheck::run_suite;
use parco_core::params::ParamStore;
use parco_core::recon::{evaluate_sequence, reconstruct_frame};
use parco_core::sdfnet::{load_checkpoint, Checkpoint};
use parco_core::seed::derive_seed;
use parco_core::training::train_loop;
use parco_core::{CheckpointError, DataError, Error};

use crate::CliError;

fn write_config_echo(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(&cfg.resolved()).expect("config serializes");
    fs::write(out.join("config.json"), text + "\n")?;
    Ok(())
}

/// Prefix an IO error with the path it came from; `transparent` error
/// sources otherwise drop it from the message.
fn with_path(io: std::io::Error, path: &Path) -> std::io::Error {
    std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))
}

fn load_checkpoint_at(path: &Path) -> Result<Checkpoint, CliError> {
    load_checkpoint(path).map_err(|e| match e {
        CheckpointError::Io(io) => CheckpointError::Io(with_path(io, path)).into(),
        other => other.into(),
    })
}

fn load_sequence_at(dir: &Path) -> Result<Sequence, CliError> {
    load_sequence(dir).map_err(|e| match e {
        DataError::Io(io) => DataError::Io(with_path(io, dir)).into(),
        other => other.into(),
    })
}

pub fn cmd_gen(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    write_config_echo(cfg, out)?;
    for s in 0..cfg.data.n_sequences {
        let seq = generate_sequence(&cfg.data, derive_seed(cfg.run.seed, "sequence", s as u64))?;
        let name = format!("seq_{s:02}");
        save_sequence(&out.join(&name), &seq)?;
        println!(
            "{name}: {} frames x {} points",
            seq.frames.len(),
            cfg.data.points_per_frame
        );
    }
    Ok(())
}

/// Load every seq_*/ tree under `data`, sorted by directory name.
fn load_sequence_dirs(data: &Path) -> Result<Vec<(String, Sequence)>, CliError> {
    let mut names: Vec<String> = Vec::new();
    for entry in fs::read_dir(data).map_err(|e| with_path(e, data))? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.file_type()?.is_dir() && name.starts_with("seq_") {
            names.push(name);
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(DataError::Manifest(format!(
            "no seq_*/ directories under {}",
            data.display()
        ))
        .into());
    }
    names
        .into_iter()
        .map(|name| Ok((name.clone(), load_sequence_at(&data.join(&name))?)))
        .collect()
}

pub fn cmd_train(
    cfg: &RunConfig,
    data: &Path,
    out: &Path,
    resume: Option<&Path>,
) -> Result<(), CliError> {
    let all = load_sequence_dirs(data)?;
    // with two or more sequences the last is held out for evaluation
    let train_count = if all.len() >= 2 { all.len() - 1 } else { all.len() };
    if train_count < all.len() {
        println!("holding out {} for evaluation", all[train_count].0);
    }
    let train_set: Vec<Sequence> = all
        .into_iter()
        .take(train_count)
        .map(|(_, seq)| seq)
        .collect();

    fs::create_dir_all(out)?;
    write_config_echo(cfg, out)?;
    let outcome = train_loop(&train_set, cfg, out, resume)?;
    println!(
        "trained {} steps on {} sequence(s); final checkpoint {}",
        outcome.steps_run,
        train_count,
        outcome.final_checkpoint.display()
    );
    Ok(())
}

/// Rebuild the run configuration and parameter store a checkpoint was
/// written with. A user-supplied config may adjust run and eval settings
/// but must agree with the checkpoint on every model section.
fn model_from_checkpoint(
    ckpt: Checkpoint,
    user_cfg: Option<RunConfig>,
) -> Result<(RunConfig, ParamStore), CliError> {
    let embedded = ckpt
        .meta
        .get("config")
        .ok_or_else(|| CheckpointError::Header("no config echo in metadata".into()))?;
    let embedded = RunConfig::from_json(&embedded.to_string())
        .map_err(|e| CheckpointError::Header(format!("embedded config: {e}")))?;
    let cfg = match user_cfg {
        Some(user) => {
            if user.model_sections() != embedded.model_sections() {
                return Err(Error::Invalid(
                    "--config disagrees with the checkpoint's model sections".into(),
                )
                .into());
            }
            RunConfig {
                run: user.run,
                eval: user.eval,
                ..embedded
            }
        }
        None => embedded,
    };
    cfg.validate()?;

    // optimizer state is training-only; inference binds model tensors
    let mut store = ParamStore::new();
    for t in ckpt.tensors {
        if !t.name.starts_with("adam.") {
            store.insert(&t.name, t.values, t.shape);
        }
    }
    Ok((cfg, store))
}

pub fn cmd_reconstruct(
    user_cfg: Option<RunConfig>,
    checkpoint: &Path,
    data: &Path,
    frame: usize,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), CliError> {
    let ckpt = load_checkpoint_at(checkpoint)?;
    let (cfg, store) = model_from_checkpoint(ckpt, user_cfg)?;
    let seq = load_sequence_at(data)?;
    if frame + 1 < cfg.encoder.window || frame >= seq.frames.len() {
        return Err(Error::Invalid(format!(
            "frame {frame} outside the reconstructible range {}..{}",
            cfg.encoder.window - 1,
            seq.frames.len()
        ))
        .into());
    }
    let seed = seed.unwrap_or(cfg.run.seed);

    let recon = reconstruct_frame(&store, &cfg, &seq, frame, seed)?;
    fs::create_dir_all(out)?;
    let mut echo_cfg = cfg.clone();
    echo_cfg.run.seed = seed;
    write_config_echo(&echo_cfg, out)?;

    let obj_path = out.join(format!("frame_{frame:04}.obj"));
    write_obj(&recon.mesh, &obj_path, None)?;
    let field_min = recon.grid.values.iter().copied().fold(f64::INFINITY, f64::min);
    let field_max = recon.grid.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let stats = serde_json::json!({
        "frame": frame,
        "grid_res": cfg.eval.grid_res,
        "field_min": field_min,
        "field_max": field_max,
        "sign_changing_edges": sign_changing_edges(&recon.grid, 0.0),
        "vertices": recon.mesh.vertices.len(),
        "faces": recon.mesh.faces.len(),
        "genus": recon.genus,
        "closed": recon.manifold.closed,
        "orientable": recon.manifold.orientable,
    });
    fs::write(
        out.join(format!("frame_{frame:04}_stats.json")),
        serde_json::to_string_pretty(&stats).expect("stats serialize") + "\n",
    )?;
    println!(
        "frame {frame}: {} vertices, {} faces, genus {} -> {}",
        recon.mesh.vertices.len(),
        recon.mesh.faces.len(),
        recon.genus,
        obj_path.display()
    );
    Ok(())
}

pub struct EvalArgs<'a> {
    pub user_cfg: Option<RunConfig>,
    pub checkpoint: &'a Path,
    pub data: &'a Path,
    pub seed: Option<u64>,
    pub out: &'a Path,
    pub max_frames: Option<usize>,
    pub heatmap: bool,
    pub assert_gates: bool,
    pub threads: usize,
}

pub fn cmd_eval(args: EvalArgs<'_>) -> Result<(), CliError> {
    let ckpt = load_checkpoint_at(args.checkpoint)?;
    let (cfg, store) = model_from_checkpoint(ckpt, args.user_cfg)?;
    let seq = load_sequence_at(args.data)?;
    let seed = args.seed.unwrap_or(cfg.run.seed);

    let evals = evaluate_sequence(&store, &cfg, &seq, seed, args.max_frames, args.threads)?;
    let report = MetricsReport::from_frames(evals.iter().map(|e| e.metrics).collect())?;

    fs::create_dir_all(args.out)?;
    let mut echo_cfg = cfg.clone();
    echo_cfg.run.seed = seed;
    write_config_echo(&echo_cfg, args.out)?;
    fs::write(args.out.join("report.json"), report.to_json() + "\n")?;
    fs::write(args.out.join("report.txt"), report.to_table())?;
    if args.heatmap {
        for eval in &evals {
            let colors = heatmap_colors(&eval.vertex_distances);
            let path = args
                .out
                .join(format!("heatmap_{:04}.obj", eval.metrics.frame));
            write_obj(&eval.mesh, &path, Some(&colors))?;
        }
    }
    print!("{}", report.to_table());

    if args.assert_gates {
        let mut failures = Vec::new();
        if report.mean_cd > cfg.eval.max_mean_cd {
            failures.push(format!(
                "mean CD {:.6} exceeds {:.6}",
                report.mean_cd, cfg.eval.max_mean_cd
            ));
        }
        if report.tsr < cfg.eval.min_tsr {
            failures.push(format!(
                "TSR {:.2}% below {:.2}%",
                report.tsr, cfg.eval.min_tsr
            ));
        }
        if !failures.is_empty() {
            return Err(CliError::Gate(failures.join("; ")));
        }
    }
    Ok(())
}

pub fn cmd_gradcheck(
    modules: &[String],
    seed: u64,
    tolerance: f64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let report = run_suite(modules, seed, tolerance)?;
    print!("{}", report.to_table());
    if let Some(out) = out {
        fs::create_dir_all(out)?;
        fs::write(
            out.join("gradcheck.json"),
            serde_json::to_string_pretty(&report.to_json()).expect("report serializes") + "\n",
        )?;
    }
    if !report.passed {
        return Err(CliError::Gate(
            "gradient check failed; see the table above".into(),
        ));
    }
    Ok(())
}
