//! The training loop: per-step window assembly, one forward/reverse
//! pass, an optimizer update, JSON-lines metrics, and checkpoints that
//! resume bit-exactly.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::autodiff::Tape;
use crate::config::RunConfig;
use crate::data::{augment, resample_fixed, Sequence};
use crate::encoder::{aggregate_window, init_encoder_params, ObservationWindow};
use crate::error::{DataError, Error};
use crate::params::{Binding, ParamStore};
use crate::sdfnet::{
    init_sdf_params, load_checkpoint, modulate, save_checkpoint, sdf_forward_with_grad,
    Checkpoint,
};
use crate::seed::{derive_seed, rng_for};
use crate::training::adam::AdamState;
use crate::training::loss::{
    eikonal_loss, latent_loss, surface_loss, total_loss, LossBreakdown,
};
use crate::training::sampler::{sample_queries, QueryBatch};

/// Consecutive non-finite steps tolerated before declaring divergence.
pub const MAX_BAD_STEPS: usize = 10;
/// Stderr progress cadence.
const PROGRESS_EVERY: usize = 50;

/// Loop settings; model and objective settings live in their own
/// sections.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub steps: usize,
    /// Surface points supervised per step.
    pub surface_batch: usize,
    /// Off-surface queries per step.
    pub query_batch: usize,
    pub checkpoint_interval: usize,
    pub seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            steps: 2000,
            surface_batch: 256,
            query_batch: 256,
            checkpoint_interval: 500,
            seed: 7,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<(), Error> {
        if self.steps == 0
            || self.surface_batch == 0
            || self.query_batch == 0
            || self.checkpoint_interval == 0
        {
            return Err(Error::Invalid(
                "run counts and intervals must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One metrics-log record. Deliberately free of wall-clock fields so the
/// log is byte-identical across runs; timing goes to stderr.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogLine {
    pub step: usize,
    pub surface: f64,
    pub eikonal: f64,
    pub latent: f64,
    pub total: f64,
    pub z_norm: f64,
    pub guarded_normals: usize,
    pub clamped_residuals: usize,
    pub applied: bool,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub breakdown: LossBreakdown,
    pub z_norm: f64,
    /// False when a non-finite loss or gradient aborted the update.
    pub applied: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub steps_run: usize,
    pub final_checkpoint: PathBuf,
    pub log_path: PathBuf,
}

/// Fresh parameter store for a seed: encoder then SDF network, each from
/// its own derived stream so draw counts cannot leak across modules.
pub fn init_params(cfg: &RunConfig, seed: u64) -> ParamStore {
    let mut store = ParamStore::new();
    let mut enc_rng = rng_for(seed, "encoder_init", 0);
    init_encoder_params(&mut store, &cfg.encoder, &mut enc_rng);
    let mut sdf_rng = rng_for(seed, "sdf_init", 0);
    init_sdf_params(&mut store, &cfg.sdfnet, cfg.encoder.d, &mut sdf_rng);
    store
}

/// Assemble the observation window ending at `t_end`: augment each frame
/// (view culling + spherical masks), then resample to the fixed cloud
/// size. Frame index decorrelates draws within the window; `seed` should
/// vary per step.
pub fn build_window(
    seq: &Sequence,
    t_end: usize,
    window: usize,
    cloud_size: usize,
    seed: u64,
) -> Result<ObservationWindow, Error> {
    if t_end + 1 < window || t_end >= seq.frames.len() {
        return Err(DataError::SequenceTooShort {
            length: seq.frames.len(),
            window,
        }
        .into());
    }
    let t0 = t_end + 1 - window;
    let mut clouds = Vec::with_capacity(window);
    for (offset, t) in (t0..=t_end).enumerate() {
        let partial = augment(&seq.frames[t], seed)?;
        let resample_seed = derive_seed(seed, "window_resample", offset as u64);
        clouds.push(resample_fixed(&partial.points, cloud_size, resample_seed)?);
    }
    Ok(ObservationWindow::new(clouds, t0)?)
}

/// One optimization step on an already-assembled window and batch:
/// encode, modulate, evaluate surface and query points with spatial
/// gradients, combine the losses, and apply one update. A non-finite
/// loss or gradient aborts the update and leaves all state unchanged.
pub fn step_on_window(
    store: &mut ParamStore,
    adam: &mut AdamState,
    window: &ObservationWindow,
    batch: &QueryBatch,
    cfg: &RunConfig,
) -> Result<StepOutcome, Error> {
    let mut tape = Tape::new();
    let binding = Binding::bind(&mut tape, store)?;
    let z = aggregate_window(&mut tape, window, &binding, &cfg.encoder)?;
    let shifts = modulate(&mut tape, z, &binding, &cfg.sdfnet)?;

    let ns = batch.surface_points.len();
    let sflat: Vec<f64> = batch.surface_points.iter().flatten().copied().collect();
    let xs = tape.leaf(sflat, &[ns, 3])?;
    let surf = sdf_forward_with_grad(&mut tape, xs, &shifts, &binding, &cfg.sdfnet)?;
    let (s_loss, stats) = surface_loss(
        &mut tape,
        surf.value,
        surf.grad,
        &batch.surface_normals,
        &cfg.loss,
    )?;

    let nq = batch.queries.len();
    let qflat: Vec<f64> = batch.queries.iter().flatten().copied().collect();
    let xq = tape.leaf(qflat, &[nq, 3])?;
    let quer = sdf_forward_with_grad(&mut tape, xq, &shifts, &binding, &cfg.sdfnet)?;
    let e_loss = eikonal_loss(&mut tape, quer.grad)?;
    let z_loss = latent_loss(&mut tape, z)?;
    let t_loss = total_loss(&mut tape, s_loss, e_loss, z_loss, &cfg.loss)?;

    let breakdown = LossBreakdown {
        surface: tape.scalar_value(s_loss),
        eikonal: tape.scalar_value(e_loss),
        latent: tape.scalar_value(z_loss),
        total: tape.scalar_value(t_loss),
        guarded_normals: stats.guarded_normals,
        clamped_residuals: stats.clamped_residuals,
    };
    let z_norm = breakdown.latent.max(0.0).sqrt();

    if !breakdown.total.is_finite() {
        return Ok(StepOutcome {
            breakdown,
            z_norm,
            applied: false,
        });
    }
    let grads = tape.backward(t_loss)?;
    let named = binding.gradients(&tape, &grads);
    if named
        .iter()
        .any(|(_, g)| g.iter().any(|v| !v.is_finite()))
    {
        return Ok(StepOutcome {
            breakdown,
            z_norm,
            applied: false,
        });
    }
    adam.apply(store, &named, &cfg.optimizer)?;
    Ok(StepOutcome {
        breakdown,
        z_norm,
        applied: true,
    })
}

fn write_checkpoint(
    path: &Path,
    store: &ParamStore,
    adam: &AdamState,
    cfg: &RunConfig,
    step: usize,
) -> Result<(), Error> {
    let meta = json!({
        "step": step,
        "adam_step": adam.step,
        "ablate_temporal": cfg.encoder.window == 1,
        "config": cfg.resolved(),
    });
    let mut tensors: Vec<_> = store.iter().cloned().collect();
    tensors.extend(adam.to_tensors(store));
    save_checkpoint(path, &Checkpoint { meta, tensors })?;
    Ok(())
}

/// Split a loaded checkpoint into parameters, optimizer state, and the
/// step to continue from; refuses checkpoints trained under different
/// model sections.
pub fn restore_training_state(
    ckpt: &Checkpoint,
    cfg: &RunConfig,
) -> Result<(ParamStore, AdamState, usize), Error> {
    if let Some(saved) = ckpt.meta.get("config") {
        let saved_cfg = RunConfig::from_json(&saved.to_string())
            .map_err(|e| Error::Invalid(format!("checkpoint config unreadable: {e}")))?;
        if saved_cfg.model_sections() != cfg.model_sections() {
            return Err(Error::Invalid(
                "checkpoint was trained under different model sections; \
                 refusing to resume"
                    .into(),
            ));
        }
    }
    let mut store = ParamStore::new();
    for t in &ckpt.tensors {
        if !t.name.starts_with("adam.") {
            store.insert(&t.name, t.values.clone(), t.shape.clone());
        }
    }
    let step = ckpt
        .meta
        .get("step")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Invalid("checkpoint meta lacks a step field".into()))?
        as usize;
    let adam_step = ckpt
        .meta
        .get("adam_step")
        .and_then(|v| v.as_u64())
        .unwrap_or(step as u64);
    let adam = AdamState::from_checkpoint(ckpt, &store, adam_step)?;
    Ok((store, adam, step))
}

/// Run (or resume) training over `sequences`. Writes `metrics.jsonl`,
/// periodic `ckpt_STEP.pcsd` files, and a final `model.pcsd` under
/// `out_dir`. Same config and seed reproduce the log byte for byte.
pub fn train_loop(
    sequences: &[Sequence],
    cfg: &RunConfig,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutcome, Error> {
    cfg.validate()?;
    if sequences.is_empty() {
        return Err(Error::Invalid("no training sequences".into()));
    }
    let window = cfg.encoder.window;
    for seq in sequences {
        if seq.frames.len() < window {
            return Err(DataError::SequenceTooShort {
                length: seq.frames.len(),
                window,
            }
            .into());
        }
    }
    fs::create_dir_all(out_dir)?;

    let seed = cfg.run.seed;
    let (mut store, mut adam, start_step) = match resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            restore_training_state(&ckpt, cfg)?
        }
        None => {
            let store = init_params(cfg, seed);
            let adam = AdamState::new(&store);
            (store, adam, 0)
        }
    };
    if start_step >= cfg.run.steps {
        return Err(Error::Invalid(format!(
            "checkpoint is already at step {start_step} of {}",
            cfg.run.steps
        )));
    }

    let log_path = out_dir.join("metrics.jsonl");
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)?;

    let mut consecutive_bad = 0usize;
    let started = Instant::now();
    for step in start_step..cfg.run.steps {
        let mut rng = rng_for(seed, "train_step", step as u64);
        let seq = &sequences[rng.gen_range(0..sequences.len())];
        let t_end = rng.gen_range(window - 1..seq.frames.len());
        let window_seed = derive_seed(seed, "window", step as u64);
        let obs = build_window(seq, t_end, window, cfg.encoder.points_per_cloud, window_seed)?;
        let batch = sample_queries(
            &seq.frames[t_end],
            cfg.run.surface_batch,
            cfg.run.query_batch,
            &mut rng,
        )?;

        let outcome = step_on_window(&mut store, &mut adam, &obs, &batch, cfg)?;
        let line = LogLine {
            step,
            surface: outcome.breakdown.surface,
            eikonal: outcome.breakdown.eikonal,
            latent: outcome.breakdown.latent,
            total: outcome.breakdown.total,
            z_norm: outcome.z_norm,
            guarded_normals: outcome.breakdown.guarded_normals,
            clamped_residuals: outcome.breakdown.clamped_residuals,
            applied: outcome.applied,
        };
        serde_json::to_writer(&mut log, &line).map_err(DataError::Json)?;
        log.write_all(b"\n")?;

        if outcome.applied {
            consecutive_bad = 0;
        } else {
            consecutive_bad += 1;
            eprintln!(
                "step {step}: non-finite loss, update skipped ({consecutive_bad} in a row)"
            );
            if consecutive_bad >= MAX_BAD_STEPS {
                return Err(Error::Diverged {
                    steps: consecutive_bad,
                });
            }
        }
        if (step + 1) % PROGRESS_EVERY == 0 || step + 1 == cfg.run.steps {
            eprintln!(
                "step {}/{} total {:.6} ({:.1} s elapsed)",
                step + 1,
                cfg.run.steps,
                line.total,
                started.elapsed().as_secs_f64()
            );
        }
        let done = step + 1;
        if done % cfg.run.checkpoint_interval == 0 && done < cfg.run.steps {
            let path = out_dir.join(format!("ckpt_{done:06}.pcsd"));
            write_checkpoint(&path, &store, &adam, cfg, done)?;
        }
    }

    let final_checkpoint = out_dir.join("model.pcsd");
    write_checkpoint(&final_checkpoint, &store, &adam, cfg, cfg.run.steps)?;
    Ok(TrainOutcome {
        steps_run: cfg.run.steps - start_step,
        final_checkpoint,
        log_path,
    })
}
