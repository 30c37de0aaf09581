//! Operator-facing finite-difference suite covering three scopes:
//! `autodiff` (every primitive tape op), `sdfnet` (dual-forward spatial
//! Jacobians and parameter gradients flowing through them), and
//! `pipeline` (the full training loss end to end on a small config).
//!
//! Each scope reports per-class probe counts and worst relative error; a
//! scope passes only if every class clears [`MIN_PROBES_PER_CLASS`] and
//! stays under the tolerance.

use serde::Serialize;

use crate::autodiff::{run_all_gradchecks, Tape, Tensor};
use crate::config::RunConfig;
use crate::data::generate_sequence;
use crate::encoder::aggregate_window;
use crate::error::Error;
use crate::params::{Binding, ParamStore};
use crate::sdfnet::{init_sdf_params, modulate, sdf_forward, sdf_forward_with_grad, SdfConfig};
use crate::seed::{derive_seed, rng_for};
use crate::training::{
    build_window, eikonal_loss, init_params, latent_loss, sample_queries, surface_loss,
    total_loss,
};

/// Every class must log at least this many finite-difference probes.
pub const MIN_PROBES_PER_CLASS: usize = 100;

/// Scope names accepted by [`run_suite`], in canonical run order.
pub const MODULE_NAMES: [&str; 3] = ["autodiff", "sdfnet", "pipeline"];

/// Step for the SDF-network scope, paired with the fourth-order stencil
/// below.
const NET_FD_STEP: f64 = 1e-5;

/// Step for the full-pipeline scope. Each loss evaluation carries ~100
/// ulp of rounding noise at the loss's 1e2..1e4 magnitude (~1e-11), so
/// the difference quotient needs a larger step to keep quotient noise
/// (~noise / h) well under the floored tolerance; fourth-order
/// truncation stays negligible at this step.
const PIPELINE_FD_STEP: f64 = 1e-4;

/// Fourth-order central difference from evaluations at +-h and +-2h;
/// truncation is O(h^4 f^(5)) instead of O(h^2 f''').
fn fd4(fp1: f64, fm1: f64, fp2: f64, fm2: f64, h: f64) -> f64 {
    (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * h)
}

/// Relative error with an absolute floor: gradient coordinates that are
/// analytically ~0 (dead ReLU paths, zero-initialized layers) must not
/// divide finite-difference noise by itself.
fn fd_rel(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Probe count and worst error for one checked gradient path.
#[derive(Clone, Debug, Serialize)]
pub struct ClassStat {
    pub class: String,
    pub probes: usize,
    pub max_rel_err: f64,
}

/// One scope's aggregate over its classes.
#[derive(Clone, Debug, Serialize)]
pub struct ModuleReport {
    pub module: String,
    pub probes: usize,
    pub max_rel_err: f64,
    pub passed: bool,
    pub classes: Vec<ClassStat>,
}

impl ModuleReport {
    fn from_classes(module: &str, classes: Vec<ClassStat>, tolerance: f64) -> ModuleReport {
        let probes = classes.iter().map(|c| c.probes).sum();
        let max_rel_err = classes.iter().map(|c| c.max_rel_err).fold(0.0, f64::max);
        let passed = max_rel_err < tolerance
            && classes.iter().all(|c| c.probes >= MIN_PROBES_PER_CLASS);
        ModuleReport {
            module: module.to_string(),
            probes,
            max_rel_err,
            passed,
            classes,
        }
    }
}

/// The full suite result; `passed` is the conjunction over modules.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub tolerance: f64,
    pub passed: bool,
    pub modules: Vec<ModuleReport>,
}

impl SuiteReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }

    /// Fixed-width text table, one row per class plus module summaries.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<10} {:<22} {:>7}  {:>12}\n",
            "module", "class", "probes", "max rel err"
        ));
        for m in &self.modules {
            for c in &m.classes {
                out.push_str(&format!(
                    "{:<10} {:<22} {:>7}  {:>12.3e}\n",
                    m.module, c.class, c.probes, c.max_rel_err
                ));
            }
            out.push_str(&format!(
                "{:<10} {:<22} {:>7}  {:>12.3e}  {}\n",
                m.module,
                "(all)",
                m.probes,
                m.max_rel_err,
                if m.passed { "PASS" } else { "FAIL" }
            ));
        }
        out.push_str(&format!(
            "suite: {} (tolerance {:.1e})\n",
            if self.passed { "PASS" } else { "FAIL" },
            self.tolerance
        ));
        out
    }
}

/// Run the named scopes (empty = all) in canonical order.
pub fn run_suite(modules: &[String], seed: u64, tolerance: f64) -> Result<SuiteReport, Error> {
    for name in modules {
        if !MODULE_NAMES.contains(&name.as_str()) {
            return Err(Error::Invalid(format!(
                "unknown gradcheck module {name:?}; expected one of {MODULE_NAMES:?}"
            )));
        }
    }
    let selected: Vec<&str> = MODULE_NAMES
        .iter()
        .copied()
        .filter(|name| modules.is_empty() || modules.iter().any(|m| m == name))
        .collect();
    let reports = selected
        .into_iter()
        .map(|name| match name {
            "autodiff" => check_autodiff(seed, tolerance),
            "sdfnet" => check_sdfnet(seed, tolerance),
            _ => check_pipeline(seed, tolerance),
        })
        .collect::<Vec<_>>();
    let passed = reports.iter().all(|m| m.passed);
    Ok(SuiteReport {
        tolerance,
        passed,
        modules: reports,
    })
}

/// Scope 1: every primitive op against central differences.
pub fn check_autodiff(seed: u64, tolerance: f64) -> ModuleReport {
    let classes = run_all_gradchecks(seed, tolerance)
        .into_iter()
        .map(|r| ClassStat {
            class: r.op,
            probes: r.probes,
            max_rel_err: r.max_rel_err,
        })
        .collect();
    ModuleReport::from_classes("autodiff", classes, tolerance)
}

/// SDF network fixture: width 16, small latent, every path live. The
/// zero-initialized modulator output layers would zero out all interior
/// modulator gradients, so they are re-randomized here.
struct SdfFixture {
    cfg: SdfConfig,
    store: ParamStore,
    z: Vec<f64>,
    x: Vec<f64>,
    n: usize,
    w_value: Vec<f64>,
    w_grad: Vec<f64>,
}

fn sdf_fixture(seed: u64) -> SdfFixture {
    let cfg = SdfConfig {
        hidden_width: 16,
        mod_hidden: 8,
        omega0: 8.0,
    };
    let d = 6;
    let mut rng = rng_for(seed, "gradcheck_sdf", 0);
    let mut store = ParamStore::new();
    init_sdf_params(&mut store, &cfg, d, &mut rng);
    use rand::Rng;
    for layer in 1..=crate::sdfnet::SHIFT_COUNT {
        for part in ["w", "b"] {
            let t = store.get_mut(&format!("sdf.mod{layer}.out.{part}"));
            for v in &mut t.values {
                *v = rng.gen_range(-0.3..0.3);
            }
        }
    }
    let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.8..0.8)).collect();
    let n = 40;
    let x: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w_value: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w_grad: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    SdfFixture {
        cfg,
        store,
        z,
        x,
        n,
        w_value,
        w_grad,
    }
}

/// Weighted sum of SDF values and spatial gradients; exercises parameter
/// gradients through both halves of the dual forward pass. Returns the
/// finished tape, binding, the latent leaf, and the objective node.
fn sdf_objective(
    fx: &SdfFixture,
    store: &ParamStore,
    z: &[f64],
) -> (Tape, Binding, Tensor, Tensor) {
    let mut tape = Tape::new();
    let binding = Binding::bind(&mut tape, store).expect("bind");
    let zt = tape.leaf(z.to_vec(), &[1, z.len()]).expect("z leaf");
    let shifts = modulate(&mut tape, zt, &binding, &fx.cfg).expect("modulate");
    let xt = tape.leaf(fx.x.clone(), &[fx.n, 3]).expect("x leaf");
    let out = sdf_forward_with_grad(&mut tape, xt, &shifts, &binding, &fx.cfg).expect("dual");
    let wv = tape.leaf(fx.w_value.clone(), &[fx.n, 1]).expect("wv");
    let pv = tape.mul(out.value, wv).expect("mul v");
    let sv = tape.reduce_sum(pv, None).expect("sum v");
    let wg = tape.leaf(fx.w_grad.clone(), &[fx.n, 3]).expect("wg");
    let pg = tape.mul(out.grad, wg).expect("mul g");
    let sg = tape.reduce_sum(pg, None).expect("sum g");
    let s = tape.add(sv, sg).expect("objective");
    (tape, binding, zt, s)
}

/// Scope 2: dual-forward Jacobians. Checks the reported spatial gradient
/// against value differences in x, then every parameter (and latent)
/// gradient of a weighted functional of value and gradient together.
pub fn check_sdfnet(seed: u64, tolerance: f64) -> ModuleReport {
    let fx = sdf_fixture(seed);
    let h = NET_FD_STEP;

    // spatial gradient vs central differences of the value path
    let analytic_grad = {
        let mut t2 = Tape::new();
        let b2 = Binding::bind(&mut t2, &fx.store).expect("bind");
        let zt = t2.leaf(fx.z.clone(), &[1, fx.z.len()]).expect("z");
        let shifts = modulate(&mut t2, zt, &b2, &fx.cfg).expect("modulate");
        let xt = t2.leaf(fx.x.clone(), &[fx.n, 3]).expect("x");
        let out = sdf_forward_with_grad(&mut t2, xt, &shifts, &b2, &fx.cfg).expect("dual");
        t2.values(out.grad).to_vec()
    };
    let value_at = |xflat: &[f64]| -> Vec<f64> {
        let mut t2 = Tape::new();
        let b2 = Binding::bind(&mut t2, &fx.store).expect("bind");
        let zt = t2.leaf(fx.z.clone(), &[1, fx.z.len()]).expect("z");
        let shifts = modulate(&mut t2, zt, &b2, &fx.cfg).expect("modulate");
        let xt = t2.leaf(xflat.to_vec(), &[fx.n, 3]).expect("x");
        let v = sdf_forward(&mut t2, xt, &shifts, &b2, &fx.cfg).expect("forward");
        t2.values(v).to_vec()
    };
    let mut spatial = ClassStat {
        class: "spatial_gradient".into(),
        probes: 0,
        max_rel_err: 0.0,
    };
    for i in 0..fx.n {
        for c in 0..3 {
            let at = |delta: f64| -> f64 {
                let mut x = fx.x.clone();
                x[i * 3 + c] += delta;
                value_at(&x)[i]
            };
            let numeric = fd4(at(h), at(-h), at(2.0 * h), at(-2.0 * h), h);
            spatial.probes += 1;
            spatial.max_rel_err = spatial
                .max_rel_err
                .max(fd_rel(analytic_grad[i * 3 + c], numeric));
        }
    }

    // parameter and latent gradients through the dual outputs
    let (tape, binding, zt, s) = sdf_objective(&fx, &fx.store, &fx.z);
    let grads = tape.backward(s).expect("backward");
    let mut param = ClassStat {
        class: "parameter_gradient".into(),
        probes: 0,
        max_rel_err: 0.0,
    };
    for (name, analytic) in binding.gradients(&tape, &grads) {
        for coord in 0..analytic.len() {
            let at = |delta: f64| -> f64 {
                let mut s = fx.store.clone();
                s.get_mut(&name).values[coord] += delta;
                let (t, _, _, o) = sdf_objective(&fx, &s, &fx.z);
                t.scalar_value(o)
            };
            let numeric = fd4(at(h), at(-h), at(2.0 * h), at(-2.0 * h), h);
            param.probes += 1;
            param.max_rel_err = param.max_rel_err.max(fd_rel(analytic[coord], numeric));
        }
    }
    let z_grad = grads.get_or_zeros(zt, &tape);
    for coord in 0..fx.z.len() {
        let at = |delta: f64| -> f64 {
            let mut z = fx.z.clone();
            z[coord] += delta;
            let (t, _, _, o) = sdf_objective(&fx, &fx.store, &z);
            t.scalar_value(o)
        };
        let numeric = fd4(at(h), at(-h), at(2.0 * h), at(-2.0 * h), h);
        param.probes += 1;
        param.max_rel_err = param.max_rel_err.max(fd_rel(z_grad[coord], numeric));
    }

    ModuleReport::from_classes("sdfnet", vec![spatial, param], tolerance)
}

/// Scope 3: the full training loss (surface + Eikonal + latent) on a
/// window-2, 64-point-cloud, width-16 config; every parameter coordinate
/// against central differences.
pub fn check_pipeline(seed: u64, tolerance: f64) -> ModuleReport {
    let cfg = RunConfig::from_json(
        r#"{
            "data": {"n_frames": 4, "points_per_frame": 256, "window": 2},
            "encoder": {"m": 3, "k": 3, "d": 6, "edge_conv_widths": [6, 8],
                         "attn_layers": 1, "window_T": 2, "points_per_cloud": 64},
            "sdfnet": {"hidden_width": 16, "mod_hidden": 6},
            "run": {"surface_batch": 8, "query_batch": 8}
        }"#,
    )
    .expect("pipeline check config");
    let seq = generate_sequence(&cfg.data, derive_seed(seed, "gradcheck_seq", 0)).expect("seq");
    let window = build_window(&seq, 1, 2, 64, derive_seed(seed, "gradcheck_window", 0))
        .expect("window");
    let mut rng = rng_for(seed, "gradcheck_batch", 0);
    let batch = sample_queries(&seq.frames[1], 8, 8, &mut rng).expect("batch");
    let store = init_params(&cfg, seed);

    let build = |tape: &mut Tape, store: &ParamStore| -> (Binding, Tensor) {
        let binding = Binding::bind(tape, store).expect("bind");
        let z = aggregate_window(tape, &window, &binding, &cfg.encoder).expect("encode");
        let shifts = modulate(tape, z, &binding, &cfg.sdfnet).expect("modulate");
        let sflat: Vec<f64> = batch.surface_points.iter().flatten().copied().collect();
        let xs = tape.leaf(sflat, &[8, 3]).expect("surface leaf");
        let surf = sdf_forward_with_grad(tape, xs, &shifts, &binding, &cfg.sdfnet).expect("dual");
        let (s_loss, _) = surface_loss(tape, surf.value, surf.grad, &batch.surface_normals, &cfg.loss)
            .expect("surface loss");
        let qflat: Vec<f64> = batch.queries.iter().flatten().copied().collect();
        let xq = tape.leaf(qflat, &[8, 3]).expect("query leaf");
        let quer = sdf_forward_with_grad(tape, xq, &shifts, &binding, &cfg.sdfnet).expect("dual");
        let e_loss = eikonal_loss(tape, quer.grad).expect("eikonal");
        let z_loss = latent_loss(tape, z).expect("latent");
        let t = total_loss(tape, s_loss, e_loss, z_loss, &cfg.loss).expect("total");
        (binding, t)
    };
    let eval = |store: &ParamStore| -> f64 {
        let mut tape = Tape::new();
        let (_, loss) = build(&mut tape, store);
        tape.scalar_value(loss)
    };

    let mut tape = Tape::new();
    let (binding, loss) = build(&mut tape, &store);
    let grads = tape.backward(loss).expect("backward");
    let h = PIPELINE_FD_STEP;
    let mut stat = ClassStat {
        class: "total_loss".into(),
        probes: 0,
        max_rel_err: 0.0,
    };
    for (name, analytic) in binding.gradients(&tape, &grads) {
        for coord in 0..analytic.len() {
            let at = |delta: f64| -> f64 {
                let mut s = store.clone();
                s.get_mut(&name).values[coord] += delta;
                eval(&s)
            };
            let numeric = fd4(at(h), at(-h), at(2.0 * h), at(-2.0 * h), h);
            stat.probes += 1;
            stat.max_rel_err = stat.max_rel_err.max(fd_rel(analytic[coord], numeric));
        }
    }
    ModuleReport::from_classes("pipeline", vec![stat], tolerance)
}
