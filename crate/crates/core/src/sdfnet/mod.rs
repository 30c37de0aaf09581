//! FiLM-conditioned SIREN signed-distance network.
//!
//! Per-layer modulators map a latent code to additive pre-activation
//! shifts (shift-only conditioning; no scale terms). The shared SIREN has
//! five hidden sine layers plus a final linear layer, with the frequency
//! factor applied to the first layer's matrix product only. The final
//! linear layer receives no shift.

mod checkpoint;
mod modulator;
mod query;
mod siren;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TensorEntry};
pub use modulator::{modulate, raw_shifts};
pub use query::{batch_query, raw_sdf};
pub use siren::{sdf_forward, sdf_forward_with_grad, siren_stages};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::params::ParamStore;

/// Sine layers plus the final linear layer.
pub const SIREN_LAYERS: usize = 6;
/// Layers that receive a modulation shift (all but the final linear).
pub const SHIFT_COUNT: usize = SIREN_LAYERS - 1;
/// Off-surface queries are documented for this cube.
pub const QUERY_DOMAIN: f64 = 1.5;

/// SDF network hyperparameters. Paper scale is width 256 for both the
/// SIREN and the modulator hidden layers; desk defaults are 64.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdfConfig {
    /// SIREN hidden width W; also each modulator's output width.
    pub hidden_width: usize,
    /// Modulator hidden width H (two ReLU layers).
    pub mod_hidden: usize,
    /// First-layer frequency factor.
    pub omega0: f64,
}

impl Default for SdfConfig {
    fn default() -> Self {
        SdfConfig {
            hidden_width: 64,
            mod_hidden: 64,
            omega0: 8.0,
        }
    }
}

impl SdfConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.hidden_width == 0 || self.mod_hidden == 0 {
            return Err(Error::Invalid("sdf widths must be positive".into()));
        }
        if !self.omega0.is_finite() || self.omega0 <= 0.0 {
            return Err(Error::Invalid(format!(
                "omega0 must be positive and finite, got {}",
                self.omega0
            )));
        }
        Ok(())
    }
}

fn uniform_init(rng: &mut impl Rng, n: usize, limit: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
}

/// Register SIREN and modulator parameters.
///
/// SIREN weights: layer 1 U(-1/3, 1/3) (1/input-dim), deeper layers
/// U(+-sqrt(6/W)); all SIREN biases start at zero. Modulator hidden
/// layers U(+-sqrt(6/fan_in)); each modulator's final layer starts at
/// exactly zero so training begins from the unconditioned SIREN.
pub fn init_sdf_params(
    store: &mut ParamStore,
    cfg: &SdfConfig,
    latent_dim: usize,
    rng: &mut impl Rng,
) {
    let w = cfg.hidden_width;
    for layer in 1..=SIREN_LAYERS {
        let (fan_in, fan_out) = match layer {
            1 => (3, w),
            SIREN_LAYERS => (w, 1),
            _ => (w, w),
        };
        let limit = if layer == 1 {
            1.0 / 3.0
        } else {
            (6.0 / w as f64).sqrt()
        };
        store.insert(
            &format!("sdf.siren{layer}.w"),
            uniform_init(rng, fan_in * fan_out, limit),
            vec![fan_in, fan_out],
        );
        store.insert(&format!("sdf.siren{layer}.b"), vec![0.0; fan_out], vec![fan_out]);
    }

    let h = cfg.mod_hidden;
    for layer in 1..=SHIFT_COUNT {
        let l1 = (6.0 / latent_dim as f64).sqrt();
        store.insert(
            &format!("sdf.mod{layer}.h1.w"),
            uniform_init(rng, latent_dim * h, l1),
            vec![latent_dim, h],
        );
        store.insert(&format!("sdf.mod{layer}.h1.b"), vec![0.0; h], vec![h]);
        let l2 = (6.0 / h as f64).sqrt();
        store.insert(
            &format!("sdf.mod{layer}.h2.w"),
            uniform_init(rng, h * h, l2),
            vec![h, h],
        );
        store.insert(&format!("sdf.mod{layer}.h2.b"), vec![0.0; h], vec![h]);
        store.insert(&format!("sdf.mod{layer}.out.w"), vec![0.0; h * w], vec![h, w]);
        store.insert(&format!("sdf.mod{layer}.out.b"), vec![0.0; w], vec![w]);
    }
}
