//! No-tape inference.
//!
//! Evaluates the modulated SIREN over raw buffers with the same shared
//! kernels and the same op order as the tape path, so field values are
//! bit-identical to training-time forwards. Queries stream through in
//! fixed chunks to bound memory; rows are independent, so chunking does
//! not change any value.

use crate::params::ParamStore;
use crate::vec3::Point3;
use crate::autodiff::kernels;

use super::modulator::raw_shifts;
use super::{SdfConfig, SHIFT_COUNT, SIREN_LAYERS};

const CHUNK: usize = 4096;

/// Signed distances at `points` for one latent code. The modulators run
/// once; every chunk reuses the same combined biases.
pub fn batch_query(
    store: &ParamStore,
    cfg: &SdfConfig,
    z: &[f64],
    points: &[Point3],
) -> Vec<f64> {
    let shifts = raw_shifts(store, cfg, z);
    let combined: Vec<Vec<f64>> = (1..=SHIFT_COUNT)
        .map(|l| {
            let b = &store.get(&format!("sdf.siren{l}.b")).values;
            kernels::add(b, &shifts[l - 1])
        })
        .collect();

    let mut field = Vec::with_capacity(points.len());
    for chunk in points.chunks(CHUNK) {
        let flat: Vec<f64> = chunk.iter().flatten().copied().collect();
        field.extend(siren_chunk(store, cfg, &combined, &flat, chunk.len()));
    }
    field
}

/// One unconditioned or pre-combined SIREN evaluation over `n` raw rows.
pub fn raw_sdf(
    store: &ParamStore,
    cfg: &SdfConfig,
    combined_biases: &[Vec<f64>],
    flat_points: &[f64],
) -> Vec<f64> {
    let n = flat_points.len() / 3;
    siren_chunk(store, cfg, combined_biases, flat_points, n)
}

fn siren_chunk(
    store: &ParamStore,
    cfg: &SdfConfig,
    combined: &[Vec<f64>],
    flat: &[f64],
    n: usize,
) -> Vec<f64> {
    debug_assert_eq!(combined.len(), SHIFT_COUNT);
    let mut value = flat.to_vec();
    let mut width = 3;
    for layer in 1..=SIREN_LAYERS {
        let w = store.get(&format!("sdf.siren{layer}.w"));
        let out_width = w.shape[1];
        let mut pre = kernels::matmul(&value, &w.values, n, width, out_width);
        if layer == 1 && cfg.omega0 != 1.0 {
            pre = kernels::scale(&pre, cfg.omega0);
        }
        let bias: &[f64] = if layer < SIREN_LAYERS {
            &combined[layer - 1]
        } else {
            &store.get(&format!("sdf.siren{layer}.b")).values
        };
        let pre = kernels::add_rowwise(&pre, bias, n, out_width);
        value = if layer < SIREN_LAYERS {
            kernels::map(&pre, f64::sin)
        } else {
            pre
        };
        width = out_width;
    }
    value
}
