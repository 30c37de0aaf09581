//! The shared SIREN body.
//!
//! Layer 1: sin(omega0 * (x W) + b + beta). Layers 2..5: sin(f W + b +
//! beta), no frequency factor. Layer 6: affine to one output, no shift.
//! Value and spatial-gradient paths share one stage list, so they can
//! never drift apart.

use crate::autodiff::{dual_forward, DualOutput, DualStage, Tape, Tensor};
use crate::error::TapeError;
use crate::params::Binding;

use super::{SdfConfig, SHIFT_COUNT, SIREN_LAYERS};

/// Build the layer stages with shifts folded into the biases.
pub fn siren_stages(
    tape: &mut Tape,
    shifts: &[Tensor],
    binding: &Binding,
    cfg: &SdfConfig,
) -> Result<Vec<DualStage>, TapeError> {
    if shifts.len() != SHIFT_COUNT {
        return Err(TapeError::Arity {
            op: "siren_stages",
            expected: SHIFT_COUNT,
            got: shifts.len(),
        });
    }
    let mut stages = Vec::with_capacity(2 * SIREN_LAYERS - 1);
    for layer in 1..=SIREN_LAYERS {
        let weight = binding.tensor(&format!("sdf.siren{layer}.w"));
        let b = binding.tensor(&format!("sdf.siren{layer}.b"));
        let bias = if layer < SIREN_LAYERS {
            tape.add(b, shifts[layer - 1])?
        } else {
            b
        };
        stages.push(DualStage::Affine {
            weight,
            bias,
            product_scale: if layer == 1 { cfg.omega0 } else { 1.0 },
        });
        if layer < SIREN_LAYERS {
            stages.push(DualStage::Sin);
        }
    }
    Ok(stages)
}

fn fold_values(tape: &mut Tape, x: Tensor, stages: &[DualStage]) -> Result<Tensor, TapeError> {
    let mut value = x;
    for stage in stages {
        value = match *stage {
            DualStage::Affine {
                weight,
                bias,
                product_scale,
            } => {
                let mut pre = tape.matmul(value, weight)?;
                if product_scale != 1.0 {
                    pre = tape.scale(pre, product_scale)?;
                }
                tape.add(pre, bias)?
            }
            DualStage::Sin => tape.sin(value)?,
        };
    }
    Ok(value)
}

/// Signed distances for query rows `x` (`[n, 3]`) -> `[n, 1]`.
pub fn sdf_forward(
    tape: &mut Tape,
    x: Tensor,
    shifts: &[Tensor],
    binding: &Binding,
    cfg: &SdfConfig,
) -> Result<Tensor, TapeError> {
    let stages = siren_stages(tape, shifts, binding, cfg)?;
    fold_values(tape, x, &stages)
}

/// Signed distances plus exact spatial gradients (`[n, 1]`, `[n, 3]`).
/// The value path runs the same ops as [`sdf_forward`]; both outputs stay
/// differentiable w.r.t. parameters and shifts.
pub fn sdf_forward_with_grad(
    tape: &mut Tape,
    x: Tensor,
    shifts: &[Tensor],
    binding: &Binding,
    cfg: &SdfConfig,
) -> Result<DualOutput, TapeError> {
    let stages = siren_stages(tape, shifts, binding, cfg)?;
    dual_forward(tape, x, &stages)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use rand::Rng;

    use crate::params::ParamStore;
    use crate::sdfnet::{init_sdf_params, modulate};
    use crate::seed::rng_for;

    use super::*;

    fn zero_shifts(tape: &mut Tape, w: usize) -> Vec<Tensor> {
        (0..SHIFT_COUNT)
            .map(|_| tape.leaf(vec![0.0; w], &[w]).unwrap())
            .collect()
    }

    fn small_net(seed: u64, w: usize) -> (SdfConfig, ParamStore) {
        let cfg = SdfConfig {
            hidden_width: w,
            mod_hidden: 4,
            omega0: 8.0,
        };
        let mut store = ParamStore::new();
        let mut rng = rng_for(seed, "siren_test", 0);
        init_sdf_params(&mut store, &cfg, 5, &mut rng);
        // random biases and modulator outputs so tests are nontrivial
        for l in 1..=SIREN_LAYERS {
            for v in &mut store.get_mut(&format!("sdf.siren{l}.b")).values {
                *v = rng.gen_range(-0.3..0.3);
            }
        }
        for l in 1..=SHIFT_COUNT {
            for suffix in ["out.w", "out.b"] {
                for v in &mut store.get_mut(&format!("sdf.mod{l}.{suffix}")).values {
                    *v = rng.gen_range(-0.3..0.3);
                }
            }
        }
        (cfg, store)
    }

    #[test]
    fn omega0_multiplies_only_the_first_layer_product() {
        let (cfg, store) = small_net(3, 6);
        let mut tape = Tape::new();
        let binding = Binding::bind(&mut tape, &store).unwrap();
        let shifts = zero_shifts(&mut tape, 6);
        let stages = siren_stages(&mut tape, &shifts, &binding, &cfg).unwrap();
        assert_eq!(stages.len(), 2 * SIREN_LAYERS - 1);
        let scales: Vec<f64> = stages
            .iter()
            .filter_map(|s| match s {
                DualStage::Affine { product_scale, .. } => Some(*product_scale),
                DualStage::Sin => None,
            })
            .collect();
        assert_eq!(scales.len(), SIREN_LAYERS);
        assert_eq!(scales[0], cfg.omega0);
        assert!(scales[1..].iter().all(|&s| s == 1.0));
    }

    #[test]
    fn zero_shifts_match_the_unconditioned_network_bitwise() {
        let (cfg, store) = small_net(4, 6);
        let x_rows = vec![0.2, -0.4, 0.7, -0.1, 0.5, 0.3];

        let mut tape = Tape::new();
        let binding = Binding::bind(&mut tape, &store).unwrap();
        let x = tape.leaf(x_rows.clone(), &[2, 3]).unwrap();
        let shifts = zero_shifts(&mut tape, 6);
        let with_zero = sdf_forward(&mut tape, x, &shifts, &binding, &cfg).unwrap();

        // unconditioned: fold the layers without any shift term
        let mut value = x;
        for layer in 1..=SIREN_LAYERS {
            let w = binding.tensor(&format!("sdf.siren{layer}.w"));
            let b = binding.tensor(&format!("sdf.siren{layer}.b"));
            let mut pre = tape.matmul(value, w).unwrap();
            if layer == 1 {
                pre = tape.scale(pre, cfg.omega0).unwrap();
            }
            value = tape.add(pre, b).unwrap();
            if layer < SIREN_LAYERS {
                value = tape.sin(value).unwrap();
            }
        }
        for (a, b) in tape.values(with_zero).iter().zip(tape.values(value)) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn one_unit_chain_hits_the_sine_tower() {
        // theta1 = [1,0,0], all other weights 1, all biases 0. At
        // x = (pi/16, 0, 0), layer 1 sees omega0 * x0 = pi/2 exactly,
        // so its activation is exactly 1; the rest is a sine tower.
        let cfg = SdfConfig {
            hidden_width: 1,
            mod_hidden: 1,
            omega0: 8.0,
        };
        let mut store = ParamStore::new();
        let mut rng = rng_for(0, "unused", 0);
        init_sdf_params(&mut store, &cfg, 1, &mut rng);
        store.get_mut("sdf.siren1.w").values.copy_from_slice(&[1.0, 0.0, 0.0]);
        for l in 2..=SIREN_LAYERS {
            store.get_mut(&format!("sdf.siren{l}.w")).values[0] = 1.0;
        }

        let mut tape = Tape::new();
        let binding = Binding::bind(&mut tape, &store).unwrap();
        let x = tape.leaf(vec![PI / 16.0, 0.0, 0.0], &[1, 3]).unwrap();
        let shifts = zero_shifts(&mut tape, 1);
        let out = sdf_forward(&mut tape, x, &shifts, &binding, &cfg).unwrap();

        assert_eq!((8.0 * (PI / 16.0)).sin(), 1.0);
        let mut expect = 1.0_f64;
        for _ in 2..SIREN_LAYERS {
            expect = expect.sin();
        }
        assert_eq!(tape.scalar_value(out).to_bits(), expect.to_bits());
    }

    #[test]
    fn hidden_unit_permutation_leaves_output_invariant() {
        let (cfg, store) = small_net(5, 4);
        let perm = [2usize, 0, 3, 1];

        let mut permuted = store.clone();
        // layer-1 columns, its bias, and layer-2 rows move together
        let w1 = &store.get("sdf.siren1.w").values;
        let b1 = &store.get("sdf.siren1.b").values;
        let w2 = &store.get("sdf.siren2.w").values;
        {
            let p = &mut permuted.get_mut("sdf.siren1.w").values;
            for r in 0..3 {
                for (jnew, &jold) in perm.iter().enumerate() {
                    p[r * 4 + jnew] = w1[r * 4 + jold];
                }
            }
        }
        for (jnew, &jold) in perm.iter().enumerate() {
            permuted.get_mut("sdf.siren1.b").values[jnew] = b1[jold];
        }
        {
            let p = &mut permuted.get_mut("sdf.siren2.w").values;
            for (rnew, &rold) in perm.iter().enumerate() {
                for c in 0..4 {
                    p[rnew * 4 + c] = w2[rold * 4 + c];
                }
            }
        }

        let beta: Vec<f64> = vec![0.11, -0.07, 0.03, 0.19];
        let beta_perm: Vec<f64> = perm.iter().map(|&j| beta[j]).collect();
        let eval = |s: &ParamStore, beta1: &[f64]| -> f64 {
            let mut tape = Tape::new();
            let binding = Binding::bind(&mut tape, s).unwrap();
            let x = tape.leaf(vec![0.3, -0.2, 0.6], &[1, 3]).unwrap();
            let mut shifts = vec![tape.leaf(beta1.to_vec(), &[4]).unwrap()];
            shifts.extend(zero_shifts(&mut tape, 4).into_iter().take(SHIFT_COUNT - 1));
            let out = sdf_forward(&mut tape, x, &shifts, &binding, &cfg).unwrap();
            tape.scalar_value(out)
        };
        let a = eval(&store, &beta);
        let b = eval(&permuted, &beta_perm);
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn varying_z_shifts_pre_activations_by_a_constant() {
        let (cfg, store) = small_net(6, 6);
        let mut tape = Tape::new();
        let binding = Binding::bind(&mut tape, &store).unwrap();
        let mut rng = rng_for(6, "batch", 0);
        let n = 8;
        let xs: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = tape.leaf(xs, &[n, 3]).unwrap();

        let pre1_for = |tape: &mut Tape, z: &[f64]| -> Vec<f64> {
            let zt = tape.leaf(z.to_vec(), &[1, 5]).unwrap();
            let shifts = modulate(tape, zt, &binding, &cfg).unwrap();
            let w1 = binding.tensor("sdf.siren1.w");
            let b1 = binding.tensor("sdf.siren1.b");
            let t = tape.matmul(x, w1).unwrap();
            let t = tape.scale(t, cfg.omega0).unwrap();
            let combined = tape.add(b1, shifts[0]).unwrap();
            let pre = tape.add(t, combined).unwrap();
            tape.values(pre).to_vec()
        };
        let pa = pre1_for(&mut tape, &[0.4, -0.2, 0.9, 0.0, -0.6]);
        let pb = pre1_for(&mut tape, &[-0.8, 0.3, 0.1, 0.7, 0.2]);

        for unit in 0..6 {
            let diffs: Vec<f64> = (0..n).map(|i| pa[i * 6 + unit] - pb[i * 6 + unit]).collect();
            let spread = diffs
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| {
                    (lo.min(d), hi.max(d))
                });
            assert!(spread.1 - spread.0 < 1e-12, "unit {unit}: {diffs:?}");
        }
    }

    #[test]
    fn with_grad_value_path_is_bit_identical_to_forward() {
        let (cfg, store) = small_net(7, 6);
        let mut rng = rng_for(7, "points", 0);
        let n = 16;
        let xs: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-1.2..1.2)).collect();

        let mut tape = Tape::new();
        let binding = Binding::bind(&mut tape, &store).unwrap();
        let x = tape.leaf(xs, &[n, 3]).unwrap();
        let zt = tape.leaf(vec![0.2, -0.5, 0.8, 0.0, 0.4], &[1, 5]).unwrap();
        let shifts = modulate(&mut tape, zt, &binding, &cfg).unwrap();
        let plain = sdf_forward(&mut tape, x, &shifts, &binding, &cfg).unwrap();
        let dual = sdf_forward_with_grad(&mut tape, x, &shifts, &binding, &cfg).unwrap();
        for (a, b) in tape.values(plain).iter().zip(tape.values(dual.value)) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(tape.shape(dual.grad), &[n, 3]);
    }

    #[test]
    fn spatial_gradient_matches_finite_differences_at_100_points() {
        let (cfg, store) = small_net(8, 8);
        let z = vec![0.3, -0.1, 0.5, -0.7, 0.2];
        let value_at = |p: [f64; 3]| -> f64 {
            let mut tape = Tape::new();
            let binding = Binding::bind(&mut tape, &store).unwrap();
            let x = tape.leaf(p.to_vec(), &[1, 3]).unwrap();
            let zt = tape.leaf(z.clone(), &[1, 5]).unwrap();
            let shifts = modulate(&mut tape, zt, &binding, &cfg).unwrap();
            let out = sdf_forward(&mut tape, x, &shifts, &binding, &cfg).unwrap();
            tape.scalar_value(out)
        };

        let mut rng = rng_for(8, "fd_points", 0);
        let h = 1e-6;
        for _ in 0..100 {
            let p = [
                rng.gen_range(-1.2..1.2),
                rng.gen_range(-1.2..1.2),
                rng.gen_range(-1.2..1.2),
            ];
            let mut tape = Tape::new();
            let binding = Binding::bind(&mut tape, &store).unwrap();
            let x = tape.leaf(p.to_vec(), &[1, 3]).unwrap();
            let zt = tape.leaf(z.clone(), &[1, 5]).unwrap();
            let shifts = modulate(&mut tape, zt, &binding, &cfg).unwrap();
            let out = sdf_forward_with_grad(&mut tape, x, &shifts, &binding, &cfg).unwrap();
            let analytic = tape.values(out.grad).to_vec();
            for d in 0..3 {
                let mut pp = p;
                pp[d] += h;
                let mut pm = p;
                pm[d] -= h;
                let numeric = (value_at(pp) - value_at(pm)) / (2.0 * h);
                let rel = (analytic[d] - numeric).abs()
                    / analytic[d].abs().max(numeric.abs()).max(1e-8);
                assert!(rel < 1e-4, "dim {d}: {} vs {numeric}", analytic[d]);
            }
        }
    }

    #[test]
    fn every_parameter_gradient_passes_finite_differences() {
        // loss mixes values and spatial gradients so modulator, SIREN
        // weight, and bias gradients all flow through the dual path.
        let (cfg, store) = small_net(9, 6);
        let mut rng = rng_for(9, "fd_all", 0);
        let n = 3;
        let xs: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z = vec![0.4, -0.3, 0.6, 0.1, -0.5];
        let wv: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wg: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let build = |tape: &mut Tape, store: &ParamStore| -> (Binding, Tensor) {
            let binding = Binding::bind(tape, store).unwrap();
            let x = tape.leaf(xs.clone(), &[n, 3]).unwrap();
            let zt = tape.leaf(z.clone(), &[1, 5]).unwrap();
            let shifts = modulate(tape, zt, &binding, &cfg).unwrap();
            let out = sdf_forward_with_grad(tape, x, &shifts, &binding, &cfg).unwrap();
            let wvt = tape.leaf(wv.clone(), &[n, 1]).unwrap();
            let wgt = tape.leaf(wg.clone(), &[n, 3]).unwrap();
            let lv = tape.mul(out.value, wvt).unwrap();
            let lg = tape.mul(out.grad, wgt).unwrap();
            let sv = tape.reduce_sum(lv, None).unwrap();
            let sg = tape.reduce_sum(lg, None).unwrap();
            (binding, tape.add(sv, sg).unwrap())
        };
        let eval = |store: &ParamStore| -> f64 {
            let mut tape = Tape::new();
            let (_, loss) = build(&mut tape, store);
            tape.scalar_value(loss)
        };

        let mut tape = Tape::new();
        let (binding, loss) = build(&mut tape, &store);
        let grads = tape.backward(loss).unwrap();

        let h = 1e-6;
        for (name, analytic) in binding.gradients(&tape, &grads) {
            for coord in 0..analytic.len() {
                let mut plus = store.clone();
                plus.get_mut(&name).values[coord] += h;
                let mut minus = store.clone();
                minus.get_mut(&name).values[coord] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let rel = (analytic[coord] - numeric).abs()
                    / analytic[coord].abs().max(numeric.abs()).max(1e-8);
                assert!(
                    rel < 1e-3,
                    "{name}[{coord}]: analytic {} vs numeric {numeric}",
                    analytic[coord]
                );
            }
        }
    }

    #[test]
    fn wrong_shift_count_rejected() {
        let (cfg, store) = small_net(10, 6);
        let mut tape = Tape::new();
        let binding = Binding::bind(&mut tape, &store).unwrap();
        let x = tape.leaf(vec![0.1, 0.2, 0.3], &[1, 3]).unwrap();
        let shifts = zero_shifts(&mut tape, 6);
        let err = sdf_forward(&mut tape, x, &shifts[..3], &binding, &cfg);
        assert!(err.is_err());
    }
}
