//! Latent-to-shift modulators: one small ReLU MLP per modulated layer.

use crate::autodiff::{kernels, Tape, Tensor};
use crate::error::TapeError;
use crate::params::{Binding, ParamStore};

use super::{SdfConfig, SHIFT_COUNT};

/// Map a latent row `z` (`[1, d]`) to the additive shifts, one `[W]`
/// vector per sine layer. The final linear layer receives none.
pub fn modulate(
    tape: &mut Tape,
    z: Tensor,
    binding: &Binding,
    cfg: &SdfConfig,
) -> Result<Vec<Tensor>, TapeError> {
    let mut shifts = Vec::with_capacity(SHIFT_COUNT);
    for layer in 1..=SHIFT_COUNT {
        let mut h = z;
        for stage in ["h1", "h2"] {
            let w = binding.tensor(&format!("sdf.mod{layer}.{stage}.w"));
            let b = binding.tensor(&format!("sdf.mod{layer}.{stage}.b"));
            let pre = tape.matmul(h, w)?;
            let pre = tape.add(pre, b)?;
            h = tape.relu(pre)?;
        }
        let w = binding.tensor(&format!("sdf.mod{layer}.out.w"));
        let b = binding.tensor(&format!("sdf.mod{layer}.out.b"));
        let out = tape.matmul(h, w)?;
        let out = tape.add(out, b)?;
        shifts.push(tape.reshape(out, &[cfg.hidden_width])?);
    }
    Ok(shifts)
}

/// No-tape twin of [`modulate`] over raw buffers; same kernels, same op
/// order, bit-identical results.
pub fn raw_shifts(store: &ParamStore, cfg: &SdfConfig, z: &[f64]) -> Vec<Vec<f64>> {
    let d = z.len();
    let mut shifts = Vec::with_capacity(SHIFT_COUNT);
    for layer in 1..=SHIFT_COUNT {
        let mut h = z.to_vec();
        let mut width = d;
        for stage in ["h1", "h2"] {
            let w = store.get(&format!("sdf.mod{layer}.{stage}.w"));
            let b = store.get(&format!("sdf.mod{layer}.{stage}.b"));
            let out_width = w.shape[1];
            let pre = kernels::matmul(&h, &w.values, 1, width, out_width);
            let pre = kernels::add_rowwise(&pre, &b.values, 1, out_width);
            h = kernels::map(&pre, |x| x.max(0.0));
            width = out_width;
        }
        let w = store.get(&format!("sdf.mod{layer}.out.w"));
        let b = store.get(&format!("sdf.mod{layer}.out.b"));
        let out = kernels::matmul(&h, &w.values, 1, width, cfg.hidden_width);
        shifts.push(kernels::add_rowwise(&out, &b.values, 1, cfg.hidden_width));
    }
    shifts
}

#[cfg(test)]
mod tests {
    use crate::params::ParamStore;
    use crate::sdfnet::init_sdf_params;
    use crate::seed::rng_for;

    use super::*;

    fn tiny() -> (SdfConfig, ParamStore) {
        let cfg = SdfConfig {
            hidden_width: 3,
            mod_hidden: 2,
            omega0: 8.0,
        };
        let mut store = ParamStore::new();
        let mut rng = rng_for(7, "mod_test", 0);
        init_sdf_params(&mut store, &cfg, 4, &mut rng);
        (cfg, store)
    }

    #[test]
    fn zero_final_layers_give_zero_shifts() {
        let (cfg, store) = tiny();
        let mut tape = Tape::new();
        let binding = Binding::bind(&mut tape, &store).unwrap();
        let z = tape.leaf(vec![0.3, -0.8, 0.5, 0.1], &[1, 4]).unwrap();
        let shifts = modulate(&mut tape, z, &binding, &cfg).unwrap();
        assert_eq!(shifts.len(), SHIFT_COUNT);
        for s in &shifts {
            assert_eq!(tape.shape(*s), &[cfg.hidden_width]);
            assert!(tape.values(*s).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn shift_count_is_layers_times_width() {
        let (cfg, store) = tiny();
        let shifts = raw_shifts(&store, &cfg, &[0.1, 0.2, 0.3, 0.4]);
        let total: usize = shifts.iter().map(Vec::len).sum();
        assert_eq!(total, SHIFT_COUNT * cfg.hidden_width);
    }

    #[test]
    fn hand_computed_one_unit_modulator() {
        // d=1, H=1, W=1: h1 = relu(0.5 z + 0.25), h2 = relu(2 h1 - 0.1),
        // out = 3 h2 + 0.7. For z = 2: h1 = 1.25, h2 = 2.4, out = 7.9.
        let cfg = SdfConfig {
            hidden_width: 1,
            mod_hidden: 1,
            omega0: 8.0,
        };
        let mut store = ParamStore::new();
        let mut rng = rng_for(0, "unused", 0);
        init_sdf_params(&mut store, &cfg, 1, &mut rng);
        store.get_mut("sdf.mod1.h1.w").values[0] = 0.5;
        store.get_mut("sdf.mod1.h1.b").values[0] = 0.25;
        store.get_mut("sdf.mod1.h2.w").values[0] = 2.0;
        store.get_mut("sdf.mod1.h2.b").values[0] = -0.1;
        store.get_mut("sdf.mod1.out.w").values[0] = 3.0;
        store.get_mut("sdf.mod1.out.b").values[0] = 0.7;

        let shifts = raw_shifts(&store, &cfg, &[2.0]);
        assert!((shifts[0][0] - 7.9).abs() < 1e-15);

        // negative pre-activation clamps: z = -10 -> h1 = 0, h2 = 0, out = 0.7
        let shifts = raw_shifts(&store, &cfg, &[-10.0]);
        assert_eq!(shifts[0][0], 0.7);
    }

    #[test]
    fn tape_and_raw_paths_are_bit_identical() {
        let (cfg, mut store) = tiny();
        // make the final layers nonzero so the comparison is nontrivial
        let mut rng = rng_for(9, "fill", 0);
        for layer in 1..=SHIFT_COUNT {
            for suffix in ["out.w", "out.b"] {
                for v in &mut store.get_mut(&format!("sdf.mod{layer}.{suffix}")).values {
                    *v = rand::Rng::gen_range(&mut rng, -0.5..0.5);
                }
            }
        }
        let z = vec![0.3, -0.8, 0.5, 0.1];
        let raw = raw_shifts(&store, &cfg, &z);

        let mut tape = Tape::new();
        let binding = Binding::bind(&mut tape, &store).unwrap();
        let zt = tape.leaf(z, &[1, 4]).unwrap();
        let shifts = modulate(&mut tape, zt, &binding, &cfg).unwrap();
        for (t, r) in shifts.iter().zip(&raw) {
            let tv = tape.values(*t);
            assert_eq!(tv.len(), r.len());
            for (a, b) in tv.iter().zip(r) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn wrong_latent_dimension_rejected() {
        let (cfg, store) = tiny();
        let mut tape = Tape::new();
        let binding = Binding::bind(&mut tape, &store).unwrap();
        let z = tape.leaf(vec![0.1, 0.2], &[1, 2]).unwrap();
        assert!(modulate(&mut tape, z, &binding, &cfg).is_err());
    }
}
