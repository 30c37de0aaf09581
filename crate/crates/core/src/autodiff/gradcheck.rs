//! Finite-difference verification of every tape op.
//!
//! Each op kind gets randomized probe graphs: leaf inputs, the op under
//! test, then a fixed random-weighted sum to a scalar loss (a plain sum
//! would hide errors under symmetry, e.g. a transposed gradient). Analytic
//! gradients from the reverse sweep are compared against central
//! differences coordinate by coordinate.
//!
//! Inputs are sampled away from kinks and domain edges (relu/abs at 0,
//! max ties, zero divisors) so the central difference stays valid at the
//! chosen step.

use rand::Rng;
use serde::Serialize;

use crate::error::TapeError;
use crate::seed::rng_for;

use super::tape::{OpKind, Tape, Tensor};

/// Central-difference step. With f64 and unit-scale inputs the FD error is
/// ~1e-10, far under the acceptance tolerance.
pub const FD_STEP: f64 = 1e-5;

/// Relative error threshold for a probe to pass.
pub const DEFAULT_TOLERANCE: f64 = 1e-3;

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Outcome of checking one op kind.
#[derive(Clone, Debug, Serialize)]
pub struct GradReport {
    pub op: String,
    pub probes: usize,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// One probe graph: leaf value buffers plus a builder that turns the bound
/// leaves into a scalar loss.
struct Probe {
    inputs: Vec<(Vec<f64>, Vec<usize>)>,
    build: Box<dyn Fn(&mut Tape, &[Tensor]) -> Result<Tensor, TapeError>>,
}

fn eval_loss(probe: &Probe, values: &[Vec<f64>]) -> f64 {
    let mut tape = Tape::new();
    let leaves: Vec<Tensor> = probe
        .inputs
        .iter()
        .zip(values)
        .map(|((_, shape), vals)| tape.leaf(vals.clone(), shape).expect("probe leaf"))
        .collect();
    let loss = (probe.build)(&mut tape, &leaves).expect("probe forward");
    tape.scalar_value(loss)
}

/// Run one probe: returns (probe_count, max_rel, sum_rel).
fn run_probe(probe: &Probe) -> (usize, f64, f64) {
    let mut tape = Tape::new();
    let leaves: Vec<Tensor> = probe
        .inputs
        .iter()
        .map(|(vals, shape)| tape.leaf(vals.clone(), shape).expect("probe leaf"))
        .collect();
    let loss = (probe.build)(&mut tape, &leaves).expect("probe forward");
    let grads = tape.backward(loss).expect("probe backward");

    let base: Vec<Vec<f64>> = probe.inputs.iter().map(|(v, _)| v.clone()).collect();
    let mut count = 0usize;
    let mut max_rel = 0.0f64;
    let mut sum_rel = 0.0f64;
    for (i, leaf) in leaves.iter().enumerate() {
        let analytic = grads.get_or_zeros(*leaf, &tape);
        for j in 0..base[i].len() {
            let mut plus = base.clone();
            plus[i][j] += FD_STEP;
            let mut minus = base.clone();
            minus[i][j] -= FD_STEP;
            let numeric = (eval_loss(probe, &plus) - eval_loss(probe, &minus)) / (2.0 * FD_STEP);
            let rel = relative_error(analytic[j], numeric);
            count += 1;
            sum_rel += rel;
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    (count, max_rel, sum_rel)
}

fn rand_vec(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Values with |x| in [lo, hi], random sign: keeps relu/abs away from 0.
fn rand_vec_offzero(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let mag = rng.gen_range(lo..hi);
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

/// Values pairwise separated by > 100 * FD_STEP so max() never flips.
fn rand_vec_separated(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut slots: Vec<usize> = (0..n).collect();
    // Fisher-Yates over slot order
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        slots.swap(i, j);
    }
    let gap = 200.0 * FD_STEP;
    slots
        .into_iter()
        .map(|s| s as f64 * gap + rng.gen_range(0.0..gap * 0.4))
        .collect()
}

/// Loss = sum(out * W_r) with fixed random weights, reduced to a scalar.
fn weighted_loss(
    tape: &mut Tape,
    out: Tensor,
    weights: &[f64],
) -> Result<Tensor, TapeError> {
    let shape = tape.shape(out).to_vec();
    let w = tape.leaf(weights.to_vec(), &shape)?;
    let prod = tape.mul(out, w)?;
    tape.reduce_sum(prod, None)
}

fn probes_for(kind: OpKind, seed: u64, trial: u64) -> Vec<Probe> {
    let mut rng = rng_for(seed, kind.name(), trial);
    let mut probes = Vec::new();
    // Weight buffers are sampled up front so each probe's builder owns them.
    match kind {
        OpKind::Matmul => {
            let (m, k, n) = (4, 3, 4);
            let a = rand_vec(&mut rng, m * k, -1.5, 1.5);
            let b = rand_vec(&mut rng, k * n, -1.5, 1.5);
            let w = rand_vec(&mut rng, m * n, -1.0, 1.0);
            probes.push(Probe {
                inputs: vec![(a, vec![m, k]), (b, vec![k, n])],
                build: Box::new(move |t, l| {
                    let y = t.matmul(l[0], l[1])?;
                    weighted_loss(t, y, &w)
                }),
            });
        }
        OpKind::Add => {
            let (r, c) = (3, 4);
            let a = rand_vec(&mut rng, r * c, -1.5, 1.5);
            let b = rand_vec(&mut rng, r * c, -1.5, 1.5);
            let w = rand_vec(&mut rng, r * c, -1.0, 1.0);
            probes.push(Probe {
                inputs: vec![(a, vec![r, c]), (b, vec![r, c])],
                build: Box::new(move |t, l| {
                    let y = t.add(l[0], l[1])?;
                    weighted_loss(t, y, &w)
                }),
            });
            // row-wise bias form
            let a2 = rand_vec(&mut rng, r * c, -1.5, 1.5);
            let bias = rand_vec(&mut rng, c, -1.5, 1.5);
            let w2 = rand_vec(&mut rng, r * c, -1.0, 1.0);
            probes.push(Probe {
                inputs: vec![(a2, vec![r, c]), (bias, vec![c])],
                build: Box::new(move |t, l| {
                    let y = t.add(l[0], l[1])?;
                    weighted_loss(t, y, &w2)
                }),
            });
        }
        OpKind::Sub => {
            let (r, c) = (3, 4);
            let a = rand_vec(&mut rng, r * c, -1.5, 1.5);
            let b = rand_vec(&mut rng, r * c, -1.5, 1.5);
            let w = rand_vec(&mut rng, r * c, -1.0, 1.0);
            probes.push(Probe {
                inputs: vec![(a, vec![r, c]), (b, vec![r, c])],
                build: Box::new(move |t, l| {
                    let y = t.sub(l[0], l[1])?;
                    weighted_loss(t, y, &w)
                }),
            });
        }
        OpKind::ElementwiseMul => {
            let (r, c) = (3, 4);
            let a = rand_vec(&mut rng, r * c, -1.5, 1.5);
            let b = rand_vec(&mut rng, r * c, -1.5, 1.5);
            let w = rand_vec(&mut rng, r * c, -1.0, 1.0);
            probes.push(Probe {
                inputs: vec![(a, vec![r, c]), (b, vec![r, c])],
                build: Box::new(move |t, l| {
                    let y = t.mul(l[0], l[1])?;
                    weighted_loss(t, y, &w)
                }),
            });
        }
        OpKind::Div => {
            let (r, c) = (3, 4);
            let a = rand_vec(&mut rng, r * c, -1.5, 1.5);
            let b = rand_vec_offzero(&mut rng, r * c, 0.5, 2.0);
            let w = rand_vec(&mut rng, r * c, -1.0, 1.0);
            probes.push(Probe {
                inputs: vec![(a, vec![r, c]), (b, vec![r, c])],
                build: Box::new(move |t, l| {
                    let y = t.div(l[0], l[1])?;
                    weighted_loss(t, y, &w)
                }),
            });
            // per-row divisor form
            let a2 = rand_vec(&mut rng, r * c, -1.5, 1.5);
            let b2 = rand_vec_offzero(&mut rng, r, 0.5, 2.0);
            let w2 = rand_vec(&mut rng, r * c, -1.0, 1.0);
            probes.push(Probe {
                inputs: vec![(a2, vec![r, c]), (b2, vec![r])],
                build: Box::new(move |t, l| {
                    let y = t.div(l[0], l[1])?;
                    weighted_loss(t, y, &w2)
                }),
            });
        }
        OpKind::Scale => {
            let (r, c) = (4, 4);
            let a = rand_vec(&mut rng, r * c, -1.5, 1.5);
            let factor = rng.gen_range(-3.0..3.0);
            let w = rand_vec(&mut rng, r * c, -1.0, 1.0);
            probes.push(Probe {
                inputs: vec![(a, vec![r, c])],
                build: Box::new(move |t, l| {
                    let y = t.scale(l[0], factor)?;
                    weighted_loss(t, y, &w)
                }),
            });
        }
        OpKind::Sin | OpKind::Cos | OpKind::Square | OpKind::Exp => {
            let (r, c) = (4, 4);
            let range = if kind == OpKind::Exp { 2.0 } else { 3.0 };
            let a = rand_vec(&mut rng, r * c, -range, range);
            let w = rand_vec(&mut rng, r * c, -1.0, 1.0);
            probes.push(Probe {
                inputs: vec![(a, vec![r, c])],
                build: Box::new(move |t, l| {
                    let y = match kind {
                        OpKind::Sin => t.sin(l[0])?,
                        OpKind::Cos => t.cos(l[0])?,
                        OpKind::Square => t.square(l[0])?,
                        _ => t.exp(l[0])?,
                    };
                    weighted_loss(t, y, &w)
                }),
            });
        }
        OpKind::Relu | OpKind::Abs => {
            let (r, c) = (4, 4);
            let a = rand_vec_offzero(&mut rng, r * c, 0.2, 2.0);
            let w = rand_vec(&mut rng, r * c, -1.0, 1.0);
            probes.push(Probe {
                inputs: vec![(a, vec![r, c])],
                build: Box::new(move |t, l| {
                    let y = if kind == OpKind::Relu {
                        t.relu(l[0])?
                    } else {
                        t.abs(l[0])?
                    };
                    weighted_loss(t, y, &w)
                }),
            });
        }
        OpKind::Sqrt => {
            let (r, c) = (4, 4);
            let a = rand_vec(&mut rng, r * c, 0.3, 2.0);
            let w = rand_vec(&mut rng, r * c, -1.0, 1.0);
            probes.push(Probe {
                inputs: vec![(a, vec![r, c])],
                build: Box::new(move |t, l| {
                    let y = t.sqrt(l[0])?;
                    weighted_loss(t, y, &w)
                }),
            });
        }
        OpKind::Powf => {
            let (r, c) = (4, 4);
            let a = rand_vec(&mut rng, r * c, 0.3, 2.0);
            let exponent = rng.gen_range(1.2..3.0);
            let w = rand_vec(&mut rng, r * c, -1.0, 1.0);
            probes.push(Probe {
                inputs: vec![(a, vec![r, c])],
                build: Box::new(move |t, l| {
                    let y = t.powf(l[0], exponent)?;
                    weighted_loss(t, y, &w)
                }),
            });
        }
        OpKind::SoftmaxRows => {
            let (r, c) = (4, 5);
            let a = rand_vec(&mut rng, r * c, -2.0, 2.0);
            let w = rand_vec(&mut rng, r * c, -1.0, 1.0);
            probes.push(Probe {
                inputs: vec![(a, vec![r, c])],
                build: Box::new(move |t, l| {
                    let y = t.softmax_rows(l[0])?;
                    weighted_loss(t, y, &w)
                }),
            });
        }
        OpKind::ConcatLastAxis => {
            let r = 3;
            let (c1, c2, c3) = (2, 3, 2);
            let a = rand_vec(&mut rng, r * c1, -1.5, 1.5);
            let b = rand_vec(&mut rng, r * c2, -1.5, 1.5);
            let c = rand_vec(&mut rng, r * c3, -1.5, 1.5);
            let w = rand_vec(&mut rng, r * (c1 + c2 + c3), -1.0, 1.0);
            probes.push(Probe {
                inputs: vec![(a, vec![r, c1]), (b, vec![r, c2]), (c, vec![r, c3])],
                build: Box::new(move |t, l| {
                    let y = t.concat(l, 1)?;
                    weighted_loss(t, y, &w)
                }),
            });
            // axis-0 stacking
            let c0 = 3;
            let (r1, r2) = (2, 3);
            let a2 = rand_vec(&mut rng, r1 * c0, -1.5, 1.5);
            let b2 = rand_vec(&mut rng, r2 * c0, -1.5, 1.5);
            let w2 = rand_vec(&mut rng, (r1 + r2) * c0, -1.0, 1.0);
            probes.push(Probe {
                inputs: vec![(a2, vec![r1, c0]), (b2, vec![r2, c0])],
                build: Box::new(move |t, l| {
                    let y = t.concat(l, 0)?;
                    weighted_loss(t, y, &w2)
                }),
            });
        }
        OpKind::GatherRows => {
            let (r, c) = (5, 3);
            let a = rand_vec(&mut rng, r * c, -1.5, 1.5);
            // repeats exercise scatter-add accumulation
            let rows: Vec<usize> = (0..6).map(|_| rng.gen_range(0..r)).collect();
            let w = rand_vec(&mut rng, rows.len() * c, -1.0, 1.0);
            probes.push(Probe {
                inputs: vec![(a, vec![r, c])],
                build: Box::new(move |t, l| {
                    let y = t.gather_rows(l[0], rows.clone())?;
                    weighted_loss(t, y, &w)
                }),
            });
        }
        OpKind::Transpose => {
            let (r, c) = (3, 5);
            let a = rand_vec(&mut rng, r * c, -1.5, 1.5);
            let w = rand_vec(&mut rng, r * c, -1.0, 1.0);
            probes.push(Probe {
                inputs: vec![(a, vec![r, c])],
                build: Box::new(move |t, l| {
                    let y = t.transpose(l[0])?;
                    weighted_loss(t, y, &w)
                }),
            });
        }
        OpKind::Reshape => {
            let (r, c) = (4, 4);
            let a = rand_vec(&mut rng, r * c, -1.5, 1.5);
            let w = rand_vec(&mut rng, r * c, -1.0, 1.0);
            probes.push(Probe {
                inputs: vec![(a, vec![r, c])],
                build: Box::new(move |t, l| {
                    let y = t.reshape(l[0], &[2, 8])?;
                    weighted_loss(t, y, &w)
                }),
            });
        }
        OpKind::ReduceSum | OpKind::ReduceMean => {
            let (r, c) = (4, 5);
            for axis in [None, Some(0), Some(1)] {
                let a = rand_vec(&mut rng, r * c, -1.5, 1.5);
                let out_len = match axis {
                    None => 1,
                    Some(0) => c,
                    Some(_) => r,
                };
                let w = rand_vec(&mut rng, out_len, -1.0, 1.0);
                probes.push(Probe {
                    inputs: vec![(a, vec![r, c])],
                    build: Box::new(move |t, l| {
                        let y = if kind == OpKind::ReduceSum {
                            t.reduce_sum(l[0], axis)?
                        } else {
                            t.reduce_mean(l[0], axis)?
                        };
                        // out may be rank-1; weighted_loss matches its shape
                        weighted_loss(t, y, &w)
                    }),
                });
            }
        }
        OpKind::ReduceMaxAxis => {
            // rank-2, both axes
            let (r, c) = (4, 5);
            for axis in [0usize, 1] {
                let a = rand_vec_separated(&mut rng, r * c);
                let out_len = if axis == 0 { c } else { r };
                let w = rand_vec(&mut rng, out_len, -1.0, 1.0);
                probes.push(Probe {
                    inputs: vec![(a, vec![r, c])],
                    build: Box::new(move |t, l| {
                        let y = t.reduce_max_axis(l[0], axis)?;
                        weighted_loss(t, y, &w)
                    }),
                });
            }
            // rank-3 middle axis, the edge-conv pooling pattern
            let (m, k, f) = (3, 4, 2);
            let a = rand_vec_separated(&mut rng, m * k * f);
            let w = rand_vec(&mut rng, m * f, -1.0, 1.0);
            probes.push(Probe {
                inputs: vec![(a, vec![m, k, f])],
                build: Box::new(move |t, l| {
                    let y = t.reduce_max_axis(l[0], 1)?;
                    weighted_loss(t, y, &w)
                }),
            });
        }
        OpKind::L2NormRows => {
            let (r, c) = (4, 4);
            // rows bounded away from zero norm
            let a = rand_vec_offzero(&mut rng, r * c, 0.4, 2.0);
            let w = rand_vec(&mut rng, r, -1.0, 1.0);
            probes.push(Probe {
                inputs: vec![(a, vec![r, c])],
                build: Box::new(move |t, l| {
                    let y = t.l2_norm_rows(l[0])?;
                    weighted_loss(t, y, &w)
                }),
            });
        }
    }
    probes
}

/// Check one op kind with `trials` random probe graphs.
pub fn check_op(kind: OpKind, seed: u64, trials: u64, tolerance: f64) -> GradReport {
    let mut count = 0usize;
    let mut max_rel = 0.0f64;
    let mut sum_rel = 0.0f64;
    for trial in 0..trials {
        for probe in probes_for(kind, seed, trial) {
            let (c, mx, sm) = run_probe(&probe);
            count += c;
            sum_rel += sm;
            if mx > max_rel {
                max_rel = mx;
            }
        }
    }
    GradReport {
        op: kind.name().to_string(),
        probes: count,
        max_rel_err: max_rel,
        mean_rel_err: if count > 0 { sum_rel / count as f64 } else { 0.0 },
        tolerance,
        pass: max_rel < tolerance,
    }
}

/// Check every op kind. Each report covers at least 100 probe coordinates.
pub fn run_all_gradchecks(seed: u64, tolerance: f64) -> Vec<GradReport> {
    OpKind::ALL
        .iter()
        .map(|&kind| check_op(kind, seed, 8, tolerance))
        .collect()
}
