//! Loss terms: focal-weighted surface consistency, Eikonal regularity,
//! and latent norm, combined as a weighted sum.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, TapeError};
use crate::vec3::{norm, Point3};

/// Residuals are clamped here before exponentiation; the factor saturates
/// but the product stays strictly increasing in the residual.
pub const FOCAL_CLAMP: f64 = 20.0;
/// Added to gradient norms before normalizing, so degenerate gradients
/// stay finite instead of dividing by zero.
pub const EPS_GRAD: f64 = 1e-12;
/// Floor under the focal factor's base before a fractional exponent.
/// `exp(a) - 1` is either exactly 0 or at least 2^-53, so the floor only
/// ever replaces an exact zero; every other value passes through
/// bit-identically.
const POW_FLOOR: f64 = 1e-300;

/// Term weights. Surface and normal factors apply inside the surface
/// term, Eikonal and latent factors in the total.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_surface: f64,
    pub lambda_normal: f64,
    pub lambda_eik: f64,
    pub lambda_z: f64,
    pub alpha: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_surface: 3000.0,
            lambda_normal: 50.0,
            lambda_eik: 50.0,
            lambda_z: 0.001,
            alpha: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), Error> {
        let all = [
            self.lambda_surface,
            self.lambda_normal,
            self.lambda_eik,
            self.lambda_z,
            self.alpha,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Invalid(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Host-side counts of numerical guards that fired while building the
/// surface term.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct SurfaceStats {
    /// Rows whose raw gradient norm fell below 1e-9.
    pub guarded_normals: usize,
    /// Residuals that hit the exponent clamp.
    pub clamped_residuals: usize,
}

/// Scalar loss values read back after a step.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub surface: f64,
    pub eikonal: f64,
    pub latent: f64,
    pub total: f64,
    pub guarded_normals: usize,
    pub clamped_residuals: usize,
}

fn const_like(tape: &mut Tape, reference: Tensor, value: f64) -> Result<Tensor, TapeError> {
    let shape = tape.shape(reference).to_vec();
    let n = tape.len(reference);
    tape.leaf(vec![value; n], &shape)
}

/// `min(x, c)` as `c - relu(c - x)`, differentiable with slope 1 below
/// the clamp and 0 above it.
fn clamp_upper(tape: &mut Tape, x: Tensor, c: f64) -> Result<Tensor, TapeError> {
    let cs = const_like(tape, x, c)?;
    let gap = tape.sub(cs, x)?;
    let cut = tape.relu(gap)?;
    tape.sub(cs, cut)
}

/// `max(x, c)` as `c + relu(x - c)`, the mirror of [`clamp_upper`].
fn clamp_lower(tape: &mut Tape, x: Tensor, c: f64) -> Result<Tensor, TapeError> {
    let cs = const_like(tape, x, c)?;
    let gap = tape.sub(x, cs)?;
    let kept = tape.relu(gap)?;
    tape.add(cs, kept)
}

/// Focal weighting of a non-negative residual tensor `a`:
/// `(exp(min(a, 20)) - 1)^alpha * a`. The multiplied residual stays
/// unclamped so its gradient never vanishes.
pub fn focal_from_abs(tape: &mut Tape, a: Tensor, alpha: f64) -> Result<Tensor, TapeError> {
    if alpha == 0.0 {
        return Ok(a);
    }
    let clamped = clamp_upper(tape, a, FOCAL_CLAMP)?;
    let e = tape.exp(clamped)?;
    let ones = const_like(tape, a, 1.0)?;
    let em1 = tape.sub(e, ones)?;
    let factor = if alpha == 1.0 {
        em1
    } else if alpha == 2.0 {
        tape.square(em1)?
    } else {
        let floored = clamp_lower(tape, em1, POW_FLOOR)?;
        tape.powf(floored, alpha)?
    };
    tape.mul(factor, a)
}

/// Elementwise focal loss between predictions and targets.
pub fn focal(
    tape: &mut Tape,
    pred: Tensor,
    target: Tensor,
    alpha: f64,
) -> Result<Tensor, TapeError> {
    let r = tape.sub(pred, target)?;
    let a = tape.abs(r)?;
    focal_from_abs(tape, a, alpha)
}

/// Reference implementation over plain scalars; mirrors the tape's
/// arithmetic (including the relu-composed clamp) operation for
/// operation, so the two agree bitwise.
pub fn focal_scalar(yhat: f64, y: f64, alpha: f64) -> f64 {
    let a = (yhat - y).abs();
    if alpha == 0.0 {
        return a;
    }
    let clamped = FOCAL_CLAMP - (FOCAL_CLAMP - a).max(0.0);
    let em1 = clamped.exp() - 1.0;
    let factor = if alpha == 1.0 {
        em1
    } else if alpha == 2.0 {
        em1 * em1
    } else {
        (POW_FLOOR + (em1 - POW_FLOOR).max(0.0)).powf(alpha)
    };
    factor * a
}

/// Mean over surface points of
/// `lambda_surface * focal(|f|, 0) + lambda_normal * focal(unit_grad . n, 1 target)`.
/// `values` is `[n, 1]`, `grads` `[n, 3]`; `normals` must be unit length.
pub fn surface_loss(
    tape: &mut Tape,
    values: Tensor,
    grads: Tensor,
    normals: &[Point3],
    weights: &LossWeights,
) -> Result<(Tensor, SurfaceStats), Error> {
    let n = tape.shape(values)[0];
    if normals.len() != n {
        return Err(Error::Invalid(format!(
            "{n} predictions but {} normals",
            normals.len()
        )));
    }
    for nrm in normals {
        if (norm(*nrm) - 1.0).abs() > 1e-6 {
            return Err(Error::Invalid(format!(
                "surface normals must be unit length, got |n| = {}",
                norm(*nrm)
            )));
        }
    }

    // value term on |f|
    let a_val = tape.abs(values)?;
    let a_val = tape.reshape(a_val, &[n])?;
    let f_val = focal_from_abs(tape, a_val, weights.alpha)?;

    // orientation term on unit-gradient dot normal, target 1
    let norms = tape.l2_norm_rows(grads)?;
    let eps = const_like(tape, norms, EPS_GRAD)?;
    let denom = tape.add(norms, eps)?;
    let unit = tape.div(grads, denom)?;
    let flat: Vec<f64> = normals.iter().flatten().copied().collect();
    let normal_leaf = tape.leaf(flat, &[n, 3])?;
    let prod = tape.mul(unit, normal_leaf)?;
    let dots = tape.reduce_sum(prod, Some(1))?;
    let ones = const_like(tape, dots, 1.0)?;
    let resid = tape.sub(dots, ones)?;
    let a_dot = tape.abs(resid)?;
    let f_dot = focal_from_abs(tape, a_dot, weights.alpha)?;

    let sv = tape.scale(f_val, weights.lambda_surface)?;
    let sn = tape.scale(f_dot, weights.lambda_normal)?;
    let bracket = tape.add(sv, sn)?;
    let loss = tape.reduce_mean(bracket, None)?;

    let stats = SurfaceStats {
        guarded_normals: tape.values(norms).iter().filter(|&&v| v < 1e-9).count(),
        clamped_residuals: tape
            .values(a_val)
            .iter()
            .chain(tape.values(a_dot))
            .filter(|&&v| v > FOCAL_CLAMP)
            .count(),
    };
    Ok((loss, stats))
}

/// Mean over queries of `| ||grad f|| - 1 |`; `grads` is `[n, 3]`.
pub fn eikonal_loss(tape: &mut Tape, grads: Tensor) -> Result<Tensor, TapeError> {
    let norms = tape.l2_norm_rows(grads)?;
    let ones = const_like(tape, norms, 1.0)?;
    let resid = tape.sub(norms, ones)?;
    let a = tape.abs(resid)?;
    tape.reduce_mean(a, None)
}

/// Squared Euclidean norm of the latent code.
pub fn latent_loss(tape: &mut Tape, z: Tensor) -> Result<Tensor, TapeError> {
    let sq = tape.square(z)?;
    tape.reduce_sum(sq, None)
}

/// `surface + lambda_eik * eikonal + lambda_z * latent`; the surface and
/// normal factors are already inside the surface term.
pub fn total_loss(
    tape: &mut Tape,
    surface: Tensor,
    eikonal: Tensor,
    latent: Tensor,
    weights: &LossWeights,
) -> Result<Tensor, TapeError> {
    let e = tape.scale(eikonal, weights.lambda_eik)?;
    let z = tape.scale(latent, weights.lambda_z)?;
    let se = tape.add(surface, e)?;
    tape.add(se, z)
}
