//! Learnable Fourier feature lift.

use crate::autodiff::{Tape, Tensor};
use crate::error::TapeError;

/// Lift `points` ([M, 3]) through basis `b` ([m, 3]) to [M, 2m] features:
/// row i = [cos(2 pi B p_i), sin(2 pi B p_i)], cos block first.
pub fn fourier_lift(tape: &mut Tape, points: Tensor, b: Tensor) -> Result<Tensor, TapeError> {
    let bs = tape.shape(b);
    if bs.len() != 2 || bs[1] != 3 {
        return Err(TapeError::ShapeMismatch {
            op: "fourier_lift",
            lhs: bs.to_vec(),
            rhs: vec![0, 3],
        });
    }
    let bt = tape.transpose(b)?;
    let proj = tape.matmul(points, bt)?;
    let angle = tape.scale(proj, std::f64::consts::TAU)?;
    let cos = tape.cos(angle)?;
    let sin = tape.sin(angle)?;
    tape.concat(&[cos, sin], 1)
}
