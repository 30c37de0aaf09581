//! Forward-over-reverse spatial derivatives.
//!
//! For an MLP made of affine layers and `sin` activations, the Jacobian of
//! the output w.r.t. the input coordinates follows the same layer recursion
//! as the values. [`dual_forward`] materializes that recursion with ordinary
//! tape ops, so the spatial gradient is itself a differentiable node and one
//! reverse sweep yields parameter gradients of losses built on it. No
//! second-order sweep is involved.

use crate::error::TapeError;

use super::tape::{Tape, Tensor};

/// One layer of a network that [`dual_forward`] can differentiate.
#[derive(Clone, Copy, Debug)]
pub enum DualStage {
    /// `y = product_scale * (x @ weight) + bias`, bias added row-wise.
    Affine {
        weight: Tensor,
        bias: Tensor,
        product_scale: f64,
    },
    /// `y = sin(x)`.
    Sin,
}

/// Network output together with its spatial gradient, both live tape nodes.
#[derive(Clone, Copy, Debug)]
pub struct DualOutput {
    /// `[n, 1]` values.
    pub value: Tensor,
    /// `[n, d_in]` gradient of each output w.r.t. its own input row.
    pub grad: Tensor,
}

/// Constant seed Jacobian for input dimension `dim`: `[n, d_in]` with ones
/// in column `dim`. Rows are independent, so this is d(row)/d(row[dim]).
fn seed_jacobian(
    tape: &mut Tape,
    n: usize,
    d_in: usize,
    dim: usize,
) -> Result<Tensor, TapeError> {
    let mut values = vec![0.0; n * d_in];
    for row in 0..n {
        values[row * d_in + dim] = 1.0;
    }
    tape.leaf(values, &[n, d_in])
}

/// Run `stages` over `x` (`[n, d_in]`), carrying one Jacobian column per
/// input dimension. The final stage must produce width 1.
pub fn dual_forward(
    tape: &mut Tape,
    x: Tensor,
    stages: &[DualStage],
) -> Result<DualOutput, TapeError> {
    let shape = tape.shape(x).to_vec();
    if shape.len() != 2 {
        return Err(TapeError::ShapeMismatch {
            op: "dual_forward",
            lhs: shape,
            rhs: vec![],
        });
    }
    let (n, d_in) = (shape[0], shape[1]);

    let mut value = x;
    let mut jacs: Vec<Tensor> = (0..d_in)
        .map(|d| seed_jacobian(tape, n, d_in, d))
        .collect::<Result<_, _>>()?;

    for stage in stages {
        match *stage {
            DualStage::Affine {
                weight,
                bias,
                product_scale,
            } => {
                let mut pre = tape.matmul(value, weight)?;
                if product_scale != 1.0 {
                    pre = tape.scale(pre, product_scale)?;
                }
                value = tape.add(pre, bias)?;
                for jac in &mut jacs {
                    let mut jp = tape.matmul(*jac, weight)?;
                    if product_scale != 1.0 {
                        jp = tape.scale(jp, product_scale)?;
                    }
                    *jac = jp;
                }
            }
            DualStage::Sin => {
                let cos_pre = tape.cos(value)?;
                value = tape.sin(value)?;
                for jac in &mut jacs {
                    *jac = tape.mul(cos_pre, *jac)?;
                }
            }
        }
    }

    if tape.shape(value) != [n, 1] {
        return Err(TapeError::ShapeMismatch {
            op: "dual_forward",
            lhs: tape.shape(value).to_vec(),
            rhs: vec![n, 1],
        });
    }
    let grad = tape.concat(&jacs, 1)?;
    Ok(DualOutput { value, grad })
}
