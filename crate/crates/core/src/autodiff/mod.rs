//! Reverse-mode automatic differentiation on a flat tape.

mod dual;
mod gradcheck;
pub mod kernels;
mod tape;

pub use dual::{dual_forward, DualOutput, DualStage};
pub use gradcheck::{
    check_op, relative_error, run_all_gradchecks, GradReport, DEFAULT_TOLERANCE, FD_STEP,
};
pub use tape::{Gradients, NodeId, OpAttrs, OpKind, Tape, Tensor};
