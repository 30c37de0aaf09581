//! Single-head scaled dot-product self-attention with a residual
//! connection; no positional encoding, no layer normalization.

use crate::autodiff::{Tape, Tensor};
use crate::error::TapeError;

/// One attention layer over `z` ([T, d]):
/// softmax(Q K^T / sqrt(d)) V + z with Q = z W_q, K = z W_k, V = z W_v.
pub fn self_attention_layer(
    tape: &mut Tape,
    z: Tensor,
    w_q: Tensor,
    w_k: Tensor,
    w_v: Tensor,
) -> Result<Tensor, TapeError> {
    let d = tape.shape(z)[1];
    let q = tape.matmul(z, w_q)?;
    let k = tape.matmul(z, w_k)?;
    let v = tape.matmul(z, w_v)?;
    let kt = tape.transpose(k)?;
    let logits = tape.matmul(q, kt)?;
    let scaled = tape.scale(logits, 1.0 / (d as f64).sqrt())?;
    let weights = tape.softmax_rows(scaled)?;
    let mixed = tape.matmul(weights, v)?;
    tape.add(z, mixed)
}

/// The attention weight matrix of one layer, for inspection in tests.
pub fn attention_weights(
    tape: &mut Tape,
    z: Tensor,
    w_q: Tensor,
    w_k: Tensor,
) -> Result<Tensor, TapeError> {
    let d = tape.shape(z)[1];
    let q = tape.matmul(z, w_q)?;
    let k = tape.matmul(z, w_k)?;
    let kt = tape.transpose(k)?;
    let logits = tape.matmul(q, kt)?;
    let scaled = tape.scale(logits, 1.0 / (d as f64).sqrt())?;
    tape.softmax_rows(scaled)
}
