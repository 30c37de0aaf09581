//! Edge convolution over a fixed neighbor graph.

use crate::autodiff::{Tape, Tensor};
use crate::error::Error;

/// One edge-conv layer: for each point i and neighbor j,
/// ReLU(W [f_i, f_j - f_i] + bias), then a per-channel max over the k
/// neighbors. `edges` is the row-major M x k index table.
pub fn edge_conv(
    tape: &mut Tape,
    features: Tensor,
    edges: &[usize],
    k: usize,
    weight: Tensor,
    bias: Tensor,
) -> Result<Tensor, Error> {
    let shape = tape.shape(features).to_vec();
    if shape.len() != 2 {
        return Err(Error::Invalid(format!(
            "edge_conv expects rank-2 features, got {shape:?}"
        )));
    }
    let m = shape[0];
    if edges.len() != m * k {
        return Err(Error::Invalid(format!(
            "edge table holds {} entries, expected {m} x {k}",
            edges.len()
        )));
    }
    // center features repeated per neighbor slot: rows [i, i, ..] k times
    let centers: Vec<usize> = (0..m).flat_map(|i| std::iter::repeat(i).take(k)).collect();
    let f_center = tape.gather_rows(features, centers)?;
    let f_neighbor = tape.gather_rows(features, edges.to_vec())?;
    let diff = tape.sub(f_neighbor, f_center)?;
    let cat = tape.concat(&[f_center, diff], 1)?;
    let pre = tape.matmul(cat, weight)?;
    let pre = tape.add(pre, bias)?;
    let act = tape.relu(pre)?;
    let width = tape.shape(act)[1];
    let grouped = tape.reshape(act, &[m, k, width])?;
    Ok(tape.reduce_max_axis(grouped, 1)?)
}
