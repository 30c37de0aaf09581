//! Brute-force k-nearest-neighbor graph over raw 3D coordinates.

use crate::error::Error;
use crate::vec3::{dist_sq, Point3};

/// Row-major M x k neighbor indices: row i holds the k nearest neighbors
/// of point i by Euclidean distance, self excluded, distance ties broken
/// toward the smaller index.
pub fn knn_graph(points: &[Point3], k: usize) -> Result<Vec<usize>, Error> {
    let m = points.len();
    if m <= k {
        return Err(Error::Invalid(format!(
            "knn_graph needs more points than neighbors, got M = {m}, k = {k}"
        )));
    }
    let mut edges = Vec::with_capacity(m * k);
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(m - 1);
    for (i, p) in points.iter().enumerate() {
        candidates.clear();
        candidates.extend(
            points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(j, q)| (dist_sq(*p, *q), j)),
        );
        // lexicographic (distance, index) order realizes the tie-break;
        // distances are finite so total_cmp degenerates to plain order
        candidates.select_nth_unstable_by(k - 1, |a, b| {
            a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
        });
        let mut nearest: Vec<(f64, usize)> = candidates[..k].to_vec();
        nearest.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        edges.extend(nearest.into_iter().map(|(_, j)| j));
    }
    Ok(edges)
}
