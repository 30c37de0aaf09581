//! Rest torus sampling and the analytic signed distance oracle.
//!
//! The rest torus has centerline radius 1.0 and tube radius 1/3 (the 3:1
//! proportion of a ring with 10 cm inner diameter and 5 cm cross-section),
//! centerline in the xy-plane.

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::seed::rng_for;
use crate::vec3::Point3;

use super::deform::{warp_det, warp_normal, warp_point, DeformationParams};

pub const MAJOR_RADIUS: f64 = 1.0;
pub const TUBE_RADIUS: f64 = 1.0 / 3.0;

/// Minimum points per frame; fewer starves the encoder's kNN graph.
pub const MIN_FRAME_POINTS: usize = 64;

/// A complete (unoccluded) surface sample of the object at one time index.
/// Coordinates are object units until [`super::sequence::generate_sequence`]
/// applies the shared sequence normalization.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompleteFrame {
    pub points: Vec<Point3>,
    /// Unit outward normals, row-aligned with `points`.
    pub normals: Vec<Point3>,
    /// Time index within the sequence.
    pub t: usize,
    pub params: DeformationParams,
}

/// Point on the rest torus at parameters (u, v): u runs along the
/// centerline, v around the tube.
pub fn rest_point(u: f64, v: f64) -> Point3 {
    let ring = MAJOR_RADIUS + TUBE_RADIUS * v.cos();
    [ring * u.cos(), ring * u.sin(), TUBE_RADIUS * v.sin()]
}

/// Unit outward normal of the rest torus at (u, v).
pub fn rest_normal(u: f64, v: f64) -> Point3 {
    [v.cos() * u.cos(), v.cos() * u.sin(), v.sin()]
}

/// Exact signed distance to the torus with centerline radius `major` and
/// tube radius `tube`: negative inside the tube.
pub fn analytic_torus_sdf(p: Point3, major: f64, tube: f64) -> f64 {
    let rho = p[0].hypot(p[1]);
    (rho - major).hypot(p[2]) - tube
}

/// Analytic gradient of [`analytic_torus_sdf`]. Unit norm away from the
/// medial axis (the z-axis and the centerline circle); returns zero on it.
pub fn analytic_torus_sdf_gradient(p: Point3, major: f64, tube: f64) -> Point3 {
    let _ = tube;
    let rho = p[0].hypot(p[1]);
    if rho == 0.0 {
        return [0.0, 0.0, if p[2] == 0.0 { 0.0 } else { p[2].signum() }];
    }
    let q = [rho - major, p[2]];
    let qn = q[0].hypot(q[1]);
    if qn == 0.0 {
        return [0.0, 0.0, 0.0];
    }
    [
        q[0] / qn * p[0] / rho,
        q[0] / qn * p[1] / rho,
        q[1] / qn,
    ]
}

/// Sample the warped torus surface: uniform (u, v) parameter draws on the
/// rest torus, warped points, cofactor-transformed normals.
///
/// Sampling is uniform in parameter space, not area; normals stay exact and
/// downstream Chamfer evaluation uses dense clouds where the density bias
/// is negligible.
pub fn sample_torus_frame(
    params: &DeformationParams,
    t: usize,
    n_points: usize,
    seed: u64,
) -> Result<CompleteFrame, DataError> {
    if n_points < MIN_FRAME_POINTS {
        return Err(DataError::TooFewPoints {
            op: "sample_torus_frame",
            got: n_points,
            min: MIN_FRAME_POINTS,
        });
    }
    let mut rng = rng_for(seed, "torus_frame", t as u64);
    let mut points = Vec::with_capacity(n_points);
    let mut normals = Vec::with_capacity(n_points);
    for index in 0..n_points {
        let u = rng.gen_range(0.0..std::f64::consts::TAU);
        let v = rng.gen_range(0.0..std::f64::consts::TAU);
        let rest = rest_point(u, v);
        let det = warp_det(params, rest);
        if det <= 0.0 {
            return Err(DataError::FoldedWarp { det, index });
        }
        points.push(warp_point(params, rest));
        normals.push(warp_normal(params, rest, rest_normal(u, v)));
    }
    Ok(CompleteFrame {
        points,
        normals,
        t,
        params: *params,
    })
}

/// Uniform unit vector from a seeded stream; used for view directions.
pub fn random_unit_vector(rng: &mut impl Rng) -> Point3 {
    let v: [f64; 3] = rand_distr::UnitSphere.sample(rng);
    v
}

/// Seeded helper for tests and the augmentation pipeline.
pub fn unit_vector_for(seed: u64, tag: &str, index: u64) -> Point3 {
    let mut rng = rng_for(seed, tag, index);
    random_unit_vector(&mut rng)
}
