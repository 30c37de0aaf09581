//! Per-step query batches: a surface subsample with normals plus
//! off-surface queries, half uniform over the query box and half
//! surface points under Gaussian perturbation.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::CompleteFrame;
use crate::error::{DataError, Error};
use crate::sdfnet::QUERY_DOMAIN;
use crate::vec3::Point3;

/// Standard deviation of the surface perturbation, in normalized units.
pub const QUERY_SIGMA: f64 = 0.05;

/// One step's supervision points.
#[derive(Clone, Debug)]
pub struct QueryBatch {
    pub surface_points: Vec<Point3>,
    pub surface_normals: Vec<Point3>,
    /// Off-surface queries, all inside the query box.
    pub queries: Vec<Point3>,
}

/// Uniform draws over the query cube, coordinate order x, y, z.
pub fn uniform_queries(rng: &mut impl Rng, n: usize) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            [
                rng.gen_range(-QUERY_DOMAIN..QUERY_DOMAIN),
                rng.gen_range(-QUERY_DOMAIN..QUERY_DOMAIN),
                rng.gen_range(-QUERY_DOMAIN..QUERY_DOMAIN),
            ]
        })
        .collect()
}

/// Random surface points under isotropic Gaussian noise, clamped into
/// the query cube.
pub fn perturbed_queries(
    frame: &CompleteFrame,
    rng: &mut impl Rng,
    n: usize,
    sigma: f64,
) -> Vec<Point3> {
    let normal = Normal::new(0.0, sigma).expect("sigma must be positive");
    (0..n)
        .map(|_| {
            let p = frame.points[rng.gen_range(0..frame.points.len())];
            let mut q = [0.0; 3];
            for d in 0..3 {
                let v: f64 = p[d] + normal.sample(rng);
                q[d] = v.clamp(-QUERY_DOMAIN, QUERY_DOMAIN);
            }
            q
        })
        .collect()
}

/// Subsample `n` surface points with their normals: without replacement
/// when the frame is large enough, keep-all plus replacement fill when
/// it is not.
pub fn subsample_surface(
    frame: &CompleteFrame,
    rng: &mut impl Rng,
    n: usize,
) -> (Vec<Point3>, Vec<Point3>) {
    let total = frame.points.len();
    let indices: Vec<usize> = if total >= n {
        let mut idx: Vec<usize> = (0..total).collect();
        for i in 0..n {
            let j = rng.gen_range(i..total);
            idx.swap(i, j);
        }
        idx[..n].to_vec()
    } else {
        let mut idx: Vec<usize> = (0..total).collect();
        idx.extend((0..n - total).map(|_| rng.gen_range(0..total)));
        idx
    };
    (
        indices.iter().map(|&i| frame.points[i]).collect(),
        indices.iter().map(|&i| frame.normals[i]).collect(),
    )
}

/// Build one batch. Draw order is fixed: surface subsample, then uniform
/// queries (floor(half)), then perturbed queries (the remainder), so a
/// seed pins the whole batch.
pub fn sample_queries(
    frame: &CompleteFrame,
    surface_count: usize,
    query_count: usize,
    rng: &mut impl Rng,
) -> Result<QueryBatch, Error> {
    if frame.points.is_empty() {
        return Err(DataError::EmptyInput {
            op: "sample_queries",
        }
        .into());
    }
    if surface_count == 0 || query_count == 0 {
        return Err(Error::Invalid(
            "query batch counts must be positive".into(),
        ));
    }
    let (surface_points, surface_normals) = subsample_surface(frame, rng, surface_count);
    let uniform = query_count / 2;
    let mut queries = uniform_queries(rng, uniform);
    queries.extend(perturbed_queries(frame, rng, query_count - uniform, QUERY_SIGMA));
    Ok(QueryBatch {
        surface_points,
        surface_normals,
        queries,
    })
}
