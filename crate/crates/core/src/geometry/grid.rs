//! Regular scalar grids that marching cubes consumes.

use crate::error::Error;
use crate::vec3::Point3;

/// Default extraction resolution per axis.
pub const GRID_RESOLUTION: usize = 64;
/// Default half-extent; the grid spans this cube symmetrically.
pub const GRID_HALF_EXTENT: f64 = 1.1;
/// Default iso level.
pub const ISO_LEVEL: f64 = 0.0;

/// Scalar samples on a regular lattice, x-fastest order:
/// `values[i + resolution * (j + resolution * k)]`.
#[derive(Clone, Debug)]
pub struct ScalarGrid {
    pub resolution: usize,
    pub min: Point3,
    pub max: Point3,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(
        resolution: usize,
        min: Point3,
        max: Point3,
        values: Vec<f64>,
    ) -> Result<ScalarGrid, Error> {
        if resolution < 2 {
            return Err(Error::Invalid(format!(
                "grid resolution {resolution} must be at least 2"
            )));
        }
        for axis in 0..3 {
            if !(min[axis] < max[axis]) {
                return Err(Error::Invalid(format!(
                    "grid bounds must satisfy min < max per axis, got {:?} vs {:?}",
                    min, max
                )));
            }
        }
        if values.len() != resolution * resolution * resolution {
            return Err(Error::Invalid(format!(
                "grid of resolution {resolution} needs {} values, got {}",
                resolution * resolution * resolution,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite grid value {bad}")));
        }
        Ok(ScalarGrid {
            resolution,
            min,
            max,
            values,
        })
    }

    /// Evaluate `f` at every lattice point.
    pub fn sample(
        resolution: usize,
        min: Point3,
        max: Point3,
        f: impl Fn(Point3) -> f64,
    ) -> Result<ScalarGrid, Error> {
        // validate the lattice before position() divides by resolution - 1
        let mut grid = ScalarGrid::new(
            resolution,
            min,
            max,
            vec![0.0; resolution.pow(3)],
        )?;
        let mut values = Vec::with_capacity(resolution.pow(3));
        for k in 0..resolution {
            for j in 0..resolution {
                for i in 0..resolution {
                    values.push(f(grid.position(i, j, k)));
                }
            }
        }
        grid.values = values;
        if let Some(bad) = grid.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite grid value {bad}")));
        }
        Ok(grid)
    }

    /// Default symmetric bounds.
    pub fn default_bounds() -> (Point3, Point3) {
        (
            [-GRID_HALF_EXTENT; 3],
            [GRID_HALF_EXTENT; 3],
        )
    }

    /// World position of lattice point `(i, j, k)`; corner indices map
    /// to the exact bounds.
    pub fn position(&self, i: usize, j: usize, k: usize) -> Point3 {
        let n = (self.resolution - 1) as f64;
        let lerp = |axis: usize, idx: usize| {
            self.min[axis] + (self.max[axis] - self.min[axis]) * (idx as f64 / n)
        };
        [lerp(0, i), lerp(1, j), lerp(2, k)]
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[i + self.resolution * (j + self.resolution * k)]
    }

    /// Edge length of one cell along `axis`.
    pub fn voxel_size(&self, axis: usize) -> f64 {
        (self.max[axis] - self.min[axis]) / (self.resolution - 1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_hit_the_bounds_exactly() {
        let (min, max) = ScalarGrid::default_bounds();
        let g = ScalarGrid::sample(5, min, max, |p| p[0]).unwrap();
        assert_eq!(g.position(0, 0, 0), [-1.1, -1.1, -1.1]);
        assert_eq!(g.position(4, 4, 4), [1.1, 1.1, 1.1]);
        let mid = g.position(2, 2, 2);
        assert!(mid.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn layout_is_x_fastest() {
        let g = ScalarGrid::sample(3, [0.0; 3], [2.0; 3], |p| {
            p[0] + 10.0 * p[1] + 100.0 * p[2]
        })
        .unwrap();
        // values[1] advances x only
        assert_eq!(g.values[1], 1.0);
        assert_eq!(g.values[3], 10.0);
        assert_eq!(g.values[9], 100.0);
        assert_eq!(g.value(1, 2, 1), 1.0 + 20.0 + 100.0);
    }

    #[test]
    fn voxel_size_divides_the_extent() {
        let (min, max) = ScalarGrid::default_bounds();
        let g = ScalarGrid::sample(GRID_RESOLUTION, min, max, |_| 1.0).unwrap();
        let v = g.voxel_size(0);
        assert!((v - 2.2 / 63.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_grids_are_rejected() {
        assert!(ScalarGrid::new(1, [0.0; 3], [1.0; 3], vec![0.0]).is_err());
        assert!(ScalarGrid::new(2, [1.0; 3], [0.0; 3], vec![0.0; 8]).is_err());
        assert!(ScalarGrid::new(2, [0.0; 3], [1.0; 3], vec![0.0; 7]).is_err());
        assert!(ScalarGrid::new(2, [0.0; 3], [1.0; 3], vec![f64::NAN; 8]).is_err());
    }
}
