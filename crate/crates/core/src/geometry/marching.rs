//! Isosurface extraction over a scalar grid using the fixed 256-case
//! table. Vertices are deduplicated by the lattice edge they sit on, so
//! neighboring cubes share vertices and the mesh supports exact Euler
//! characteristic counting.

use std::collections::HashMap;

use super::grid::ScalarGrid;
use super::mesh::Mesh;
use super::tables::{EDGE_CORNERS, EDGE_TABLE, TRIANGLE_TABLE};
use crate::vec3::Point3;

/// Lattice offsets of the 8 cube corners, matching the table's corner
/// numbering.
const CORNER_OFFSETS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// A lattice edge: its lower endpoint plus the axis it runs along.
type GridEdge = ([usize; 3], u8);

/// Lattice identity of cube edge `e` for the cube at `base`.
fn grid_edge(base: [usize; 3], e: usize) -> GridEdge {
    let [a, b] = EDGE_CORNERS[e];
    let (oa, ob) = (CORNER_OFFSETS[a], CORNER_OFFSETS[b]);
    let lower = [
        base[0] + oa[0].min(ob[0]),
        base[1] + oa[1].min(ob[1]),
        base[2] + oa[2].min(ob[2]),
    ];
    let axis = (0..3).find(|&ax| oa[ax] != ob[ax]).unwrap() as u8;
    (lower, axis)
}

/// Extract the `iso` level set. An empty level set gives an empty mesh.
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> Mesh {
    let n = grid.resolution;
    let mut vertices: Vec<Point3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut edge_vertex: HashMap<GridEdge, usize> = HashMap::new();

    for k in 0..n - 1 {
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let base = [i, j, k];
                let corner = |c: usize| {
                    let o = CORNER_OFFSETS[c];
                    (base[0] + o[0], base[1] + o[1], base[2] + o[2])
                };
                let mut case = 0usize;
                for (c, _) in CORNER_OFFSETS.iter().enumerate() {
                    let (ci, cj, ck) = corner(c);
                    if grid.value(ci, cj, ck) < iso {
                        case |= 1 << c;
                    }
                }
                let crossings = EDGE_TABLE[case];
                if crossings == 0 {
                    continue;
                }

                // vertex index per cube edge, creating lattice-edge
                // vertices on first encounter
                let mut cube_vertex = [usize::MAX; 12];
                for (e, slot) in cube_vertex.iter_mut().enumerate() {
                    if crossings & (1 << e) == 0 {
                        continue;
                    }
                    let key = grid_edge(base, e);
                    let next_index = vertices.len();
                    let index = *edge_vertex.entry(key).or_insert_with(|| {
                        let [a, b] = EDGE_CORNERS[e];
                        let (ai, aj, ak) = corner(a);
                        let (bi, bj, bk) = corner(b);
                        let (va, vb) = (grid.value(ai, aj, ak), grid.value(bi, bj, bk));
                        let (pa, pb) = (grid.position(ai, aj, ak), grid.position(bi, bj, bk));
                        // crossing edges have va != vb by the strict
                        // below-iso corner test
                        let t = (iso - va) / (vb - va);
                        vertices.push([
                            pa[0] + t * (pb[0] - pa[0]),
                            pa[1] + t * (pb[1] - pa[1]),
                            pa[2] + t * (pb[2] - pa[2]),
                        ]);
                        next_index
                    });
                    *slot = index;
                }

                let tris = &TRIANGLE_TABLE[case];
                let mut t = 0;
                while tris[t] >= 0 {
                    faces.push([
                        cube_vertex[tris[t] as usize],
                        cube_vertex[tris[t + 1] as usize],
                        cube_vertex[tris[t + 2] as usize],
                    ]);
                    t += 3;
                }
            }
        }
    }
    Mesh { vertices, faces }
}

/// Count of lattice edges whose endpoint values straddle `iso`; equals
/// the extracted vertex count by construction.
pub fn sign_changing_edges(grid: &ScalarGrid, iso: f64) -> usize {
    let n = grid.resolution;
    let below = |i: usize, j: usize, k: usize| grid.value(i, j, k) < iso;
    let mut count = 0;
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                if i + 1 < n && below(i, j, k) != below(i + 1, j, k) {
                    count += 1;
                }
                if j + 1 < n && below(i, j, k) != below(i, j + 1, k) {
                    count += 1;
                }
                if k + 1 < n && below(i, j, k) != below(i, j, k + 1) {
                    count += 1;
                }
            }
        }
    }
    count
}
