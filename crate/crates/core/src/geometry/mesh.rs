//! Triangle meshes and the topology quantities read off them: Euler
//! characteristic, genus, and manifoldness flags that say whether the
//! genus formula's preconditions actually hold.

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::Error;
use crate::vec3::Point3;

#[derive(Clone, Debug, Default)]
pub struct Mesh {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[usize; 3]>,
}

/// Manifoldness summary; the genus formula is only meaningful when
/// `closed && orientable` on a connected mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ManifoldReport {
    pub empty: bool,
    /// Every edge on exactly two faces.
    pub closed: bool,
    /// Two-face edges are traversed in opposite directions.
    pub orientable: bool,
    /// Edges on exactly one face.
    pub boundary_edges: usize,
    /// Edges on three or more faces.
    pub nonmanifold_edges: usize,
}

impl Mesh {
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Mesh, Error> {
        let mesh = Mesh { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<(), Error> {
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= self.vertices.len()) {
                return Err(Error::Invalid(format!(
                    "face {fi} references vertex out of range: {f:?} with {} vertices",
                    self.vertices.len()
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Invalid(format!(
                    "face {fi} repeats a vertex index: {f:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Unique undirected edges by sorted-pair deduplication.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut edges: Vec<[usize; 2]> = self
            .faces
            .iter()
            .flat_map(|f| {
                [[f[0], f[1]], [f[1], f[2]], [f[2], f[0]]]
                    .map(|[a, b]| [a.min(b), a.max(b)])
            })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }
}

/// `V - E + F` with `E` the deduplicated undirected edge set.
pub fn euler_characteristic(mesh: &Mesh) -> i64 {
    mesh.vertices.len() as i64 - mesh.edges().len() as i64 + mesh.faces.len() as i64
}

/// The literal closed-orientable-surface formula `(2 - chi) / 2`.
/// Applied unconditionally; pair with [`manifold_check`] to see whether
/// the answer means anything. Halves and negatives pass through as-is.
pub fn genus(mesh: &Mesh) -> f64 {
    (2.0 - euler_characteristic(mesh) as f64) / 2.0
}

/// Count face incidence per undirected edge and directed-traversal
/// balance; a closed orientable surface has every edge on exactly two
/// faces, once per direction.
pub fn manifold_check(mesh: &Mesh) -> ManifoldReport {
    // per undirected edge: (total faces, forward traversals)
    let mut incidence: HashMap<[usize; 2], (usize, usize)> = HashMap::new();
    for f in &mesh.faces {
        for [a, b] in [[f[0], f[1]], [f[1], f[2]], [f[2], f[0]]] {
            let key = [a.min(b), a.max(b)];
            let entry = incidence.entry(key).or_insert((0, 0));
            entry.0 += 1;
            if a < b {
                entry.1 += 1;
            }
        }
    }
    let empty = mesh.faces.is_empty();
    let boundary_edges = incidence.values().filter(|(n, _)| *n == 1).count();
    let nonmanifold_edges = incidence.values().filter(|(n, _)| *n > 2).count();
    let closed = boundary_edges == 0 && nonmanifold_edges == 0;
    // orientable iff every two-face edge is traversed once each way
    let orientable = incidence
        .values()
        .filter(|(n, _)| *n == 2)
        .all(|(_, fwd)| *fwd == 1);
    ManifoldReport {
        empty,
        closed,
        orientable,
        boundary_edges,
        nonmanifold_edges,
    }
}

/// OBJ text with `v`/`f` records, faces 1-indexed. With `colors`
/// (linear RGB in [0,1], one per vertex) each `v` record carries the
/// common 6-float vertex-color extension.
pub fn obj_string(mesh: &Mesh, colors: Option<&[[f64; 3]]>) -> Result<String, Error> {
    if let Some(c) = colors {
        if c.len() != mesh.vertices.len() {
            return Err(Error::Invalid(format!(
                "{} colors for {} vertices",
                c.len(),
                mesh.vertices.len()
            )));
        }
    }
    let mut out = String::new();
    for (i, v) in mesh.vertices.iter().enumerate() {
        match colors {
            Some(c) => {
                let rgb = c[i];
                out.push_str(&format!(
                    "v {:.9} {:.9} {:.9} {:.4} {:.4} {:.4}\n",
                    v[0], v[1], v[2], rgb[0], rgb[1], rgb[2]
                ));
            }
            None => out.push_str(&format!("v {:.9} {:.9} {:.9}\n", v[0], v[1], v[2])),
        }
    }
    for f in &mesh.faces {
        out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    Ok(out)
}

pub fn write_obj(
    mesh: &Mesh,
    path: &Path,
    colors: Option<&[[f64; 3]]>,
) -> Result<(), Error> {
    let text = obj_string(mesh, colors)?;
    let mut file = fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Cube surface with each quad split into two triangles: 8 vertices,
    /// 12 faces, 18 edges (12 quad edges + 6 diagonals).
    pub(crate) fn triangulated_cube() -> Mesh {
        let vertices = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 1.0],
            [1.0, 1.0, 1.0],
            [0.0, 1.0, 1.0],
        ];
        // outward winding, each quad cut along one diagonal
        let faces = vec![
            [0, 2, 1],
            [0, 3, 2], // bottom (z = 0, normal -z)
            [4, 5, 6],
            [4, 6, 7], // top
            [0, 1, 5],
            [0, 5, 4], // front (y = 0)
            [2, 3, 7],
            [2, 7, 6], // back
            [1, 2, 6],
            [1, 6, 5], // right
            [3, 0, 4],
            [3, 4, 7], // left
        ];
        Mesh::new(vertices, faces).unwrap()
    }

    /// Two triangulated cubes with disjoint vertex ranges.
    fn two_cubes() -> Mesh {
        let a = triangulated_cube();
        let mut vertices = a.vertices.clone();
        let mut faces = a.faces.clone();
        let off = vertices.len();
        vertices.extend(a.vertices.iter().map(|v| [v[0] + 5.0, v[1], v[2]]));
        faces.extend(a.faces.iter().map(|f| f.map(|i| i + off)));
        Mesh::new(vertices, faces).unwrap()
    }

    /// 3x3 torus triangulation: 9 vertices, 27 edges, 18 faces.
    fn torus_grid_mesh() -> Mesh {
        let n = 3;
        let vertices: Vec<Point3> = (0..n * n)
            .map(|i| {
                let (u, v) = ((i % n) as f64, (i / n) as f64);
                let (tu, tv) = (
                    u / n as f64 * std::f64::consts::TAU,
                    v / n as f64 * std::f64::consts::TAU,
                );
                [
                    (1.0 + 0.3 * tv.cos()) * tu.cos(),
                    (1.0 + 0.3 * tv.cos()) * tu.sin(),
                    0.3 * tv.sin(),
                ]
            })
            .collect();
        let mut faces = Vec::new();
        for v in 0..n {
            for u in 0..n {
                let idx = |uu: usize, vv: usize| (vv % n) * n + (uu % n);
                let (a, b, c, d) = (
                    idx(u, v),
                    idx(u + 1, v),
                    idx(u + 1, v + 1),
                    idx(u, v + 1),
                );
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            }
        }
        Mesh::new(vertices, faces).unwrap()
    }

    #[test]
    fn triangulated_cube_counts_match_the_hand_tally() {
        let cube = triangulated_cube();
        assert_eq!(cube.vertices.len(), 8);
        assert_eq!(cube.faces.len(), 12);
        assert_eq!(cube.edges().len(), 18);
        assert_eq!(euler_characteristic(&cube), 2);
        assert_eq!(genus(&cube), 0.0);
    }

    #[test]
    fn torus_triangulation_has_zero_euler_characteristic() {
        let t = torus_grid_mesh();
        assert_eq!(t.vertices.len(), 9);
        assert_eq!(t.faces.len(), 18);
        assert_eq!(t.edges().len(), 27);
        assert_eq!(euler_characteristic(&t), 0);
        assert_eq!(genus(&t), 1.0);
        let rep = manifold_check(&t);
        assert!(rep.closed && rep.orientable && !rep.empty);
    }

    #[test]
    fn euler_characteristic_adds_over_disjoint_components() {
        let two = two_cubes();
        assert_eq!(euler_characteristic(&two), 4);
        assert_eq!(genus(&two), -1.0);
        let rep = manifold_check(&two);
        // closed and orientable, yet the literal formula goes negative
        assert!(rep.closed && rep.orientable);
    }

    #[test]
    fn single_triangle_has_three_boundary_edges() {
        let m = Mesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let rep = manifold_check(&m);
        assert!(!rep.closed);
        assert_eq!(rep.boundary_edges, 3);
        assert_eq!(rep.nonmanifold_edges, 0);
        assert_eq!(euler_characteristic(&m), 3 - 3 + 1);
    }

    #[test]
    fn empty_mesh_is_vacuously_closed_and_flagged() {
        let rep = manifold_check(&Mesh::default());
        assert!(rep.empty && rep.closed && rep.orientable);
        assert_eq!(euler_characteristic(&Mesh::default()), 0);
    }

    #[test]
    fn flipped_face_breaks_orientability() {
        let mut cube = triangulated_cube();
        cube.faces[0].swap(1, 2);
        let rep = manifold_check(&cube);
        assert!(rep.closed);
        assert!(!rep.orientable);
    }

    #[test]
    fn three_faces_on_one_edge_counts_as_nonmanifold() {
        let m = Mesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [0.0, -1.0, 0.0],
            ],
            vec![[0, 1, 2], [0, 1, 3], [0, 1, 4]],
        )
        .unwrap();
        let rep = manifold_check(&m);
        assert_eq!(rep.nonmanifold_edges, 1);
        assert!(!rep.closed);
    }

    #[test]
    fn invalid_faces_are_rejected() {
        assert!(Mesh::new(vec![[0.0; 3]; 2], vec![[0, 1, 2]]).is_err());
        assert!(Mesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 1]]).is_err());
    }

    #[test]
    fn obj_export_is_one_indexed_with_optional_colors() {
        let m = Mesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let plain = obj_string(&m, None).unwrap();
        assert!(plain.contains("f 1 2 3"));
        assert_eq!(plain.lines().filter(|l| l.starts_with("v ")).count(), 3);

        let colors = vec![[1.0, 0.0, 0.0]; 3];
        let tinted = obj_string(&m, Some(&colors)).unwrap();
        assert!(tinted.contains("1.0000 0.0000 0.0000"));
        assert!(obj_string(&m, Some(&colors[..2])).is_err());
    }
}
