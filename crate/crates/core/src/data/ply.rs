//! ASCII PLY point-cloud files and the sequence directory layout.
//!
//! Floats are written with 17 significant digits, which round-trips f64
//! exactly. A sequence directory holds one `frame_NNNN.ply` per frame plus
//! `sequence.json` with the seed, normalization transform, and per-frame
//! deformation parameters.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::vec3::Point3;

use super::deform::DeformationParams;
use super::sequence::Sequence;
use super::torus::CompleteFrame;

pub const MANIFEST_NAME: &str = "sequence.json";
pub const MANIFEST_VERSION: u32 = 1;

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write points (and normals when present) as ASCII PLY.
pub fn save_frame_ply(
    path: &Path,
    points: &[Point3],
    normals: Option<&[Point3]>,
) -> Result<(), DataError> {
    if let Some(n) = normals {
        assert_eq!(n.len(), points.len(), "normals misaligned with points");
    }
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", points.len())?;
    for prop in ["x", "y", "z"] {
        writeln!(w, "property double {prop}")?;
    }
    if normals.is_some() {
        for prop in ["nx", "ny", "nz"] {
            writeln!(w, "property double {prop}")?;
        }
    }
    writeln!(w, "end_header")?;
    for (i, p) in points.iter().enumerate() {
        write!(w, "{} {} {}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2]))?;
        if let Some(n) = normals {
            let n = n[i];
            write!(w, " {} {} {}", fmt_f64(n[0]), fmt_f64(n[1]), fmt_f64(n[2]))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Read an ASCII PLY written by [`save_frame_ply`]. Returns points and,
/// when the header declares nx/ny/nz, normals.
pub fn load_frame_ply(path: &Path) -> Result<(Vec<Point3>, Option<Vec<Point3>>), DataError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let mut expect = |want: &str| -> Result<(), DataError> {
        match lines.next() {
            Some((i, got)) if got.trim() != want => Err(DataError::PlyParse {
                line: i + 1,
                detail: format!("expected {want:?}, got {got:?}"),
            }),
            None => Err(DataError::PlyParse {
                line: 0,
                detail: format!("file ended before {want:?}"),
            }),
            _ => Ok(()),
        }
    };
    expect("ply")?;
    expect("format ascii 1.0")?;

    let (count_line_no, count_line) = lines.next().ok_or(DataError::PlyParse {
        line: 2,
        detail: "missing element declaration".into(),
    })?;
    let n: usize = count_line
        .trim()
        .strip_prefix("element vertex ")
        .and_then(|s| s.parse().ok())
        .ok_or(DataError::PlyParse {
            line: count_line_no + 1,
            detail: format!("expected element vertex count, got {count_line:?}"),
        })?;

    let mut properties = Vec::new();
    let mut header_end = 0usize;
    for (i, line) in lines.by_ref() {
        let line = line.trim();
        if line == "end_header" {
            header_end = i + 1;
            break;
        }
        match line.strip_prefix("property double ") {
            Some(name) => properties.push(name.to_string()),
            None => {
                return Err(DataError::PlyParse {
                    line: i + 1,
                    detail: format!("unsupported header line {line:?}"),
                })
            }
        }
    }
    if header_end == 0 {
        return Err(DataError::PlyParse {
            line: 0,
            detail: "missing end_header".into(),
        });
    }
    let has_normals = match properties.as_slice() {
        [x, y, z] if [x, y, z] == [&"x", &"y", &"z"] => false,
        [x, y, z, nx, ny, nz] if [x, y, z, nx, ny, nz] == [&"x", &"y", &"z", &"nx", &"ny", &"nz"] => {
            true
        }
        other => {
            return Err(DataError::PlyParse {
                line: header_end,
                detail: format!("unsupported property layout {other:?}"),
            })
        }
    };

    let mut points = Vec::with_capacity(n);
    let mut normals = if has_normals {
        Some(Vec::with_capacity(n))
    } else {
        None
    };
    for v in 0..n {
        let (i, line) = lines.next().ok_or(DataError::PlyParse {
            line: header_end + v + 1,
            detail: format!("missing vertex {v} of {n}"),
        })?;
        let mut fields = line.split_whitespace();
        let mut read = |name: &str| -> Result<f64, DataError> {
            fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or(DataError::PlyParse {
                    line: i + 1,
                    detail: format!("bad {name} in vertex {v}"),
                })
        };
        points.push([read("x")?, read("y")?, read("z")?]);
        if let Some(normals) = normals.as_mut() {
            normals.push([read("nx")?, read("ny")?, read("nz")?]);
        }
        if fields.next().is_some() {
            return Err(DataError::PlyParse {
                line: i + 1,
                detail: format!("trailing fields in vertex {v}"),
            });
        }
    }
    Ok((points, normals))
}

/// Per-frame entry in the sequence manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub file: String,
    pub t: usize,
    pub params: DeformationParams,
}

/// `sequence.json`: everything needed to reload or regenerate a sequence.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub version: u32,
    pub seed: u64,
    pub n_frames: usize,
    pub center: Point3,
    pub scale: f64,
    pub frames: Vec<ManifestFrame>,
}

/// Write a sequence directory: frame PLYs plus the manifest.
pub fn save_sequence(dir: &Path, seq: &Sequence) -> Result<(), DataError> {
    fs::create_dir_all(dir)?;
    let mut frames = Vec::with_capacity(seq.frames.len());
    for frame in &seq.frames {
        let file = format!("frame_{:04}.ply", frame.t);
        save_frame_ply(&dir.join(&file), &frame.points, Some(&frame.normals))?;
        frames.push(ManifestFrame {
            file,
            t: frame.t,
            params: frame.params,
        });
    }
    let manifest = SequenceManifest {
        version: MANIFEST_VERSION,
        seed: seq.seed,
        n_frames: seq.frames.len(),
        center: seq.center,
        scale: seq.scale,
        frames,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join(MANIFEST_NAME), json)?;
    Ok(())
}

/// Load a sequence directory written by [`save_sequence`].
pub fn load_sequence(dir: &Path) -> Result<Sequence, DataError> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let manifest: SequenceManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(DataError::Manifest(format!(
            "unsupported manifest version {}",
            manifest.version
        )));
    }
    if manifest.frames.len() != manifest.n_frames {
        return Err(DataError::Manifest(format!(
            "manifest lists {} frames but declares n_frames = {}",
            manifest.frames.len(),
            manifest.n_frames
        )));
    }
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for entry in &manifest.frames {
        let (points, normals) = load_frame_ply(&dir.join(&entry.file))?;
        let normals = normals.ok_or_else(|| {
            DataError::Manifest(format!("frame {} lacks normals", entry.file))
        })?;
        frames.push(CompleteFrame {
            points,
            normals,
            t: entry.t,
            params: entry.params,
        });
    }
    Ok(Sequence {
        frames,
        center: manifest.center,
        scale: manifest.scale,
        seed: manifest.seed,
    })
}

/// Paths of the files a saved sequence comprises, manifest first.
pub fn sequence_files(dir: &Path, seq: &Sequence) -> Vec<PathBuf> {
    let mut files = vec![dir.join(MANIFEST_NAME)];
    files.extend(
        seq.frames
            .iter()
            .map(|f| dir.join(format!("frame_{:04}.ply", f.t))),
    );
    files
}

#[cfg(test)]
mod tests {
    use tempfile::tempdir;

    use crate::data::sequence::{generate_sequence, DataConfig};

    use super::*;

    fn tiny_sequence(seed: u64) -> Sequence {
        generate_sequence(
            &DataConfig {
                n_frames: 4,
                points_per_frame: 128,
                ..DataConfig::default()
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn ply_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("frame.ply");
        let seq = tiny_sequence(1);
        let frame = &seq.frames[0];
        save_frame_ply(&path, &frame.points, Some(&frame.normals)).unwrap();
        let (points, normals) = load_frame_ply(&path).unwrap();
        assert_eq!(points, frame.points);
        assert_eq!(normals.unwrap(), frame.normals);
    }

    #[test]
    fn ply_without_normals_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bare.ply");
        let points = vec![[0.1, -0.2, 0.3], [1.0 / 3.0, 2.0f64.sqrt(), -1e-17]];
        save_frame_ply(&path, &points, None).unwrap();
        let (loaded, normals) = load_frame_ply(&path).unwrap();
        assert_eq!(loaded, points);
        assert!(normals.is_none());
    }

    #[test]
    fn truncated_file_names_missing_vertex() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trunc.ply");
        let seq = tiny_sequence(2);
        let frame = &seq.frames[0];
        save_frame_ply(&path, &frame.points, None).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let cut: Vec<&str> = text.lines().take(text.lines().count() - 2).collect();
        fs::write(&path, cut.join("\n")).unwrap();
        let err = load_frame_ply(&path).unwrap_err();
        match err {
            DataError::PlyParse { detail, .. } => {
                assert!(detail.contains("missing vertex"), "{detail}")
            }
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn malformed_header_reports_line_number() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.ply");
        fs::write(&path, "ply\nformat ascii 1.0\nelement vertex nonsense\n").unwrap();
        let err = load_frame_ply(&path).unwrap_err();
        assert!(matches!(err, DataError::PlyParse { line: 3, .. }));
    }

    #[test]
    fn sequence_round_trip_preserves_everything() {
        let dir = tempdir().unwrap();
        let seq = tiny_sequence(33);
        save_sequence(dir.path(), &seq).unwrap();
        let loaded = load_sequence(dir.path()).unwrap();
        assert_eq!(loaded.seed, seq.seed);
        assert_eq!(loaded.center, seq.center);
        assert_eq!(loaded.scale, seq.scale);
        assert_eq!(loaded.frames.len(), seq.frames.len());
        for (a, b) in loaded.frames.iter().zip(&seq.frames) {
            assert_eq!(a.points, b.points);
            assert_eq!(a.normals, b.normals);
            assert_eq!(a.t, b.t);
            assert_eq!(a.params, b.params);
        }
    }

    #[test]
    fn save_is_byte_deterministic() {
        let da = tempdir().unwrap();
        let db = tempdir().unwrap();
        let seq = tiny_sequence(7);
        save_sequence(da.path(), &seq).unwrap();
        save_sequence(db.path(), &seq).unwrap();
        for file in sequence_files(da.path(), &seq) {
            let name = file.file_name().unwrap();
            let a = fs::read(da.path().join(name)).unwrap();
            let b = fs::read(db.path().join(name)).unwrap();
            assert_eq!(a, b, "{name:?} differs between saves");
        }
    }
}
