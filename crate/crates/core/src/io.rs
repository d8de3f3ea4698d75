//! Point cloud file I/O: PLY (ascii / binary little-endian) and XYZ text.
//!
//! Supported PLY layout: a `vertex` element with float32/float64 properties
//! x, y, z and optionally nx, ny, nz. Anything else is rejected with a parse
//! error naming the offending line.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Ply,
    Xyz,
}

impl CloudFormat {
    /// Guess from the file extension; defaults to XYZ.
    pub fn from_path(path: &Path) -> CloudFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("ply") => CloudFormat::Ply,
            _ => CloudFormat::Xyz,
        }
    }
}

pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let bytes = fs::read(path)?;
    let cloud = match format {
        CloudFormat::Xyz => parse_xyz(path, &bytes)?,
        CloudFormat::Ply => parse_ply(path, &bytes)?,
    };
    cloud.validate_finite().map_err(|e| match e {
        Error::InvalidParameter { reason, .. } => Error::parse(path, 0, reason),
        other => other,
    })?;
    Ok(cloud)
}

pub fn save_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    match format {
        CloudFormat::Xyz => save_xyz(cloud, path),
        CloudFormat::Ply => save_ply_binary(cloud, path),
    }
}

fn parse_xyz(path: &Path, bytes: &[u8]) -> Result<PointCloud> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::parse(path, 0, format!("not utf-8: {e}")))?;
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 6 {
            return Err(Error::parse(
                path,
                lineno + 1,
                format!("expected 3 or 6 fields, found {}", fields.len()),
            ));
        }
        let mut vals = [0.0f64; 6];
        for (i, f) in fields.iter().enumerate() {
            vals[i] = f.parse::<f64>().map_err(|e| {
                Error::parse(path, lineno + 1, format!("bad number `{f}`: {e}"))
            })?;
        }
        points.push(Point3::new(vals[0], vals[1], vals[2]));
        if fields.len() == 6 {
            normals.push(Vector3::new(vals[3], vals[4], vals[5]));
        }
    }
    if !normals.is_empty() && normals.len() != points.len() {
        return Err(Error::parse(path, 0, "mixed 3- and 6-field lines"));
    }
    Ok(PointCloud {
        points,
        normals: (!normals.is_empty()).then_some(normals),
    })
}

fn save_xyz(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut out = String::new();
    match &cloud.normals {
        None => {
            for p in &cloud.points {
                writeln!(out, "{} {} {}", p.x, p.y, p.z).unwrap();
            }
        }
        Some(ns) => {
            for (p, n) in cloud.points.iter().zip(ns) {
                writeln!(out, "{} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z).unwrap();
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Scalar {
    F32,
    F64,
}

impl Scalar {
    fn size(self) -> usize {
        match self {
            Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }
}

struct PlyHeader {
    binary: bool,
    vertex_count: usize,
    /// per-property scalar type, in declaration order
    properties: Vec<(String, Scalar)>,
    header_lines: usize,
    body_start: usize,
}

fn parse_ply_header(path: &Path, bytes: &[u8]) -> Result<PlyHeader> {
    // header is ascii lines terminated by `end_header`
    let mut pos = 0usize;
    let mut lineno = 0usize;
    let mut lines: Vec<(usize, String)> = Vec::new();
    loop {
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(path, lineno + 1, "unterminated header"))?;
        let raw = &rest[..nl];
        let line = String::from_utf8_lossy(raw).trim_end_matches('\r').to_string();
        pos += nl + 1;
        lineno += 1;
        let done = line.trim() == "end_header";
        lines.push((lineno, line));
        if done {
            break;
        }
        if lineno > 1000 {
            return Err(Error::parse(path, lineno, "header too long"));
        }
    }

    if lines.first().map(|(_, l)| l.trim()) != Some("ply") {
        return Err(Error::parse(path, 1, "missing `ply` magic"));
    }

    let mut binary = None;
    let mut vertex_count = None;
    let mut properties = Vec::new();
    let mut in_vertex = false;

    for (no, line) in &lines[1..] {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] | ["comment", ..] | ["end_header"] => {}
            ["format", "ascii", "1.0"] => binary = Some(false),
            ["format", "binary_little_endian", "1.0"] => binary = Some(true),
            ["format", other, ..] => {
                return Err(Error::parse(path, *no, format!("unsupported format `{other}`")));
            }
            ["element", "vertex", n] => {
                in_vertex = true;
                vertex_count = Some(n.parse::<usize>().map_err(|e| {
                    Error::parse(path, *no, format!("bad vertex count `{n}`: {e}"))
                })?);
            }
            ["element", name, n] => {
                let count: usize = n.parse().unwrap_or(0);
                if vertex_count.is_none() && count > 0 {
                    return Err(Error::parse(
                        path,
                        *no,
                        format!("unsupported element `{name}` before vertex data"),
                    ));
                }
                in_vertex = false;
            }
            ["property", ty, name] => {
                if in_vertex {
                    let scalar = match *ty {
                        "float" | "float32" => Scalar::F32,
                        "double" | "float64" => Scalar::F64,
                        other => {
                            return Err(Error::parse(
                                path,
                                *no,
                                format!("unsupported property type `{other}`"),
                            ));
                        }
                    };
                    properties.push((name.to_string(), scalar));
                }
            }
            ["property", ..] => {
                if in_vertex {
                    return Err(Error::parse(path, *no, "unsupported list property on vertex"));
                }
            }
            _ => {
                return Err(Error::parse(path, *no, format!("unrecognized header line `{line}`")));
            }
        }
    }

    let binary = binary.ok_or_else(|| Error::parse(path, 1, "missing format line"))?;
    let vertex_count =
        vertex_count.ok_or_else(|| Error::parse(path, 1, "missing `element vertex`"))?;

    let names: Vec<&str> = properties.iter().map(|(n, _)| n.as_str()).collect();
    let has_normals = match names.as_slice() {
        ["x", "y", "z"] => false,
        ["x", "y", "z", "nx", "ny", "nz"] => true,
        _ => {
            return Err(Error::parse(
                path,
                lines.len(),
                format!("unsupported vertex layout {names:?} (want x,y,z[,nx,ny,nz])"),
            ));
        }
    };
    let _ = has_normals;

    Ok(PlyHeader {
        binary,
        vertex_count,
        properties,
        header_lines: lines.len(),
        body_start: pos,
    })
}

fn parse_ply(path: &Path, bytes: &[u8]) -> Result<PointCloud> {
    let header = parse_ply_header(path, bytes)?;
    let has_normals = header.properties.len() == 6;
    let mut points = Vec::with_capacity(header.vertex_count);
    let mut normals = Vec::with_capacity(if has_normals { header.vertex_count } else { 0 });

    if header.binary {
        let row = header.properties.iter().map(|(_, s)| s.size()).sum::<usize>();
        let body = &bytes[header.body_start..];
        let need = row * header.vertex_count;
        if body.len() < need {
            return Err(Error::parse(
                path,
                header.header_lines,
                format!(
                    "truncated body at byte offset {}: need {} bytes, found {}",
                    header.body_start,
                    need,
                    body.len()
                ),
            ));
        }
        let mut off = 0usize;
        for _ in 0..header.vertex_count {
            let mut vals = [0.0f64; 6];
            for (i, (_, scalar)) in header.properties.iter().enumerate() {
                vals[i] = match scalar {
                    Scalar::F32 => {
                        let v = f32::from_le_bytes(body[off..off + 4].try_into().unwrap());
                        off += 4;
                        v as f64
                    }
                    Scalar::F64 => {
                        let v = f64::from_le_bytes(body[off..off + 8].try_into().unwrap());
                        off += 8;
                        v
                    }
                };
            }
            points.push(Point3::new(vals[0], vals[1], vals[2]));
            if has_normals {
                normals.push(Vector3::new(vals[3], vals[4], vals[5]));
            }
        }
    } else {
        let body = std::str::from_utf8(&bytes[header.body_start..])
            .map_err(|e| Error::parse(path, header.header_lines, format!("not utf-8: {e}")))?;
        let mut rows = 0usize;
        for (i, line) in body.lines().enumerate() {
            if rows == header.vertex_count {
                break;
            }
            let lineno = header.header_lines + i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != header.properties.len() {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!(
                        "expected {} fields, found {}",
                        header.properties.len(),
                        fields.len()
                    ),
                ));
            }
            let mut vals = [0.0f64; 6];
            for (i, f) in fields.iter().enumerate() {
                vals[i] = f.parse::<f64>().map_err(|e| {
                    Error::parse(path, lineno, format!("bad number `{f}`: {e}"))
                })?;
            }
            points.push(Point3::new(vals[0], vals[1], vals[2]));
            if has_normals {
                normals.push(Vector3::new(vals[3], vals[4], vals[5]));
            }
            rows += 1;
        }
        if rows < header.vertex_count {
            return Err(Error::parse(
                path,
                header.header_lines,
                format!("truncated body: {} of {} vertices", rows, header.vertex_count),
            ));
        }
    }

    Ok(PointCloud {
        points,
        normals: has_normals.then_some(normals),
    })
}

/// Binary little-endian PLY with float64 properties, so that coordinates
/// round-trip bit-exactly.
fn save_ply_binary(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    let mut header = String::new();
    header.push_str("ply\nformat binary_little_endian 1.0\n");
    writeln!(header, "element vertex {}", cloud.len()).unwrap();
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.normals.is_some() {
        header.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    header.push_str("end_header\n");
    f.write_all(header.as_bytes())?;

    let mut body = Vec::with_capacity(cloud.len() * 24);
    for (i, p) in cloud.points.iter().enumerate() {
        for v in [p.x, p.y, p.z] {
            body.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(ns) = &cloud.normals {
            let n = ns[i];
            for v in [n.x, n.y, n.z] {
                body.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    f.write_all(&body)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn xyz_two_points() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pts.xyz");
        fs::write(&p, "0 0 0\n1 0 0\n").unwrap();
        let cloud = load_cloud(&p, CloudFormat::Xyz).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.points[1], Point3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn xyz_round_trip_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let cloud: PointCloud = (0..50)
            .map(|_| {
                Point3::new(
                    rng.random::<f64>() * 2.0 - 1.0,
                    rng.random::<f64>() * 1e3,
                    rng.random::<f64>() * 1e-3,
                )
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.xyz");
        save_cloud(&cloud, &p, CloudFormat::Xyz).unwrap();
        let back = load_cloud(&p, CloudFormat::Xyz).unwrap();
        assert_eq!(back, cloud);
    }

    #[test]
    fn binary_ply_round_trip_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let points: Vec<Point3> = (0..64).map(|_| Point3::new(rng.random(), rng.random(), rng.random())).collect();
        let normals: Vec<Vector3<f64>> = (0..64)
            .map(|_| {
                Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
                    .normalize()
            })
            .collect();
        let cloud = PointCloud::with_normals(points, normals).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.ply");
        save_cloud(&cloud, &p, CloudFormat::Ply).unwrap();
        let back = load_cloud(&p, CloudFormat::Ply).unwrap();
        assert_eq!(back, cloud);
    }

    #[test]
    fn ascii_ply_with_float32() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ply");
        fs::write(
            &p,
            "ply\nformat ascii 1.0\ncomment test\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1.5 2.5 3.5\n",
        )
        .unwrap();
        let cloud = load_cloud(&p, CloudFormat::Ply).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.points[1], Point3::new(1.5, 2.5, 3.5));
    }

    #[test]
    fn truncated_binary_body_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.ply");
        let cloud: PointCloud = (0..8).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        save_cloud(&cloud, &p, CloudFormat::Ply).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 10]).unwrap();
        let err = load_cloud(&p, CloudFormat::Ply).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "got {err:?}");
    }

    #[test]
    fn non_finite_coordinate_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nan.xyz");
        fs::write(&p, "0 0 0\nNaN 0 0\n").unwrap();
        assert!(load_cloud(&p, CloudFormat::Xyz).is_err());
    }

    #[test]
    fn unsupported_layout_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.ply");
        fs::write(
            &p,
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nend_header\n0 0 0 255\n",
        )
        .unwrap();
        assert!(load_cloud(&p, CloudFormat::Ply).is_err());
    }
}
