//! Binary and ASCII STL.

use std::path::Path;

use earmatch_core::mesh::{TriangleMesh, Vec3};

use crate::fsutil::{read, write_atomic};
use crate::{Error, Result};

const HEADER: usize = 80;
const RECORD: usize = 50;

pub fn read_stl(path: &Path) -> Result<TriangleMesh> {
    parse_stl(&read(path)?, path)
}

/// Parses either variant. A file whose size matches its binary triangle
/// count is binary even if the header starts with `solid`.
pub fn parse_stl(bytes: &[u8], path: &Path) -> Result<TriangleMesh> {
    if bytes.len() >= HEADER + 4 {
        let declared = u32::from_le_bytes(bytes[HEADER..HEADER + 4].try_into().unwrap());
        if (HEADER + 4) as u64 + RECORD as u64 * declared as u64 == bytes.len() as u64 {
            return parse_binary(bytes, declared);
        }
    }
    if looks_ascii(bytes) {
        return parse_ascii(std::str::from_utf8(bytes).unwrap_or_default(), path);
    }
    if bytes.len() >= HEADER + 4 {
        let declared = u32::from_le_bytes(bytes[HEADER..HEADER + 4].try_into().unwrap());
        return Err(Error::CorruptStl {
            declared,
            found: (bytes.len() - HEADER - 4) / RECORD,
        });
    }
    Err(Error::UnknownFormat {
        path: path.to_path_buf(),
        kind: "STL",
    })
}

fn looks_ascii(bytes: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(bytes) else {
        return false;
    };
    text.trim_start().starts_with("solid") && text.contains("facet")
}

fn parse_binary(bytes: &[u8], count: u32) -> Result<TriangleMesh> {
    let f = |b: &[u8], i: usize| f32::from_le_bytes(b[4 * i..4 * i + 4].try_into().unwrap()) as f64;
    let mut facets = Vec::with_capacity(count as usize);
    let mut normals = Vec::with_capacity(count as usize);
    for rec in bytes[HEADER + 4..].chunks_exact(RECORD) {
        let v = |i: usize| Vec3::new(f(rec, i), f(rec, i + 1), f(rec, i + 2));
        normals.push(v(0));
        facets.push([v(3), v(6), v(9)]);
    }
    Ok(TriangleMesh::from_facets(&facets, Some(normals))?)
}

fn parse_ascii(text: &str, path: &Path) -> Result<TriangleMesh> {
    let err = |line: usize, detail: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        detail: detail.to_string(),
    };
    let mut facets = Vec::new();
    let mut normals = Vec::new();
    let mut corners: Vec<Vec3> = Vec::with_capacity(3);
    let mut in_facet = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let words: Vec<&str> = raw.split_whitespace().collect();
        let vec3 = |w: &[&str]| -> Result<Vec3> {
            let n: Vec<f64> = w.iter().filter_map(|s| s.parse().ok()).collect();
            match n[..] {
                [x, y, z] if w.len() == 3 => Ok(Vec3::new(x, y, z)),
                _ => Err(err(line, "expected three numbers")),
            }
        };
        match words.first().copied() {
            None | Some("solid") | Some("endsolid") | Some("outer") | Some("endloop") => {}
            Some("facet") => {
                if in_facet || words.get(1) != Some(&"normal") {
                    return Err(err(line, "unexpected facet"));
                }
                normals.push(vec3(&words[2..])?);
                in_facet = true;
                corners.clear();
            }
            Some("vertex") => {
                if !in_facet || corners.len() == 3 {
                    return Err(err(line, "unexpected vertex"));
                }
                corners.push(vec3(&words[1..])?);
            }
            Some("endfacet") => {
                if !in_facet || corners.len() != 3 {
                    return Err(err(line, "facet needs exactly three vertices"));
                }
                facets.push([corners[0], corners[1], corners[2]]);
                in_facet = false;
            }
            Some(other) => return Err(err(line, &format!("unknown keyword {other:?}"))),
        }
    }
    if in_facet {
        return Err(err(text.lines().count(), "unterminated facet"));
    }
    Ok(TriangleMesh::from_facets(&facets, Some(normals))?)
}

/// Binary STL bytes (f32 coordinates). Missing normals are computed from
/// the winding.
pub fn encode_binary(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = vec![0u8; HEADER];
    out[..13].copy_from_slice(b"earmatch mesh");
    out.extend_from_slice(&(mesh.triangles().len() as u32).to_le_bytes());
    for t in 0..mesh.triangles().len() {
        let [a, b, c] = mesh.corners(t);
        let n = match mesh.normals() {
            Some(n) => n[t],
            None => (b - a).cross(c - a).normalized().unwrap_or_default(),
        };
        for v in [n, a, b, c] {
            for x in [v.x, v.y, v.z] {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&[0, 0]);
    }
    out
}

pub fn write_binary_stl(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    write_atomic(path, &encode_binary(mesh))
}
