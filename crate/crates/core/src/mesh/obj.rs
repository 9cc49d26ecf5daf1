//! Minimal Wavefront OBJ reader and writer.
//!
//! Supports exactly what labeled car models need: positions, normals, named
//! groups, and polygonal faces (triangulated by fanning). Texture
//! coordinates, materials, and smoothing groups are skipped.

use std::fmt::Write as _;

use thiserror::Error;

use crate::math::Vec3;

/// One face corner: a position index and an optional normal index, both
/// zero-based after parsing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub position: u32,
    pub normal: Option<u32>,
}

/// Faces collected under one `g`/`o` statement.
#[derive(Debug, Clone)]
pub struct ObjGroup {
    pub name: String,
    pub faces: Vec<Vec<Corner>>,
}

/// Parsed OBJ contents.
#[derive(Debug, Clone, Default)]
pub struct ObjData {
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub groups: Vec<ObjGroup>,
}

#[derive(Debug, Error)]
pub enum ObjError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> ObjError {
    ObjError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, ObjError> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(line, format!("invalid number {tok:?}")))
}

/// Resolves a 1-based (or negative, relative) OBJ index.
fn resolve_index(tok: &str, len: usize, line: usize) -> Result<u32, ObjError> {
    let idx: i64 = tok
        .parse()
        .map_err(|_| parse_err(line, format!("invalid index {tok:?}")))?;
    let resolved = if idx > 0 {
        idx - 1
    } else if idx < 0 {
        len as i64 + idx
    } else {
        return Err(parse_err(line, "index 0 is not valid in OBJ"));
    };
    if resolved < 0 || resolved >= len as i64 {
        return Err(parse_err(line, format!("index {idx} out of range")));
    }
    Ok(resolved as u32)
}

pub fn parse_obj(text: &str) -> Result<ObjData, ObjError> {
    let mut data = ObjData::default();
    let mut current: Option<usize> = None;

    for (line_idx, raw) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let mut tokens = line.split_whitespace();
        let Some(keyword) = tokens.next() else {
            continue;
        };
        match keyword {
            "v" => {
                let mut coords = [0.0; 3];
                for c in &mut coords {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| parse_err(line_no, "vertex needs three coordinates"))?;
                    *c = parse_f64(tok, line_no)?;
                }
                data.positions.push(Vec3::from_array(coords));
            }
            "vn" => {
                let mut coords = [0.0; 3];
                for c in &mut coords {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| parse_err(line_no, "normal needs three coordinates"))?;
                    *c = parse_f64(tok, line_no)?;
                }
                data.normals.push(Vec3::from_array(coords));
            }
            "g" | "o" => {
                let name = tokens.collect::<Vec<_>>().join(" ");
                let name = if name.is_empty() {
                    "default".to_string()
                } else {
                    name
                };
                current = Some(find_or_insert_group(&mut data.groups, &name));
            }
            "f" => {
                let group_idx = match current {
                    Some(g) => g,
                    None => {
                        let g = find_or_insert_group(&mut data.groups, "default");
                        current = Some(g);
                        g
                    }
                };
                let mut corners = Vec::new();
                for tok in tokens {
                    corners.push(parse_corner(
                        tok,
                        data.positions.len(),
                        data.normals.len(),
                        line_no,
                    )?);
                }
                if corners.len() < 3 {
                    return Err(parse_err(line_no, "face needs at least three corners"));
                }
                data.groups[group_idx].faces.push(corners);
            }
            // Texture coordinates, materials, smoothing, and friends are not used.
            _ => {}
        }
    }
    Ok(data)
}

fn find_or_insert_group(groups: &mut Vec<ObjGroup>, name: &str) -> usize {
    if let Some(pos) = groups.iter().position(|g| g.name == name) {
        pos
    } else {
        groups.push(ObjGroup {
            name: name.to_string(),
            faces: Vec::new(),
        });
        groups.len() - 1
    }
}

fn parse_corner(
    tok: &str,
    positions: usize,
    normals: usize,
    line: usize,
) -> Result<Corner, ObjError> {
    let mut fields = tok.split('/');
    let pos_tok = fields
        .next()
        .ok_or_else(|| parse_err(line, "empty face corner"))?;
    let position = resolve_index(pos_tok, positions, line)?;
    let _texture = fields.next();
    let normal = match fields.next() {
        Some(n) if !n.is_empty() => Some(resolve_index(n, normals, line)?),
        _ => None,
    };
    Ok(Corner { position, normal })
}

/// Serializes positions, normals, and grouped triangles back to OBJ text.
///
/// Numbers are printed with Rust's shortest round-trip formatting, so a
/// parse of the output reproduces the input values bit for bit.
pub fn write_obj(
    positions: &[Vec3],
    normals: &[Vec3],
    groups: &[(String, Vec<[u32; 3]>)],
) -> String {
    let mut out = String::new();
    for p in positions {
        let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
    }
    for n in normals {
        let _ = writeln!(out, "vn {} {} {}", n.x, n.y, n.z);
    }
    for (name, tris) in groups {
        let _ = writeln!(out, "g {name}");
        for t in tris {
            let (a, b, c) = (t[0] + 1, t[1] + 1, t[2] + 1);
            let _ = writeln!(out, "f {a}//{a} {b}//{b} {c}//{c}");
        }
    }
    out
}
