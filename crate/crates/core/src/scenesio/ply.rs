//! Minimal binary little-endian PLY reader/writer for a single vertex element.

use std::path::Path;

use nalgebra::{Vector3, Vector4};

use crate::cloud::{Gaussian, GaussianCloud};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => f64::from(b[0] as i8),
            Scalar::U8 => f64::from(b[0]),
            Scalar::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Scalar::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Scalar::I32 => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Scalar::U32 => f64::from(u32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Scalar::F32 => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

/// Decoded vertex table: property names and row-major values.
pub(crate) struct VertexTable {
    pub names: Vec<String>,
    pub rows: usize,
    pub values: Vec<f64>,
}

impl VertexTable {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.names.iter().position(|n| n == name).ok_or_else(|| Error::MalformedPly {
            offset: 0,
            message: format!("missing vertex property `{name}`"),
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.names.len() + col]
    }
}

fn malformed(offset: usize, message: impl Into<String>) -> Error {
    Error::MalformedPly { offset, message: message.into() }
}

pub(crate) fn parse(bytes: &[u8]) -> Result<VertexTable> {
    const END: &[u8] = b"end_header\n";
    let header_end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .map(|p| p + END.len())
        .ok_or_else(|| malformed(bytes.len(), "header is not terminated by end_header"))?;
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|e| malformed(e.valid_up_to(), "header is not UTF-8"))?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(malformed(0, "missing `ply` magic"));
    }
    let mut rows: Option<usize> = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut offset = 4;
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "binary_little_endian", "1.0"] => {}
            ["format", other, ..] => return Err(malformed(offset, format!("unsupported format `{other}`"))),
            ["comment", ..] | ["obj_info", ..] | ["end_header"] | [] => {}
            ["element", "vertex", n] => {
                rows = Some(n.parse().map_err(|_| malformed(offset, format!("bad vertex count `{n}`")))?);
            }
            ["element", name, _] => return Err(malformed(offset, format!("unsupported element `{name}`"))),
            ["property", "list", ..] => return Err(malformed(offset, "list properties are not supported")),
            ["property", ty, name] => {
                let s = Scalar::parse(ty).ok_or_else(|| malformed(offset, format!("unknown property type `{ty}`")))?;
                props.push((name.to_string(), s));
            }
            _ => return Err(malformed(offset, format!("unrecognised header line `{line}`"))),
        }
        offset += line.len() + 1;
    }
    let rows = rows.ok_or_else(|| malformed(header_end, "no vertex element"))?;
    let stride: usize = props.iter().map(|p| p.1.size()).sum();
    let body = &bytes[header_end..];
    let needed = rows
        .checked_mul(stride)
        .ok_or_else(|| malformed(header_end, "vertex count overflows"))?;
    if body.len() < needed {
        let complete = if stride == 0 { 0 } else { body.len() / stride };
        return Err(malformed(
            header_end + complete * stride,
            format!("truncated vertex data: {rows} vertices declared, {complete} complete"),
        ));
    }
    let mut values = Vec::with_capacity(rows * props.len());
    for r in 0..rows {
        let mut at = r * stride;
        for (_, s) in &props {
            values.push(s.read(&body[at..]));
            at += s.size();
        }
    }
    Ok(VertexTable { names: props.into_iter().map(|p| p.0).collect(), rows, values })
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(std::fs::read(path)?)
}

fn header(rows: usize, props: &[(&str, &str)]) -> Vec<u8> {
    let mut h = format!("ply\nformat binary_little_endian 1.0\nelement vertex {rows}\n");
    for (ty, name) in props {
        h.push_str(&format!("property {ty} {name}\n"));
    }
    h.push_str("end_header\n");
    h.into_bytes()
}

/// Property order of checkpoint files (17 × float32 per primitive).
pub const CHECKPOINT_PROPERTIES: [&str; 17] = [
    "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2", "rot_0",
    "rot_1", "rot_2", "rot_3",
];

pub fn checkpoint_bytes(cloud: &GaussianCloud) -> Vec<u8> {
    let props: Vec<(&str, &str)> = CHECKPOINT_PROPERTIES.iter().map(|n| ("float", *n)).collect();
    let mut out = header(cloud.len(), &props);
    out.reserve(cloud.len() * 17 * 4);
    for g in cloud.iter() {
        let fields = [
            g.position.x,
            g.position.y,
            g.position.z,
            0.0,
            0.0,
            0.0,
            g.color.x,
            g.color.y,
            g.color.z,
            g.raw_opacity,
            g.raw_scale.x,
            g.raw_scale.y,
            g.raw_scale.z,
            g.rotation[0],
            g.rotation[1],
            g.rotation[2],
            g.rotation[3],
        ];
        for f in fields {
            out.extend_from_slice(&(f as f32).to_le_bytes());
        }
    }
    out
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<GaussianCloud> {
    let t = parse(bytes)?;
    let cols: Vec<usize> = CHECKPOINT_PROPERTIES
        .iter()
        .filter(|n| !n.starts_with('n'))
        .map(|n| t.column(n))
        .collect::<Result<_>>()?;
    let mut cloud = GaussianCloud::with_capacity(t.rows);
    for r in 0..t.rows {
        let v = |k: usize| t.get(r, cols[k]);
        cloud.push(Gaussian {
            position: Vector3::new(v(0), v(1), v(2)),
            color: Vector3::new(v(3), v(4), v(5)),
            raw_opacity: v(6),
            raw_scale: Vector3::new(v(7), v(8), v(9)),
            rotation: Vector4::new(v(10), v(11), v(12), v(13)),
        });
    }
    Ok(cloud)
}

/// Writes `cloud` in the checkpoint layout (values rounded to `f32`).
pub fn save_checkpoint(cloud: &GaussianCloud, path: &Path) -> Result<()> {
    Ok(std::fs::write(path, checkpoint_bytes(cloud))?)
}

pub fn load_checkpoint(path: &Path) -> Result<GaussianCloud> {
    checkpoint_from_bytes(&read_file(path)?)
}

/// Seed point with an 8-bit color.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenePoint {
    pub position: Vector3<f64>,
    pub color: [u8; 3],
}

impl ScenePoint {
    pub fn color_f64(&self) -> Vector3<f64> {
        Vector3::from(self.color.map(|c| f64::from(c) / 255.0))
    }
}

pub fn points_bytes(points: &[ScenePoint]) -> Vec<u8> {
    let props = [
        ("float", "x"),
        ("float", "y"),
        ("float", "z"),
        ("uchar", "red"),
        ("uchar", "green"),
        ("uchar", "blue"),
    ];
    let mut out = header(points.len(), &props);
    for p in points {
        for c in p.position.iter() {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        out.extend_from_slice(&p.color);
    }
    out
}

pub fn points_from_bytes(bytes: &[u8]) -> Result<Vec<ScenePoint>> {
    let t = parse(bytes)?;
    let cols: Vec<usize> = ["x", "y", "z", "red", "green", "blue"].iter().map(|n| t.column(n)).collect::<Result<_>>()?;
    Ok((0..t.rows)
        .map(|r| ScenePoint {
            position: Vector3::new(t.get(r, cols[0]), t.get(r, cols[1]), t.get(r, cols[2])),
            color: [3, 4, 5].map(|k| t.get(r, cols[k]).clamp(0.0, 255.0) as u8),
        })
        .collect())
}

pub fn save_points(points: &[ScenePoint], path: &Path) -> Result<()> {
    Ok(std::fs::write(path, points_bytes(points))?)
}

pub fn load_points(path: &Path) -> Result<Vec<ScenePoint>> {
    points_from_bytes(&read_file(path)?)
}
