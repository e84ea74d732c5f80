//! Minimal PLY support: vertex tables with scalar properties.
//!
//! Writes `binary_little_endian`; reads that and `ascii`. Elements other than
//! `vertex` are parsed (list properties included) and discarded.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::fusion::SurfaceCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarKind {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarKind {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Self::I8 => "char",
            Self::U8 => "uchar",
            Self::I16 => "short",
            Self::U16 => "ushort",
            Self::I32 => "int",
            Self::U32 => "uint",
            Self::F32 => "float",
            Self::F64 => "double",
        }
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn encode_le(self, v: f64, out: &mut Vec<u8>) {
        match self {
            Self::I8 => out.push(v as i8 as u8),
            Self::U8 => out.push(v as u8),
            Self::I16 => out.extend((v as i16).to_le_bytes()),
            Self::U16 => out.extend((v as u16).to_le_bytes()),
            Self::I32 => out.extend((v as i32).to_le_bytes()),
            Self::U32 => out.extend((v as u32).to_le_bytes()),
            Self::F32 => out.extend((v as f32).to_le_bytes()),
            Self::F64 => out.extend(v.to_le_bytes()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ScalarKind,
    pub values: Vec<f64>,
}

/// The vertex element of a PLY file, one column per property.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VertexTable {
    pub comments: Vec<String>,
    pub columns: Vec<Column>,
}

impl VertexTable {
    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, |c| c.values.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push_column(&mut self, name: &str, kind: ScalarKind, values: Vec<f64>) {
        self.columns.push(Column {
            name: name.to_string(),
            kind,
            values,
        });
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.len();
        if self.columns.iter().any(|c| c.values.len() != n) {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                "PLY columns have different lengths",
            ));
        }
        let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
        for c in &self.comments {
            header.push_str(&format!("comment {c}\n"));
        }
        header.push_str(&format!("element vertex {n}\n"));
        for c in &self.columns {
            header.push_str(&format!("property {} {}\n", c.kind.name(), c.name));
        }
        header.push_str("end_header\n");
        w.write_all(header.as_bytes())?;
        let mut row = Vec::new();
        for i in 0..n {
            row.clear();
            for c in &self.columns {
                c.kind.encode_le(c.values[i], &mut row);
            }
            w.write_all(&row)?;
        }
        w.flush()
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        let bad = |m: String| Error::parse("PLY", m);
        let mut line = String::new();
        let next_line = |r: &mut R, line: &mut String| -> Result<()> {
            line.clear();
            let n = r.read_line(line).map_err(|e| bad(e.to_string()))?;
            if n == 0 {
                return Err(bad("unexpected end of header".into()));
            }
            Ok(())
        };
        next_line(&mut r, &mut line)?;
        if line.trim() != "ply" {
            return Err(bad("missing `ply` magic".into()));
        }
        let mut ascii = None;
        let mut comments = Vec::new();
        let mut elements: Vec<Element> = Vec::new();
        loop {
            next_line(&mut r, &mut line)?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["format", "ascii", _] => ascii = Some(true),
                ["format", "binary_little_endian", _] => ascii = Some(false),
                ["format", other, _] => return Err(bad(format!("unsupported format {other}"))),
                ["comment", ..] => comments.push(line.trim_end()["comment".len()..].trim().to_string()),
                ["obj_info", ..] => {}
                ["element", name, count] => elements.push(Element {
                    name: name.to_string(),
                    count: count.parse().map_err(|_| bad(format!("bad count {count}")))?,
                    props: Vec::new(),
                }),
                ["property", "list", len_ty, item_ty, _name] => {
                    let el = elements.last_mut().ok_or_else(|| bad("property before element".into()))?;
                    let len = ScalarKind::parse(len_ty).ok_or_else(|| bad(format!("bad type {len_ty}")))?;
                    let item = ScalarKind::parse(item_ty).ok_or_else(|| bad(format!("bad type {item_ty}")))?;
                    el.props.push(Prop::List(len, item));
                }
                ["property", ty, name] => {
                    let el = elements.last_mut().ok_or_else(|| bad("property before element".into()))?;
                    let kind = ScalarKind::parse(ty).ok_or_else(|| bad(format!("bad type {ty}")))?;
                    el.props.push(Prop::Scalar(kind, name.to_string()));
                }
                ["end_header"] => break,
                [] => {}
                _ => return Err(bad(format!("unrecognised header line `{}`", line.trim()))),
            }
        }
        let ascii = ascii.ok_or_else(|| bad("missing format line".into()))?;

        let mut table = VertexTable {
            comments,
            columns: Vec::new(),
        };
        let mut body = Vec::new();
        r.read_to_end(&mut body).map_err(|e| bad(e.to_string()))?;
        let mut reader = BodyReader {
            ascii,
            bytes: &body,
            pos: 0,
        };
        for el in &elements {
            let is_vertex = el.name == "vertex";
            if is_vertex {
                for p in &el.props {
                    if let Prop::Scalar(kind, name) = p {
                        table.push_column(name, *kind, Vec::with_capacity(el.count));
                    }
                }
            }
            for _ in 0..el.count {
                let mut col = 0;
                for p in &el.props {
                    match p {
                        Prop::Scalar(kind, _) => {
                            let v = reader.scalar(*kind)?;
                            if is_vertex {
                                table.columns[col].values.push(v);
                                col += 1;
                            }
                        }
                        Prop::List(len, item) => {
                            let n = reader.scalar(*len)? as usize;
                            for _ in 0..n {
                                reader.scalar(*item)?;
                            }
                        }
                    }
                }
            }
            if is_vertex {
                break;
            }
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

struct Element {
    name: String,
    count: usize,
    props: Vec<Prop>,
}

enum Prop {
    Scalar(ScalarKind, String),
    List(ScalarKind, ScalarKind),
}

struct BodyReader<'a> {
    ascii: bool,
    bytes: &'a [u8],
    pos: usize,
}

impl BodyReader<'_> {
    fn scalar(&mut self, kind: ScalarKind) -> Result<f64> {
        if self.ascii {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            let start = self.pos;
            while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            let tok = std::str::from_utf8(&self.bytes[start..self.pos])
                .map_err(|e| Error::parse("PLY", e))?;
            if tok.is_empty() {
                return Err(Error::parse("PLY", "truncated ascii body"));
            }
            tok.parse::<f64>()
                .map_err(|_| Error::parse("PLY", format!("bad number `{tok}`")))
        } else {
            let n = kind.size();
            if self.pos + n > self.bytes.len() {
                return Err(Error::parse("PLY", "truncated binary body"));
            }
            let v = kind.decode_le(&self.bytes[self.pos..self.pos + n]);
            self.pos += n;
            Ok(v)
        }
    }
}

const CLOUD_COLUMNS: [&str; 8] = ["x", "y", "z", "nx", "ny", "nz", "c", "u"];

/// Vertex table for a surface cloud: float x, y, z, nx, ny, nz, c, u.
pub fn cloud_to_table(cloud: &SurfaceCloud, comments: &[String]) -> VertexTable {
    let mut t = VertexTable {
        comments: comments.to_vec(),
        columns: Vec::new(),
    };
    for a in 0..3 {
        t.push_column(
            CLOUD_COLUMNS[a],
            ScalarKind::F32,
            cloud.positions.iter().map(|p| p[a]).collect(),
        );
    }
    for a in 0..3 {
        t.push_column(
            CLOUD_COLUMNS[3 + a],
            ScalarKind::F32,
            cloud.normals.iter().map(|n| n[a]).collect(),
        );
    }
    t.push_column("c", ScalarKind::F32, cloud.uncertainty.clone());
    t.push_column("u", ScalarKind::F32, cloud.variation.clone());
    t
}

/// Reads a surface cloud. Positions and normals are required; missing `c`
/// and `u` default to 0. Normals are renormalised after the f32 round trip.
pub fn table_to_cloud(t: &VertexTable) -> Result<SurfaceCloud> {
    let get = |name: &str| {
        t.column(name)
            .ok_or_else(|| Error::parse("PLY", format!("missing vertex property `{name}`")))
    };
    let (x, y, z) = (get("x")?, get("y")?, get("z")?);
    let (nx, ny, nz) = (get("nx")?, get("ny")?, get("nz")?);
    let n = t.len();
    let mut cloud = SurfaceCloud {
        positions: (0..n).map(|i| Point3::new(x[i], y[i], z[i])).collect(),
        normals: Vec::with_capacity(n),
        uncertainty: t.column("c").map_or_else(|| vec![0.0; n], <[f64]>::to_vec),
        variation: t.column("u").map_or_else(|| vec![0.0; n], <[f64]>::to_vec),
    };
    for i in 0..n {
        let v = Vector3::new(nx[i], ny[i], nz[i]);
        let unit = v
            .try_normalize(1e-12)
            .ok_or_else(|| Error::parse("PLY", format!("zero normal at vertex {i}")))?;
        cloud.normals.push(unit);
    }
    for u in &mut cloud.variation {
        *u = u.clamp(0.0, 1.0 / 3.0);
    }
    Ok(cloud)
}

pub fn write_cloud(path: &Path, cloud: &SurfaceCloud, comments: &[String]) -> Result<()> {
    cloud_to_table(cloud, comments).save(path)
}

pub fn read_cloud(path: &Path) -> Result<SurfaceCloud> {
    table_to_cloud(&VertexTable::load(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_ascii_with_faces() {
        let src = "ply\nformat ascii 1.0\ncomment hi\nelement vertex 2\nproperty float x\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n1.5 7\n-2 255\n3 0 1 1\n";
        let t = VertexTable::read_from(src.as_bytes()).unwrap();
        assert_eq!(t.comments, vec!["hi".to_string()]);
        assert_eq!(t.column("x").unwrap(), &[1.5, -2.0]);
        assert_eq!(t.column("red").unwrap(), &[7.0, 255.0]);
    }

    #[test]
    fn binary_header_is_little_endian_floats() {
        let mut t = VertexTable::default();
        t.push_column("x", ScalarKind::F32, vec![1.0]);
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let text = String::from_utf8_lossy(&buf);
        assert!(text.starts_with("ply\nformat binary_little_endian 1.0\n"));
        assert!(text.contains("property float x\n"));
        assert_eq!(&buf[buf.len() - 4..], &1.0f32.to_le_bytes());
    }

    #[test]
    fn rejects_truncated_body() {
        let mut t = VertexTable::default();
        t.push_column("x", ScalarKind::F64, vec![1.0, 2.0]);
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(VertexTable::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn cloud_requires_normals() {
        let mut t = VertexTable::default();
        for c in ["x", "y", "z"] {
            t.push_column(c, ScalarKind::F32, vec![0.0]);
        }
        assert!(table_to_cloud(&t).is_err());
    }

    proptest! {
        #[test]
        fn f32_columns_roundtrip(vals in proptest::collection::vec(-1e6f32..1e6, 0..50), bytes in proptest::collection::vec(0u8..=255, 0..50)) {
            let n = vals.len().min(bytes.len());
            let mut t = VertexTable { comments: vec!["seed 3".into()], columns: Vec::new() };
            t.push_column("score", ScalarKind::F32, vals[..n].iter().map(|v| *v as f64).collect());
            t.push_column("red", ScalarKind::U8, bytes[..n].iter().map(|v| *v as f64).collect());
            let mut buf = Vec::new();
            t.write_to(&mut buf).unwrap();
            let back = VertexTable::read_from(buf.as_slice()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
