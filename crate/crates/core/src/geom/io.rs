//! Point-cloud files: PLY (ASCII or binary little-endian) and `x,y,z` CSV.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{PointCloud, Vec3};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyFormat {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy)]
enum PlyType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
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
}

/// Reads the `vertex` element (`x`, `y`, `z` properties) of a PLY file.
pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim() != "ply" {
        return Err(Error::parse(path, "missing `ply` magic"));
    }

    let mut format = None;
    let mut n_vertex = None;
    let mut in_vertex = false;
    let mut props: Vec<(String, PlyType)> = Vec::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(Error::parse(path, "unterminated header"));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
            ["format", "binary_little_endian", _] => format = Some(PlyFormat::BinaryLe),
            ["format", other, _] => {
                return Err(Error::parse(path, format!("unsupported PLY format `{other}`")))
            }
            ["element", "vertex", count] => {
                in_vertex = true;
                n_vertex = Some(
                    count
                        .parse::<usize>()
                        .map_err(|_| Error::parse(path, "bad vertex count"))?,
                );
            }
            ["element", ..] => {
                if n_vertex.is_none() {
                    return Err(Error::parse(path, "vertex element must come first"));
                }
                in_vertex = false;
            }
            ["property", "list", ..] if in_vertex => {
                return Err(Error::parse(path, "list properties on vertices are unsupported"))
            }
            ["property", ty, name] if in_vertex => {
                let ty = PlyType::parse(ty)
                    .ok_or_else(|| Error::parse(path, format!("unknown property type `{ty}`")))?;
                props.push((name.to_string(), ty));
            }
            _ => {}
        }
    }
    let format = format.ok_or_else(|| Error::parse(path, "missing format line"))?;
    let n = n_vertex.ok_or_else(|| Error::parse(path, "no vertex element"))?;
    let col = |name: &str| {
        props
            .iter()
            .position(|(p, _)| p == name)
            .ok_or_else(|| Error::parse(path, format!("missing vertex property `{name}`")))
    };
    let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);

    let mut points = Vec::with_capacity(n);
    match format {
        PlyFormat::Ascii => {
            for _ in 0..n {
                line.clear();
                if reader.read_line(&mut line)? == 0 {
                    return Err(Error::parse(path, "truncated vertex list"));
                }
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse(path, e.to_string()))?;
                if vals.len() < props.len() {
                    return Err(Error::parse(path, "short vertex record"));
                }
                points.push(Vec3::new(vals[ix], vals[iy], vals[iz]));
            }
        }
        PlyFormat::BinaryLe => {
            let offsets: Vec<usize> = props
                .iter()
                .scan(0, |acc, (_, t)| {
                    let o = *acc;
                    *acc += t.size();
                    Some(o)
                })
                .collect();
            let stride: usize = props.iter().map(|(_, t)| t.size()).sum();
            let mut buf = vec![0u8; stride];
            for _ in 0..n {
                reader
                    .read_exact(&mut buf)
                    .map_err(|_| Error::parse(path, "truncated binary vertex list"))?;
                let get = |k: usize| props[k].1.read_le(&buf[offsets[k]..]);
                points.push(Vec3::new(get(ix), get(iy), get(iz)));
            }
        }
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().trim_start_matches("design_").to_string())
        .unwrap_or_default();
    PointCloud::new(id, points)
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "comment design_id {}", cloud.design_id)?;
    writeln!(w, "element vertex {}", cloud.len())?;
    writeln!(w, "property double x")?;
    writeln!(w, "property double y")?;
    writeln!(w, "property double z")?;
    writeln!(w, "end_header")?;
    for p in &cloud.points {
        writeln!(w, "{:e} {:e} {:e}", p.x, p.y, p.z)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path, design_id: &str) -> Result<PointCloud> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["x", "y", "z"] {
        return Err(Error::parse(path, "expected header `x,y,z`"));
    }
    let mut points = Vec::new();
    for rec in rdr.deserialize() {
        let (x, y, z): (f64, f64, f64) = rec?;
        points.push(Vec3::new(x, y, z));
    }
    PointCloud::new(design_id, points)
}

pub fn write_csv(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "z"])?;
    for p in &cloud.points {
        w.serialize((p.x, p.y, p.z))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PointCloud {
        PointCloud::new(
            "7",
            vec![Vec3::new(0.1, -2.5, 3.0), Vec3::new(1e-7, 4.0, -0.25), Vec3::new(0.0, 0.0, 1.0 / 3.0)],
        )
        .unwrap()
    }

    #[test]
    fn ascii_ply_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("design_7.ply");
        write_ply(&p, &sample()).unwrap();
        let back = read_ply(&p).unwrap();
        assert_eq!(back.design_id, "7");
        assert_eq!(back.points, sample().points);
    }

    #[test]
    fn binary_ply_with_extra_properties() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.ply");
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\nproperty uchar red\nproperty float y\nproperty double z\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n".to_vec();
        for (x, r, y, z) in [(1.5f32, 7u8, -2.0f32, 0.25f64), (0.0, 255, 3.0, -1.0)] {
            bytes.extend(x.to_le_bytes());
            bytes.push(r);
            bytes.extend(y.to_le_bytes());
            bytes.extend(z.to_le_bytes());
        }
        std::fs::write(&p, bytes).unwrap();
        let c = read_ply(&p).unwrap();
        assert_eq!(c.points, vec![Vec3::new(1.5, -2.0, 0.25), Vec3::new(0.0, 3.0, -1.0)]);
    }

    #[test]
    fn csv_round_trip_and_header_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        write_csv(&p, &sample()).unwrap();
        assert_eq!(read_csv(&p, "7").unwrap().points, sample().points);
        std::fs::write(&p, "a,b,c\n1,2,3\n").unwrap();
        assert!(read_csv(&p, "7").is_err());
    }
}
