//! Point cloud readers and writers: ASCII / binary little-endian PLY,
//! ASCII PCD and whitespace separated `x y z [label]` text.
//!
//! Labels travel as a `label` vertex property (PLY) or field (PCD). The
//! sensor origin is stored as a `origin x y z` comment line in all three
//! formats.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{is_finite, Label, Point3, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CloudFormat {
    Ply,
    Pcd,
    /// `x y z [label]` rows.
    XyzWithLabel,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "ply" => Some(Self::Ply),
            "pcd" => Some(Self::Pcd),
            "xyz" | "txt" | "xyzl" => Some(Self::XyzWithLabel),
            _ => None,
        }
    }
}

impl FromStr for CloudFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ply" => Ok(Self::Ply),
            "pcd" => Ok(Self::Pcd),
            "xyz" | "xyz-with-label" => Ok(Self::XyzWithLabel),
            other => Err(Error::InvalidArgument(format!("unknown cloud format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyEncoding {
    Ascii,
    #[default]
    BinaryLittleEndian,
}

pub fn load_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<PointCloud> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let cloud = match format {
        CloudFormat::Ply => read_ply(&mut reader, path)?,
        CloudFormat::Pcd => read_pcd(&mut reader, path)?,
        CloudFormat::XyzWithLabel => read_xyz(&mut reader, path)?,
    };
    Ok(cloud)
}

/// Loads a cloud, picking the format from the file extension.
pub fn load_cloud_auto(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let format = CloudFormat::from_path(path).ok_or_else(|| {
        Error::InvalidArgument(format!("cannot infer cloud format of {}", path.display()))
    })?;
    load_cloud(path, format)
}

pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>, format: CloudFormat) -> Result<()> {
    save_cloud_with(cloud, path, format, PlyEncoding::default())
}

pub fn save_cloud_with(
    cloud: &PointCloud,
    path: impl AsRef<Path>,
    format: CloudFormat,
    encoding: PlyEncoding,
) -> Result<()> {
    let path = path.as_ref();
    cloud.validate()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = match format {
        CloudFormat::Ply => write_ply(cloud, &mut w, encoding),
        CloudFormat::Pcd => write_pcd(cloud, &mut w),
        CloudFormat::XyzWithLabel => write_xyz(cloud, &mut w),
    };
    res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn finite_or_err(p: Point3, path: &Path, location: impl FnOnce() -> String) -> Result<Point3> {
    if is_finite(&p) {
        Ok(p)
    } else {
        Err(Error::NonFinite {
            location: format!("{} {}", path.display(), location()),
        })
    }
}

fn parse_origin_comment(text: &str) -> Option<Point3> {
    let mut it = text.split_whitespace();
    if it.next()? != "origin" {
        return None;
    }
    let v: Vec<f64> = it.map(|s| s.parse().ok()).collect::<Option<_>>()?;
    (v.len() == 3).then(|| Point3::new(v[0], v[1], v[2]))
}

// ---------------------------------------------------------------- PLY

#[derive(Debug, Clone, Copy, PartialEq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
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

#[derive(Debug, Clone)]
enum PlyProperty {
    Scalar { name: String, ty: ScalarType },
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone)]
struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<PlyProperty>,
}

#[derive(Debug, PartialEq)]
enum PlyFormat {
    Ascii,
    BinaryLe,
}

fn read_header_line(reader: &mut impl BufRead, path: &Path, line_no: &mut usize) -> Result<String> {
    let mut line = String::new();
    let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    *line_no += 1;
    if n == 0 {
        return Err(Error::parse(path, format!("line {line_no}"), "unexpected end of header"));
    }
    Ok(line.trim_end_matches(['\n', '\r']).to_string())
}

fn read_ply(reader: &mut impl BufRead, path: &Path) -> Result<PointCloud> {
    let mut line_no = 0;
    let magic = read_header_line(reader, path, &mut line_no)?;
    if magic.trim() != "ply" {
        return Err(Error::parse(path, "line 1", "missing `ply` magic"));
    }
    let mut format = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut origin = None;
    loop {
        let line = read_header_line(reader, path, &mut line_no)?;
        let mut tok = line.split_whitespace();
        let loc = || format!("line {line_no}");
        match tok.next() {
            Some("format") => {
                format = Some(match tok.next() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLe,
                    other => {
                        return Err(Error::parse(path, loc(), format!("unsupported PLY format {other:?}")))
                    }
                });
            }
            Some("comment") => {
                if let Some(o) = parse_origin_comment(line.trim_start()["comment".len()..].trim()) {
                    origin = Some(o);
                }
            }
            Some("obj_info") | None => {}
            Some("element") => {
                let name = tok.next().ok_or_else(|| Error::parse(path, loc(), "element without name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::parse(path, loc(), "element without count"))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, loc(), "property before element"))?;
                let first = tok.next().unwrap_or_default();
                let prop = if first == "list" {
                    let count = tok.next().and_then(ScalarType::parse);
                    let item = tok.next().and_then(ScalarType::parse);
                    match (count, item) {
                        (Some(count), Some(item)) => PlyProperty::List { count, item },
                        _ => return Err(Error::parse(path, loc(), "bad list property")),
                    }
                } else {
                    let ty = ScalarType::parse(first)
                        .ok_or_else(|| Error::parse(path, loc(), format!("unknown type `{first}`")))?;
                    let name = tok.next().ok_or_else(|| Error::parse(path, loc(), "property without name"))?;
                    PlyProperty::Scalar {
                        name: name.to_string(),
                        ty,
                    }
                };
                el.properties.push(prop);
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(Error::parse(path, loc(), format!("unexpected header keyword `{other}`")))
            }
        }
    }
    let format = format.ok_or_else(|| Error::parse(path, "header", "missing format line"))?;

    let vertex_pos = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::parse(path, "header", "no vertex element"))?;
    let vertex = &elements[vertex_pos];
    let find = |n: &str| {
        vertex.properties.iter().position(|p| matches!(p, PlyProperty::Scalar { name, .. } if name == n))
    };
    let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(Error::parse(path, "header", "vertex element lacks x/y/z")),
    };
    let il = find("label");

    let mut points = Vec::with_capacity(vertex.count);
    let mut labels = il.map(|_| Vec::with_capacity(vertex.count));

    match format {
        PlyFormat::Ascii => {
            let mut lines = reader.lines();
            let mut next_line = |line_no: &mut usize| -> Result<String> {
                *line_no += 1;
                match lines.next() {
                    Some(l) => l.map_err(|e| Error::io(path, e)),
                    None => Err(Error::parse(path, format!("line {line_no}"), "unexpected end of file")),
                }
            };
            for el in &elements[..vertex_pos] {
                for _ in 0..el.count {
                    next_line(&mut line_no)?;
                }
            }
            let nprops = vertex.properties.len();
            for _ in 0..vertex.count {
                let line = next_line(&mut line_no)?;
                let vals: Vec<&str> = line.split_whitespace().collect();
                if vals.len() < nprops {
                    return Err(Error::parse(
                        path,
                        format!("line {line_no}"),
                        format!("expected {nprops} values, got {}", vals.len()),
                    ));
                }
                let num = |k: usize| -> Result<f64> {
                    vals[k].parse::<f64>().map_err(|_| {
                        Error::parse(path, format!("line {line_no}"), format!("bad number `{}`", vals[k]))
                    })
                };
                let p = Point3::new(num(ix)?, num(iy)?, num(iz)?);
                points.push(finite_or_err(p, path, || format!("line {line_no}"))?);
                if let (Some(il), Some(out)) = (il, labels.as_mut()) {
                    out.push(to_label(num(il)?, path, || format!("line {line_no}"))?);
                }
            }
        }
        PlyFormat::BinaryLe => {
            let mut offset = 0usize;
            for el in &elements[..vertex_pos] {
                skip_binary_element(reader, el, path, &mut offset)?;
            }
            let layout: Vec<ScalarType> = vertex
                .properties
                .iter()
                .map(|p| match p {
                    PlyProperty::Scalar { ty, .. } => Ok(*ty),
                    PlyProperty::List { .. } => Err(Error::parse(path, "header", "list property in vertex element")),
                })
                .collect::<Result<_>>()?;
            let starts: Vec<usize> = layout
                .iter()
                .scan(0, |acc, t| {
                    let s = *acc;
                    *acc += t.size();
                    Some(s)
                })
                .collect();
            let stride: usize = layout.iter().map(|t| t.size()).sum();
            let mut buf = vec![0u8; stride];
            for v in 0..vertex.count {
                reader.read_exact(&mut buf).map_err(|_| {
                    Error::parse(path, format!("byte offset {offset}"), format!("truncated vertex {v}"))
                })?;
                let get = |k: usize| layout[k].read_le(&buf[starts[k]..]);
                let p = Point3::new(get(ix), get(iy), get(iz));
                points.push(finite_or_err(p, path, || format!("vertex {v} (byte offset {offset})"))?);
                if let (Some(il), Some(out)) = (il, labels.as_mut()) {
                    out.push(to_label(get(il), path, || format!("vertex {v}"))?);
                }
                offset += stride;
            }
        }
    }
    Ok(PointCloud {
        points,
        labels,
        origin,
    })
}

fn skip_binary_element(reader: &mut impl Read, el: &PlyElement, path: &Path, offset: &mut usize) -> Result<()> {
    let mut buf = [0u8; 8];
    for _ in 0..el.count {
        for p in &el.properties {
            let (n, ty) = match p {
                PlyProperty::Scalar { ty, .. } => (1usize, *ty),
                PlyProperty::List { count, item } => {
                    let s = count.size();
                    reader
                        .read_exact(&mut buf[..s])
                        .map_err(|_| Error::parse(path, format!("byte offset {offset}"), "truncated element"))?;
                    *offset += s;
                    (count.read_le(&buf) as usize, *item)
                }
            };
            for _ in 0..n {
                let s = ty.size();
                reader
                    .read_exact(&mut buf[..s])
                    .map_err(|_| Error::parse(path, format!("byte offset {offset}"), "truncated element"))?;
                *offset += s;
            }
        }
    }
    Ok(())
}

fn to_label(v: f64, path: &Path, location: impl FnOnce() -> String) -> Result<Label> {
    if v >= 0.0 && v <= Label::MAX as f64 && v.fract() == 0.0 {
        Ok(v as Label)
    } else {
        Err(Error::parse(path, location(), format!("label {v} is not a non-negative integer")))
    }
}

fn write_ply(cloud: &PointCloud, w: &mut impl Write, encoding: PlyEncoding) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    match encoding {
        PlyEncoding::Ascii => writeln!(w, "format ascii 1.0")?,
        PlyEncoding::BinaryLittleEndian => writeln!(w, "format binary_little_endian 1.0")?,
    }
    if let Some(o) = cloud.origin {
        writeln!(w, "comment origin {} {} {}", o.x, o.y, o.z)?;
    }
    writeln!(w, "element vertex {}", cloud.len())?;
    writeln!(w, "property double x")?;
    writeln!(w, "property double y")?;
    writeln!(w, "property double z")?;
    if cloud.labels.is_some() {
        writeln!(w, "property uint label")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in cloud.points.iter().enumerate() {
        match encoding {
            PlyEncoding::Ascii => {
                write!(w, "{} {} {}", p.x, p.y, p.z)?;
                if let Some(l) = cloud.label(i) {
                    write!(w, " {l}")?;
                }
                writeln!(w)?;
            }
            PlyEncoding::BinaryLittleEndian => {
                w.write_all(&p.x.to_le_bytes())?;
                w.write_all(&p.y.to_le_bytes())?;
                w.write_all(&p.z.to_le_bytes())?;
                if let Some(l) = cloud.label(i) {
                    w.write_all(&l.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- PCD

fn read_pcd(reader: &mut impl BufRead, path: &Path) -> Result<PointCloud> {
    let mut fields: Vec<String> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut npoints: Option<usize> = None;
    let mut origin = None;
    let mut viewpoint = None;
    let mut line_no = 0;
    loop {
        let line = read_header_line(reader, path, &mut line_no)?;
        let trimmed = line.trim();
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(o) = parse_origin_comment(comment.trim()) {
                origin = Some(o);
            }
            continue;
        }
        let mut tok = trimmed.split_whitespace();
        let loc = || format!("line {line_no}");
        match tok.next() {
            None | Some("VERSION") | Some("SIZE") | Some("TYPE") | Some("WIDTH") | Some("HEIGHT") => {}
            Some("FIELDS") => fields = tok.map(str::to_string).collect(),
            Some("COUNT") => {
                counts = tok
                    .map(|c| c.parse().map_err(|_| Error::parse(path, loc(), "bad COUNT")))
                    .collect::<Result<_>>()?
            }
            Some("VIEWPOINT") => {
                let v: Vec<f64> = tok.filter_map(|s| s.parse().ok()).collect();
                if v.len() >= 3 && (v[0] != 0.0 || v[1] != 0.0 || v[2] != 0.0) {
                    viewpoint = Some(Point3::new(v[0], v[1], v[2]));
                }
            }
            Some("POINTS") => {
                npoints = Some(
                    tok.next()
                        .and_then(|c| c.parse().ok())
                        .ok_or_else(|| Error::parse(path, loc(), "bad POINTS"))?,
                )
            }
            Some("DATA") => match tok.next() {
                Some("ascii") => break,
                other => return Err(Error::parse(path, loc(), format!("unsupported PCD DATA {other:?}"))),
            },
            Some(other) => return Err(Error::parse(path, loc(), format!("unexpected PCD key `{other}`"))),
        }
    }
    if counts.is_empty() {
        counts = vec![1; fields.len()];
    }
    // Column offset of each field once COUNTs are expanded.
    let mut column = Vec::with_capacity(fields.len());
    let mut acc = 0;
    for c in &counts {
        column.push(acc);
        acc += c;
    }
    let ncols = acc;
    let col_of = |name: &str| fields.iter().position(|f| f == name).map(|k| column[k]);
    let (ix, iy, iz) = match (col_of("x"), col_of("y"), col_of("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(Error::parse(path, "header", "FIELDS lacks x/y/z")),
    };
    let il = col_of("label");
    let n = npoints.ok_or_else(|| Error::parse(path, "header", "missing POINTS"))?;
    let mut points = Vec::with_capacity(n);
    let mut labels = il.map(|_| Vec::with_capacity(n));
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        line_no += 1;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != ncols {
            return Err(Error::parse(
                path,
                format!("line {line_no}"),
                format!("expected {ncols} values, got {}", vals.len()),
            ));
        }
        let num = |k: usize| -> Result<f64> {
            vals[k]
                .parse::<f64>()
                .map_err(|_| Error::parse(path, format!("line {line_no}"), format!("bad number `{}`", vals[k])))
        };
        let p = Point3::new(num(ix)?, num(iy)?, num(iz)?);
        points.push(finite_or_err(p, path, || format!("line {line_no}"))?);
        if let (Some(il), Some(out)) = (il, labels.as_mut()) {
            out.push(to_label(num(il)?, path, || format!("line {line_no}"))?);
        }
    }
    if points.len() != n {
        return Err(Error::parse(
            path,
            format!("line {line_no}"),
            format!("POINTS says {n}, found {}", points.len()),
        ));
    }
    Ok(PointCloud {
        points,
        labels,
        origin: origin.or(viewpoint),
    })
}

fn write_pcd(cloud: &PointCloud, w: &mut impl Write) -> std::io::Result<()> {
    let labelled = cloud.labels.is_some();
    writeln!(w, "# .PCD v0.7 - Point Cloud Data file format")?;
    if let Some(o) = cloud.origin {
        writeln!(w, "# origin {} {} {}", o.x, o.y, o.z)?;
    }
    writeln!(w, "VERSION 0.7")?;
    if labelled {
        writeln!(w, "FIELDS x y z label")?;
        writeln!(w, "SIZE 8 8 8 4")?;
        writeln!(w, "TYPE F F F U")?;
        writeln!(w, "COUNT 1 1 1 1")?;
    } else {
        writeln!(w, "FIELDS x y z")?;
        writeln!(w, "SIZE 8 8 8")?;
        writeln!(w, "TYPE F F F")?;
        writeln!(w, "COUNT 1 1 1")?;
    }
    writeln!(w, "WIDTH {}", cloud.len())?;
    writeln!(w, "HEIGHT 1")?;
    let o = cloud.origin.unwrap_or_else(Point3::origin);
    writeln!(w, "VIEWPOINT {} {} {} 1 0 0 0", o.x, o.y, o.z)?;
    writeln!(w, "POINTS {}", cloud.len())?;
    writeln!(w, "DATA ascii")?;
    write_rows(cloud, w)
}

fn write_rows(cloud: &PointCloud, w: &mut impl Write) -> std::io::Result<()> {
    for (i, p) in cloud.points.iter().enumerate() {
        match cloud.label(i) {
            Some(l) => writeln!(w, "{} {} {} {}", p.x, p.y, p.z, l)?,
            None => writeln!(w, "{} {} {}", p.x, p.y, p.z)?,
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- XYZ

fn read_xyz(reader: &mut impl BufRead, path: &Path) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut labels: Vec<Label> = Vec::new();
    let mut columns: Option<usize> = None;
    let mut origin = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(o) = parse_origin_comment(comment.trim()) {
                origin = Some(o);
            }
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        let vals: Vec<&str> = trimmed.split_whitespace().collect();
        let expected = *columns.get_or_insert(vals.len());
        if !(vals.len() == 3 || vals.len() == 4) || vals.len() != expected {
            return Err(Error::parse(
                path,
                format!("line {line_no}"),
                format!("expected {} values, got {}", expected.clamp(3, 4), vals.len()),
            ));
        }
        let num = |k: usize| -> Result<f64> {
            vals[k]
                .parse::<f64>()
                .map_err(|_| Error::parse(path, format!("line {line_no}"), format!("bad number `{}`", vals[k])))
        };
        let p = Point3::new(num(0)?, num(1)?, num(2)?);
        points.push(finite_or_err(p, path, || format!("line {line_no}"))?);
        if vals.len() == 4 {
            labels.push(
                vals[3]
                    .parse::<Label>()
                    .map_err(|_| Error::parse(path, format!("line {line_no}"), format!("bad label `{}`", vals[3])))?,
            );
        }
    }
    Ok(PointCloud {
        labels: (columns == Some(4)).then_some(labels),
        points,
        origin,
    })
}

fn write_xyz(cloud: &PointCloud, w: &mut impl Write) -> std::io::Result<()> {
    if let Some(o) = cloud.origin {
        writeln!(w, "# origin {} {} {}", o.x, o.y, o.z)?;
    }
    write_rows(cloud, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, labelled: bool) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let points: Vec<Point3> = (0..n)
            .map(|_| Point3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-2.0..5.0)))
            .collect();
        let mut c = PointCloud::new(points);
        if labelled {
            c.labels = Some((0..n).map(|_| rng.random_range(0..40)).collect());
        }
        c.with_origin(Point3::new(1.5, -2.0, 0.7))
    }

    fn assert_close(a: &PointCloud, b: &PointCloud, tol: f64) {
        assert_eq!(a.len(), b.len());
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!((p - q).norm() <= tol, "{p} vs {q}");
        }
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.origin.is_some(), b.origin.is_some());
    }

    #[test]
    fn ascii_ply_three_vertices() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tri.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n",
        )
        .unwrap();
        let c = load_cloud(&path, CloudFormat::Ply).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.points[1], Point3::new(1.0, 0.0, 0.0));
        assert!(c.labels.is_none());
    }

    #[test]
    fn nan_record_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.xyz");
        std::fs::write(&path, "0 0 0\n1 1 1\nnan 0 0\n").unwrap();
        let err = load_cloud(&path, CloudFormat::XyzWithLabel).unwrap_err();
        match err {
            Error::NonFinite { location } => assert!(location.ends_with("line 3"), "{location}"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn malformed_record_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.xyz");
        std::fs::write(&path, "0 0 0 1\n1 1 1\n").unwrap();
        let err = load_cloud(&path, CloudFormat::XyzWithLabel).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_cloud("/definitely/not/here.ply", CloudFormat::Ply),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn truncated_binary_ply_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ply");
        save_cloud(&random_cloud(10, true), &path, CloudFormat::Ply).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        let err = load_cloud(&path, CloudFormat::Ply).unwrap_err().to_string();
        assert!(err.contains("byte offset"), "{err}");
    }

    #[test]
    fn empty_cloud_round_trips_in_every_format() {
        let dir = tempfile::tempdir().unwrap();
        for (fmt, name) in [(CloudFormat::Ply, "e.ply"), (CloudFormat::Pcd, "e.pcd"), (CloudFormat::XyzWithLabel, "e.xyz")] {
            let path = dir.path().join(name);
            save_cloud(&PointCloud::default(), &path, fmt).unwrap();
            assert!(load_cloud(&path, fmt).unwrap().is_empty());
        }
        let text = std::fs::read_to_string(dir.path().join("e.pcd")).unwrap();
        assert!(text.contains("POINTS 0"));
    }

    #[test]
    fn round_trip_10k_all_formats() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = random_cloud(10_000, true);
        for (fmt, enc, name) in [
            (CloudFormat::Ply, PlyEncoding::BinaryLittleEndian, "a.ply"),
            (CloudFormat::Ply, PlyEncoding::Ascii, "b.ply"),
            (CloudFormat::Pcd, PlyEncoding::Ascii, "c.pcd"),
            (CloudFormat::XyzWithLabel, PlyEncoding::Ascii, "d.xyz"),
        ] {
            let path = dir.path().join(name);
            save_cloud_with(&cloud, &path, fmt, enc).unwrap();
            let back = load_cloud(&path, fmt).unwrap();
            assert_close(&cloud, &back, 1e-6);
            assert_eq!(back.origin, cloud.origin);
        }
    }

    #[test]
    fn ply_and_pcd_agree() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = random_cloud(500, false);
        save_cloud(&cloud, dir.path().join("x.ply"), CloudFormat::Ply).unwrap();
        save_cloud(&cloud, dir.path().join("x.pcd"), CloudFormat::Pcd).unwrap();
        let a = load_cloud_auto(dir.path().join("x.ply")).unwrap();
        let b = load_cloud_auto(dir.path().join("x.pcd")).unwrap();
        assert_close(&a, &b, 1e-6);
    }

    #[test]
    fn pcd_count_expansion_and_foreign_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.pcd");
        std::fs::write(
            &path,
            "VERSION 0.7\nFIELDS x y z normal label\nSIZE 4 4 4 4 4\nTYPE F F F F U\nCOUNT 1 1 1 3 1\nWIDTH 2\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS 2\nDATA ascii\n1 2 3 0 0 1 7\n4 5 6 0 1 0 9\n",
        )
        .unwrap();
        let c = load_cloud(&path, CloudFormat::Pcd).unwrap();
        assert_eq!(c.points[1], Point3::new(4.0, 5.0, 6.0));
        assert_eq!(c.labels, Some(vec![7, 9]));
        assert_eq!(c.origin, None);
    }
}
