//! PLY point clouds (ascii and binary little endian).
//!
//! Reads `x y z`, optional `nx ny nz`, optional `red green blue` and any
//! other scalar vertex property, plus an optional `face` element with a
//! `vertex_indices` list. Writes doubles for geometry so round trips are
//! lossless.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

const FMT: &str = "PLY";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

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
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::format(FMT, format!("unknown scalar type {other}"))),
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

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// A point cloud and, when present, polygon faces over its vertices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlyData {
    pub cloud: PointCloud,
    pub faces: Vec<Vec<u32>>,
}

pub fn read_ply_file(path: &Path) -> Result<PlyData> {
    let file = std::fs::File::open(path)?;
    read_ply(BufReader::new(file))
}

pub fn read_ply<R: BufRead>(mut reader: R) -> Result<PlyData> {
    let mut line = String::new();
    let next_line = |reader: &mut R, line: &mut String| -> Result<()> {
        line.clear();
        if reader.read_line(line)? == 0 {
            return Err(Error::format(FMT, "unexpected end of header"));
        }
        Ok(())
    };
    next_line(&mut reader, &mut line)?;
    if line.trim_end() != "ply" {
        return Err(Error::format(FMT, "missing 'ply' magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        next_line(&mut reader, &mut line)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", "ascii", _] => encoding = Some(PlyEncoding::Ascii),
            ["format", "binary_little_endian", _] => encoding = Some(PlyEncoding::BinaryLittleEndian),
            ["format", other, ..] => {
                return Err(Error::format(FMT, format!("unsupported format {other}")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::format(FMT, "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", count, item, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::format(FMT, "property before element"))?;
                el.props.push(Property::List {
                    name: name.to_string(),
                    count: Scalar::parse(count)?,
                    item: Scalar::parse(item)?,
                });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::format(FMT, "property before element"))?;
                el.props.push(Property::Scalar {
                    name: name.to_string(),
                    ty: Scalar::parse(ty)?,
                });
            }
            ["end_header"] => break,
            _ => return Err(Error::format(FMT, format!("bad header line {:?}", line.trim_end()))),
        }
    }
    let encoding = encoding.ok_or_else(|| Error::format(FMT, "missing format line"))?;
    let mut source: Box<dyn ValueSource + '_> = match encoding {
        PlyEncoding::Ascii => Box::new(AsciiSource::new(&mut reader)),
        PlyEncoding::BinaryLittleEndian => Box::new(BinarySource { reader: &mut reader }),
    };

    let mut out = PlyData::default();
    for el in &elements {
        match el.name.as_str() {
            "vertex" => out.cloud = read_vertices(el, source.as_mut())?,
            "face" => {
                for _ in 0..el.count {
                    let mut face = None;
                    for prop in &el.props {
                        match prop {
                            Property::List { name, count, item } => {
                                let n = source.scalar(*count)? as usize;
                                let mut idx = Vec::with_capacity(n);
                                for _ in 0..n {
                                    idx.push(source.scalar(*item)? as u32);
                                }
                                if name == "vertex_indices" || name == "vertex_index" {
                                    face = Some(idx);
                                }
                            }
                            Property::Scalar { ty, .. } => {
                                source.scalar(*ty)?;
                            }
                        }
                    }
                    out.faces.push(face.ok_or_else(|| Error::format(FMT, "face without vertex_indices"))?);
                }
            }
            _ => skip_element(el, source.as_mut())?,
        }
    }
    let n = out.cloud.len() as u32;
    if out.faces.iter().flatten().any(|&i| i >= n) {
        return Err(Error::format(FMT, "face index out of range"));
    }
    Ok(out)
}

fn read_vertices(el: &Element, source: &mut dyn ValueSource) -> Result<PointCloud> {
    let names: Vec<&str> = el
        .props
        .iter()
        .map(|p| match p {
            Property::Scalar { name, .. } | Property::List { name, .. } => name.as_str(),
        })
        .collect();
    let col = |n: &str| names.iter().position(|x| *x == n);
    let (xi, yi, zi) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(Error::format(FMT, "vertex element lacks x, y, z")),
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };
    let color_cols = match (col("red"), col("green"), col("blue")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };
    let reserved = ["x", "y", "z", "nx", "ny", "nz", "red", "green", "blue", "alpha"];
    let extra: Vec<(usize, &str)> = names
        .iter()
        .enumerate()
        .filter(|(i, n)| !reserved.contains(n) && matches!(el.props[*i], Property::Scalar { .. }))
        .map(|(i, n)| (i, *n))
        .collect();

    let mut cloud = PointCloud {
        points: Vec::with_capacity(el.count),
        normals: normal_cols.map(|_| Vec::with_capacity(el.count)),
        colors: color_cols.map(|_| Vec::with_capacity(el.count)),
        scalars: extra.iter().map(|(_, n)| (n.to_string(), Vec::new())).collect(),
    };
    let mut row = vec![0f64; el.props.len()];
    for _ in 0..el.count {
        for (i, prop) in el.props.iter().enumerate() {
            row[i] = match prop {
                Property::Scalar { ty, .. } => source.scalar(*ty)?,
                Property::List { count, item, .. } => {
                    let n = source.scalar(*count)? as usize;
                    for _ in 0..n {
                        source.scalar(*item)?;
                    }
                    0.0
                }
            };
        }
        cloud.points.push(Vec3::new(row[xi], row[yi], row[zi]));
        if let (Some(ns), Some(c)) = (cloud.normals.as_mut(), normal_cols) {
            ns.push(Vec3::new(row[c[0]], row[c[1]], row[c[2]]));
        }
        if let (Some(cs), Some(c)) = (cloud.colors.as_mut(), color_cols) {
            cs.push(c.map(|i| row[i].clamp(0.0, 255.0) as u8));
        }
        for (i, name) in &extra {
            cloud.scalars.get_mut(*name).unwrap().push(row[*i]);
        }
    }
    Ok(cloud)
}

fn skip_element(el: &Element, source: &mut dyn ValueSource) -> Result<()> {
    for _ in 0..el.count {
        for prop in &el.props {
            match prop {
                Property::Scalar { ty, .. } => {
                    source.scalar(*ty)?;
                }
                Property::List { count, item, .. } => {
                    let n = source.scalar(*count)? as usize;
                    for _ in 0..n {
                        source.scalar(*item)?;
                    }
                }
            }
        }
    }
    Ok(())
}

trait ValueSource {
    fn scalar(&mut self, ty: Scalar) -> Result<f64>;
}

struct BinarySource<'a, R: Read> {
    reader: &'a mut R,
}

impl<R: Read> ValueSource for BinarySource<'_, R> {
    fn scalar(&mut self, ty: Scalar) -> Result<f64> {
        let mut buf = [0u8; 8];
        let n = ty.size();
        self.reader
            .read_exact(&mut buf[..n])
            .map_err(|_| Error::format(FMT, "truncated binary body"))?;
        Ok(ty.decode(&buf[..n]))
    }
}

struct AsciiSource<'a, R: BufRead> {
    reader: &'a mut R,
    tokens: std::collections::VecDeque<String>,
}

impl<'a, R: BufRead> AsciiSource<'a, R> {
    fn new(reader: &'a mut R) -> Self {
        AsciiSource {
            reader,
            tokens: Default::default(),
        }
    }
}

impl<R: BufRead> ValueSource for AsciiSource<'_, R> {
    fn scalar(&mut self, _ty: Scalar) -> Result<f64> {
        while self.tokens.is_empty() {
            let mut line = String::new();
            if self.reader.read_line(&mut line)? == 0 {
                return Err(Error::format(FMT, "truncated ascii body"));
            }
            self.tokens.extend(line.split_whitespace().map(str::to_owned));
        }
        let tok = self.tokens.pop_front().unwrap();
        tok.parse::<f64>()
            .map_err(|_| Error::format(FMT, format!("bad number {tok:?}")))
    }
}

pub fn write_ply_file(path: &Path, data: &PlyData, encoding: PlyEncoding) -> Result<()> {
    let mut buf = Vec::new();
    write_ply(&mut buf, data, encoding)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn write_ply<W: Write>(w: &mut W, data: &PlyData, encoding: PlyEncoding) -> Result<()> {
    let cloud = &data.cloud;
    cloud.validate()?;
    let fmt = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(w, "ply\nformat {fmt} 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    for p in ["x", "y", "z"] {
        writeln!(w, "property double {p}")?;
    }
    if cloud.normals.is_some() {
        for p in ["nx", "ny", "nz"] {
            writeln!(w, "property double {p}")?;
        }
    }
    if cloud.colors.is_some() {
        for p in ["red", "green", "blue"] {
            writeln!(w, "property uchar {p}")?;
        }
    }
    for name in cloud.scalars.keys() {
        writeln!(w, "property double {name}")?;
    }
    if !data.faces.is_empty() {
        writeln!(w, "element face {}", data.faces.len())?;
        writeln!(w, "property list uchar uint vertex_indices")?;
    }
    writeln!(w, "end_header")?;

    for i in 0..cloud.len() {
        let mut doubles: Vec<f64> = cloud.points[i].iter().copied().collect();
        if let Some(ns) = &cloud.normals {
            doubles.extend(ns[i].iter());
        }
        let color = cloud.colors.as_ref().map(|c| c[i]);
        let scalars: Vec<f64> = cloud.scalars.values().map(|v| v[i]).collect();
        match encoding {
            PlyEncoding::Ascii => {
                let mut fields: Vec<String> = doubles.iter().map(|v| format!("{v:?}")).collect();
                if let Some(c) = color {
                    fields.extend(c.iter().map(|v| v.to_string()));
                }
                fields.extend(scalars.iter().map(|v| format!("{v:?}")));
                writeln!(w, "{}", fields.join(" "))?;
            }
            PlyEncoding::BinaryLittleEndian => {
                for v in &doubles {
                    w.write_all(&v.to_le_bytes())?;
                }
                if let Some(c) = color {
                    w.write_all(&c)?;
                }
                for v in &scalars {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
    }
    for face in &data.faces {
        if face.len() > u8::MAX as usize {
            return Err(Error::invalid("face has more than 255 vertices"));
        }
        match encoding {
            PlyEncoding::Ascii => {
                let idx: Vec<String> = face.iter().map(u32::to_string).collect();
                writeln!(w, "{} {}", face.len(), idx.join(" "))?;
            }
            PlyEncoding::BinaryLittleEndian => {
                w.write_all(&[face.len() as u8])?;
                for i in face {
                    w.write_all(&i.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_foreign_ascii_with_floats_and_faces() {
        let text = "ply\nformat ascii 1.0\ncomment made elsewhere\nelement vertex 3\n\
                    property float x\nproperty float y\nproperty float z\n\
                    property float nx\nproperty float ny\nproperty float nz\n\
                    element face 1\nproperty list uchar int vertex_indices\nend_header\n\
                    0 0 0 0 0 1\n1 0 0 0 0 1\n0 1 0 0 0 1\n3 0 1 2\n";
        let data = read_ply(text.as_bytes()).unwrap();
        assert_eq!(data.cloud.len(), 3);
        assert_eq!(data.cloud.normals.as_ref().unwrap()[2], Vec3::z());
        assert_eq!(data.faces, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn reads_binary_float32_vertices() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\n\
                          property float x\nproperty float y\nproperty float z\n\
                          property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
            .to_vec();
        for (p, c) in [([1.5f32, 2.0, -3.0], [1u8, 2, 3]), ([0.0, 0.25, 8.0], [9, 8, 7])] {
            for v in p {
                bytes.extend(v.to_le_bytes());
            }
            bytes.extend(c);
        }
        let data = read_ply(&bytes[..]).unwrap();
        assert_eq!(data.cloud.points[0], Vec3::new(1.5, 2.0, -3.0));
        assert_eq!(data.cloud.colors.unwrap()[1], [9, 8, 7]);
    }

    #[test]
    fn rejects_missing_coordinates_and_truncation() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n1\n";
        assert!(read_ply(text.as_bytes()).is_err());
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\n\
                    property float y\nproperty float z\nend_header\n1 2 3\n";
        assert!(read_ply(text.as_bytes()).is_err());
        assert!(read_ply("plx\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_lossless(
            pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0), 1..40),
            binary in any::<bool>(),
        ) {
            let points: Vec<Vec3> = pts.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect();
            let normals: Vec<Vec3> = points
                .iter()
                .map(|p| p.try_normalize(1e-9).unwrap_or(Vec3::z()))
                .collect();
            let mut cloud = PointCloud::with_normals(points, normals).unwrap();
            cloud.scalars.insert("graspness".into(), (0..cloud.len()).map(|i| i as f64 / 7.0).collect());
            let data = PlyData { cloud, faces: vec![vec![0, 0, 0]] };
            let enc = if binary { PlyEncoding::BinaryLittleEndian } else { PlyEncoding::Ascii };
            let mut buf = Vec::new();
            write_ply(&mut buf, &data, enc).unwrap();
            let back = read_ply(&buf[..]).unwrap();
            prop_assert_eq!(back, data);
        }
    }
}
