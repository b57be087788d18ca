//! GANN v1 annotation container.
//!
//! Layout: the 8-byte magic `GANNv1\0\n`, the header length as a little-endian
//! `u64`, a JSON header, then the payload blocks listed in the header, all
//! little-endian. Three kinds share the container:
//!
//! - `object`: grasp points (`f32` triples), scores and widths (`f32`).
//! - `scene`: object-frame grasp points, scores, widths and a `u8` collision
//!   flag per candidate; the segments in the header carry each instance's
//!   pose, from which world points, views and angles are re-derived.
//! - `simplified`: source indices (`u32`), points, a view-index block
//!   (`u32`), scores and widths.
//!
//! Readers check sizes and every invariant of the decoded value.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotate::{AnnotationTensor, MuGrid};
use crate::error::{Error, Result};
use crate::geometry::{sample_view_sphere, GripperModel, RigidPose, Vec3};
use crate::scene::{world_views, SceneCandidates, SceneSegment};
use crate::simplify::{SimplifiedAnnotation, SimplifiedPoint};

pub const MAGIC: &[u8; 8] = b"GANNv1\0\n";
const FORMAT: &str = "GANN";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Object,
    Scene,
    Simplified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Config {
    views: usize,
    gripper: GripperModel,
    mu_grid: MuGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    keep_views: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Segment {
    object_id: String,
    point_count: usize,
    rotation: [f64; 9],
    translation: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Block {
    name: String,
    dtype: String,
    count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: Kind,
    endianness: String,
    id: String,
    config: Config,
    /// `[P, V, A, D]`; for simplified files `V` is the kept view count.
    shape: [usize; 4],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    segments: Vec<Segment>,
    blocks: Vec<Block>,
}

fn block(name: &str, dtype: &str, count: usize) -> Block {
    Block {
        name: name.into(),
        dtype: dtype.into(),
        count,
    }
}

fn dtype_size(dtype: &str) -> Result<usize> {
    match dtype {
        "f32" | "u32" => Ok(4),
        "u8" => Ok(1),
        other => Err(Error::format(FORMAT, format!("unknown dtype {other}"))),
    }
}

fn put_f32(buf: &mut Vec<u8>, values: impl IntoIterator<Item = f32>) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_points(buf: &mut Vec<u8>, points: &[Vec3]) {
    put_f32(buf, points.iter().flat_map(|p| [p.x as f32, p.y as f32, p.z as f32]));
}

fn assemble(header: &Header, payload: Vec<u8>) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(16 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

fn header(kind: Kind, id: &str, config: Config, shape: [usize; 4], blocks: Vec<Block>) -> Header {
    Header {
        format: FORMAT.into(),
        version: 1,
        kind,
        endianness: "little".into(),
        id: id.into(),
        config,
        shape,
        segments: Vec::new(),
        blocks,
    }
}

pub fn encode_object(t: &AnnotationTensor) -> Result<Vec<u8>> {
    t.validate()?;
    let (p, v, a, d) = t.shape();
    let n = t.scores.len();
    let h = header(
        Kind::Object,
        &t.object_id,
        Config {
            views: v,
            gripper: t.gripper.clone(),
            mu_grid: t.mu_grid.clone(),
            keep_views: None,
        },
        [p, v, a, d],
        vec![
            block("grasp_points", "f32", 3 * p),
            block("scores", "f32", n),
            block("widths", "f32", n),
        ],
    );
    let mut payload = Vec::with_capacity(4 * (3 * p + 2 * n));
    put_points(&mut payload, &t.grasp_points);
    put_f32(&mut payload, t.scores.iter().copied());
    put_f32(&mut payload, t.widths.iter().copied());
    assemble(&h, payload)
}

pub fn encode_scene(c: &SceneCandidates) -> Result<Vec<u8>> {
    c.validate()?;
    let (p, v, a, d) = c.shape();
    let n = c.len();
    let mut h = header(
        Kind::Scene,
        &c.source_id,
        Config {
            views: v,
            gripper: c.gripper.clone(),
            mu_grid: c.mu_grid.clone(),
            keep_views: None,
        },
        [p, v, a, d],
        vec![
            block("object_points", "f32", 3 * p),
            block("scores", "f32", n),
            block("widths", "f32", n),
            block("collided", "u8", n),
        ],
    );
    h.segments = c
        .segments
        .iter()
        .map(|s| Segment {
            object_id: s.object_id.clone(),
            point_count: s.point_count,
            rotation: s.pose.rotation_row_major(),
            translation: [s.pose.translation.x, s.pose.translation.y, s.pose.translation.z],
        })
        .collect();
    let mut payload = Vec::with_capacity(4 * 3 * p + 9 * n);
    put_points(&mut payload, &c.object_points);
    put_f32(&mut payload, c.scores.iter().copied());
    put_f32(&mut payload, c.widths.iter().copied());
    payload.extend(c.collided.iter().map(|&f| f as u8));
    assemble(&h, payload)
}

pub fn encode_simplified(s: &SimplifiedAnnotation) -> Result<Vec<u8>> {
    s.validate()?;
    let p = s.points.len();
    let k = s.views_per_point();
    let m = s.per_view();
    let n = p * k * m;
    let h = header(
        Kind::Simplified,
        &s.provenance,
        Config {
            views: s.view_count,
            gripper: s.gripper.clone(),
            mu_grid: s.mu_grid.clone(),
            keep_views: Some(s.keep_views),
        },
        [p, k, s.gripper.angle_count, s.gripper.depth_grid.len()],
        vec![
            block("source_index", "u32", p),
            block("grasp_points", "f32", 3 * p),
            block("view_index", "u32", p * k),
            block("scores", "f32", n),
            block("widths", "f32", n),
        ],
    );
    let mut payload = Vec::new();
    for pt in &s.points {
        payload.extend_from_slice(&(pt.source_index as u32).to_le_bytes());
    }
    let points: Vec<Vec3> = s.points.iter().map(|pt| pt.point).collect();
    put_points(&mut payload, &points);
    for pt in &s.points {
        for &v in &pt.views {
            payload.extend_from_slice(&(v as u32).to_le_bytes());
        }
    }
    put_f32(&mut payload, s.points.iter().flat_map(|pt| pt.scores.iter().copied()));
    put_f32(&mut payload, s.points.iter().flat_map(|pt| pt.widths.iter().copied()));
    assemble(&h, payload)
}

/// Any decoded GANN file.
#[derive(Clone, Debug, PartialEq)]
pub enum Gann {
    Object(AnnotationTensor),
    Scene(SceneCandidates),
    Simplified(SimplifiedAnnotation),
}

impl Gann {
    pub fn kind(&self) -> Kind {
        match self {
            Gann::Object(_) => Kind::Object,
            Gann::Scene(_) => Kind::Scene,
            Gann::Simplified(_) => Kind::Simplified,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        match self {
            Gann::Object(t) => encode_object(t),
            Gann::Scene(c) => encode_scene(c),
            Gann::Simplified(s) => encode_simplified(s),
        }
    }
}

struct Blocks<'a> {
    data: &'a [u8],
    blocks: Vec<Block>,
    next: usize,
}

impl<'a> Blocks<'a> {
    fn take(&mut self, name: &str, dtype: &str, count: usize) -> Result<&'a [u8]> {
        let b = self
            .blocks
            .get(self.next)
            .ok_or_else(|| Error::format(FORMAT, format!("missing block {name}")))?;
        if b.name != name || b.dtype != dtype || b.count != count {
            return Err(Error::format(
                FORMAT,
                format!("expected block {name}:{dtype}×{count}, found {}:{}×{}", b.name, b.dtype, b.count),
            ));
        }
        self.next += 1;
        let bytes = count * dtype_size(dtype)?;
        if self.data.len() < bytes {
            return Err(Error::format(FORMAT, format!("block {name} is truncated")));
        }
        let (head, rest) = self.data.split_at(bytes);
        self.data = rest;
        Ok(head)
    }

    fn f32s(&mut self, name: &str, count: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(name, "f32", count)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn u32s(&mut self, name: &str, count: usize) -> Result<Vec<usize>> {
        Ok(self
            .take(name, "u32", count)?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect())
    }

    fn points(&mut self, name: &str, count: usize) -> Result<Vec<Vec3>> {
        Ok(self
            .f32s(name, 3 * count)?
            .chunks_exact(3)
            .map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if !self.data.is_empty() || self.next != self.blocks.len() {
            return Err(Error::format(FORMAT, "unexpected trailing payload"));
        }
        Ok(())
    }
}

fn checked_product(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n <= isize::MAX as usize / 16)
        .ok_or_else(|| Error::format(FORMAT, "shape is too large"))
}

pub fn decode(bytes: &[u8]) -> Result<Gann> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::format(FORMAT, "missing GANN v1 magic"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let len = usize::try_from(len)
        .ok()
        .filter(|&l| l <= bytes.len() - 16)
        .ok_or_else(|| Error::format(FORMAT, "header length exceeds file size"))?;
    let header: Header = serde_json::from_slice(&bytes[16..16 + len])
        .map_err(|e| Error::format(FORMAT, format!("bad header: {e}")))?;
    if header.format != FORMAT || header.version != 1 || header.endianness != "little" {
        return Err(Error::format(FORMAT, "unsupported format, version or endianness"));
    }
    header.config.gripper.validate()?;
    let [p, v, a, d] = header.shape;
    if a != header.config.gripper.angle_count || d != header.config.gripper.depth_grid.len() {
        return Err(Error::Invariant("shape disagrees with the gripper".into()));
    }
    let n = checked_product(&[p, v, a, d])?;
    checked_product(&[3, p])?;
    let mut blocks = Blocks {
        data: &bytes[16 + len..],
        blocks: header.blocks.clone(),
        next: 0,
    };
    let cfg = &header.config;
    let out = match header.kind {
        Kind::Object => {
            if v != cfg.views {
                return Err(Error::Invariant("object shape disagrees with view count".into()));
            }
            let grasp_points = blocks.points("grasp_points", p)?;
            let scores = blocks.f32s("scores", n)?;
            let widths = blocks.f32s("widths", n)?;
            blocks.finish()?;
            let t = AnnotationTensor {
                object_id: header.id,
                grasp_points,
                scores,
                widths,
                view_sphere: sample_view_sphere(cfg.views)?,
                gripper: cfg.gripper.clone(),
                mu_grid: cfg.mu_grid.clone(),
            };
            t.validate()?;
            Gann::Object(t)
        }
        Kind::Scene => {
            if v != cfg.views {
                return Err(Error::Invariant("scene shape disagrees with view count".into()));
            }
            let object_points = blocks.points("object_points", p)?;
            let scores = blocks.f32s("scores", n)?;
            let widths = blocks.f32s("widths", n)?;
            let flags = blocks.take("collided", "u8", n)?;
            blocks.finish()?;
            if flags.iter().any(|&f| f > 1) {
                return Err(Error::Invariant("collision flag is not 0 or 1".into()));
            }
            let sphere = if cfg.views > 0 {
                sample_view_sphere(cfg.views)?.views().to_vec()
            } else {
                Vec::new()
            };
            let mut segments = Vec::new();
            let mut grasp_points = Vec::with_capacity(p);
            for s in &header.segments {
                let pose = RigidPose::from_row_major(&s.rotation, &s.translation)
                    .map_err(|e| Error::Invariant(e.to_string()))?;
                let first = grasp_points.len();
                let end = first
                    .checked_add(s.point_count)
                    .filter(|&e| e <= p)
                    .ok_or_else(|| Error::Invariant("segments exceed the point count".into()))?;
                grasp_points.extend(object_points[first..end].iter().map(|q| pose.apply(q)));
                let (views, angles) = world_views(&pose, &sphere, &cfg.gripper)?;
                segments.push(SceneSegment {
                    object_id: s.object_id.clone(),
                    pose,
                    first_point: first,
                    point_count: s.point_count,
                    views,
                    angles,
                });
            }
            if grasp_points.len() != p {
                return Err(Error::Invariant("segments do not cover the grasp points".into()));
            }
            let c = SceneCandidates {
                source_id: header.id,
                gripper: cfg.gripper.clone(),
                mu_grid: cfg.mu_grid.clone(),
                view_count: cfg.views,
                segments,
                object_points,
                grasp_points,
                scores,
                widths,
                collided: flags.iter().map(|&f| f == 1).collect(),
            };
            c.validate()?;
            Gann::Scene(c)
        }
        Kind::Simplified => {
            let keep = cfg
                .keep_views
                .ok_or_else(|| Error::format(FORMAT, "simplified header lacks keep_views"))?;
            if v != keep.min(cfg.views) {
                return Err(Error::Invariant("kept view count disagrees with keep_views".into()));
            }
            let m = a * d;
            let source = blocks.u32s("source_index", p)?;
            let points = blocks.points("grasp_points", p)?;
            let views = blocks.u32s("view_index", p * v)?;
            let scores = blocks.f32s("scores", n)?;
            let widths = blocks.f32s("widths", n)?;
            blocks.finish()?;
            let points = (0..p)
                .map(|i| SimplifiedPoint {
                    source_index: source[i],
                    point: points[i],
                    views: views[i * v..(i + 1) * v].to_vec(),
                    scores: scores[i * v * m..(i + 1) * v * m].to_vec(),
                    widths: widths[i * v * m..(i + 1) * v * m].to_vec(),
                })
                .collect();
            let s = SimplifiedAnnotation {
                provenance: header.id,
                view_count: cfg.views,
                keep_views: keep,
                gripper: cfg.gripper.clone(),
                mu_grid: cfg.mu_grid.clone(),
                points,
            };
            s.validate()?;
            Gann::Simplified(s)
        }
    };
    Ok(out)
}

pub fn write_file(path: &Path, g: &Gann) -> Result<()> {
    let bytes = g.encode()?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Gann> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}
