use crate::error::{Error, Result};
use crate::geometry::{RigidPose, Vec3};

/// Triangle mesh used for depth rendering.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
}

impl TriMesh {
    /// Fan-triangulates polygon faces.
    pub fn from_polygons(vertices: Vec<Vec3>, polygons: &[Vec<u32>]) -> Result<Self> {
        let mut faces = Vec::new();
        for poly in polygons {
            if poly.len() < 3 {
                return Err(Error::invalid("polygon with fewer than 3 vertices"));
            }
            if poly.iter().any(|&i| i as usize >= vertices.len()) {
                return Err(Error::invalid("face index out of range"));
            }
            for k in 1..poly.len() - 1 {
                faces.push([poly[0], poly[k], poly[k + 1]]);
            }
        }
        Ok(TriMesh { vertices, faces })
    }

    pub fn transformed(&self, pose: &RigidPose) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| pose.apply(v)).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Smallest positive ray parameter `t` with `origin + t·dir` on the mesh.
    pub fn ray_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let mut best: Option<f64> = None;
        for f in &self.faces {
            let [a, b, c] = f.map(|i| self.vertices[i as usize]);
            if let Some(t) = ray_triangle(origin, dir, &a, &b, &c) {
                if best.is_none_or(|bt| t < bt) {
                    best = Some(t);
                }
            }
        }
        best
    }
}

// Möller–Trumbore, two-sided
fn ray_triangle(o: &Vec3, d: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-15 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - a;
    let u = s.dot(&p) * inv;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 1e-9).then_some(t)
}
