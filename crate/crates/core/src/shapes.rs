//! Synthetic primitives with dense surface samples and triangle meshes.
//!
//! Planar faces are sampled at cell centres so no sample sits on an edge and
//! every sample carries the normal of exactly one face.

use crate::annotate::ObjectModel;
use crate::cloud::PointCloud;
use crate::geometry::Vec3;
use crate::mesh::TriMesh;

struct Face {
    origin: Vec3,
    u: Vec3,
    w: Vec3,
    normal: Vec3,
}

/// Samples the parallelogram `origin + s·u + t·w`, `s, t ∈ [0, 1]`, keeping
/// cells whose centre satisfies `keep(s, t)`.
fn sample_face(
    face: &Face,
    spacing: f64,
    keep: impl Fn(f64, f64) -> bool,
    points: &mut Vec<Vec3>,
    normals: &mut Vec<Vec3>,
) {
    let nu = (face.u.norm() / spacing).ceil().max(1.0) as usize;
    let nw = (face.w.norm() / spacing).ceil().max(1.0) as usize;
    for i in 0..nu {
        for j in 0..nw {
            let s = (i as f64 + 0.5) / nu as f64;
            let t = (j as f64 + 0.5) / nw as f64;
            if keep(s, t) {
                points.push(face.origin + face.u * s + face.w * t);
                normals.push(face.normal);
            }
        }
    }
}

/// Reorders polygons of a convex solid so their normals face outward.
fn orient_outward(verts: &[Vec3], polys: &mut [Vec<u32>]) {
    let centre: Vec3 = verts.iter().sum::<Vec3>() / verts.len() as f64;
    for poly in polys.iter_mut() {
        let [a, b, c] = [poly[0], poly[1], poly[2]].map(|i| verts[i as usize]);
        let face_centre: Vec3 =
            poly.iter().map(|&i| verts[i as usize]).sum::<Vec3>() / poly.len() as f64;
        if (b - a).cross(&(c - a)).dot(&(face_centre - centre)) < 0.0 {
            poly.reverse();
        }
    }
}

fn object(id: &str, points: Vec<Vec3>, normals: Vec<Vec3>, mesh: TriMesh) -> ObjectModel {
    let surface = PointCloud::with_normals(points, normals).expect("primitive normals are unit");
    ObjectModel::new(id, surface, Some(mesh)).expect("primitive surface is non-empty")
}

/// Axis-aligned box centred at the origin with full extents `size`.
pub fn cuboid(id: &str, size: Vec3, spacing: f64) -> ObjectModel {
    let h = size / 2.0;
    let corners: Vec<Vec3> = (0..8)
        .map(|k| {
            Vec3::new(
                if k & 1 == 0 { -h.x } else { h.x },
                if k & 2 == 0 { -h.y } else { h.y },
                if k & 4 == 0 { -h.z } else { h.z },
            )
        })
        .collect();
    let c = |k: usize| corners[k];
    let faces = [
        // (origin corner, u corner, w corner, normal)
        (0, 2, 4, -Vec3::x()),
        (1, 5, 3, Vec3::x()),
        (0, 4, 1, -Vec3::y()),
        (2, 3, 6, Vec3::y()),
        (0, 1, 2, -Vec3::z()),
        (4, 6, 5, Vec3::z()),
    ];
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut polys = Vec::new();
    for &(o, u, w, n) in &faces {
        let face = Face {
            origin: c(o),
            u: c(u) - c(o),
            w: c(w) - c(o),
            normal: n,
        };
        sample_face(&face, spacing, |_, _| true, &mut points, &mut normals);
        let far = u | w;
        polys.push(vec![o as u32, u as u32, far as u32, w as u32]);
    }
    orient_outward(&corners, &mut polys);
    let mesh = TriMesh::from_polygons(corners, &polys).expect("valid box faces");
    object(id, points, normals, mesh)
}

/// Triangular prism along z (`|z| ≤ height/2`). The cross-section has its
/// base at `x = −depth/2` spanning `y ∈ [−half_base, half_base]` and its
/// apex at `(depth/2, 0)`.
pub fn wedge(id: &str, depth: f64, half_base: f64, height: f64, spacing: f64) -> ObjectModel {
    let hz = height / 2.0;
    let b0 = Vec3::new(-depth / 2.0, -half_base, 0.0);
    let b1 = Vec3::new(-depth / 2.0, half_base, 0.0);
    let apex = Vec3::new(depth / 2.0, 0.0, 0.0);
    let up = Vec3::new(0.0, 0.0, hz);
    let lower_n = Vec3::new(half_base, -depth, 0.0).normalize();
    let upper_n = Vec3::new(half_base, depth, 0.0).normalize();
    let rects = [
        (b0 - up, b1 - b0, -Vec3::x()),
        (b0 - up, apex - b0, lower_n),
        (b1 - up, apex - b1, upper_n),
    ];
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (origin, u, n) in rects {
        let face = Face {
            origin,
            u,
            w: up * 2.0,
            normal: n,
        };
        sample_face(&face, spacing, |_, _| true, &mut points, &mut normals);
    }
    // caps: triangle b0, b1, apex; cells kept when inside the triangle
    for (z, n) in [(-hz, -Vec3::z()), (hz, Vec3::z())] {
        let face = Face {
            origin: b0 + Vec3::new(0.0, 0.0, z),
            u: b1 - b0,
            w: apex - b0,
            normal: n,
        };
        sample_face(&face, spacing, |s, t| s + t <= 1.0, &mut points, &mut normals);
    }
    let verts = vec![b0 - up, b1 - up, apex - up, b0 + up, b1 + up, apex + up];
    let mut polys = vec![
        vec![0, 3, 4, 1],
        vec![0, 2, 5, 3],
        vec![1, 4, 5, 2],
        vec![0, 1, 2],
        vec![3, 5, 4],
    ];
    orient_outward(&verts, &mut polys);
    let mesh = TriMesh::from_polygons(verts, &polys).expect("valid wedge faces");
    object(id, points, normals, mesh)
}

/// Sphere centred at the origin, sampled on a Fibonacci lattice.
pub fn sphere(id: &str, radius: f64, spacing: f64) -> ObjectModel {
    let area = 4.0 * std::f64::consts::PI * radius * radius;
    let n = ((area / (spacing * spacing)).ceil() as usize).max(4);
    let dirs = crate::geometry::sample_view_sphere(n).expect("n ≥ 4");
    let normals: Vec<Vec3> = dirs.views().to_vec();
    let points = normals.iter().map(|d| d * radius).collect();

    let (rings, segs) = (24usize, 48usize);
    let mut verts = Vec::new();
    for i in 0..=rings {
        let phi = std::f64::consts::PI * i as f64 / rings as f64;
        for j in 0..segs {
            let th = 2.0 * std::f64::consts::PI * j as f64 / segs as f64;
            verts.push(Vec3::new(phi.sin() * th.cos(), phi.sin() * th.sin(), phi.cos()) * radius);
        }
    }
    let mut polys = Vec::new();
    for i in 0..rings {
        for j in 0..segs {
            let a = (i * segs + j) as u32;
            let b = (i * segs + (j + 1) % segs) as u32;
            let c = ((i + 1) * segs + (j + 1) % segs) as u32;
            let d = ((i + 1) * segs + j) as u32;
            polys.push(vec![a, d, c]);
            polys.push(vec![a, c, b]);
        }
    }
    let mesh = TriMesh::from_polygons(verts, &polys).expect("valid sphere faces");
    object(id, points, normals, mesh)
}

/// Horizontal square `|x|, |y| ≤ half_extent` at `z = height`, normal +z.
pub fn table(half_extent: f64, height: f64, spacing: f64) -> (PointCloud, TriMesh) {
    let face = Face {
        origin: Vec3::new(-half_extent, -half_extent, height),
        u: Vec3::new(2.0 * half_extent, 0.0, 0.0),
        w: Vec3::new(0.0, 2.0 * half_extent, 0.0),
        normal: Vec3::z(),
    };
    let mut points = Vec::new();
    let mut normals = Vec::new();
    sample_face(&face, spacing, |_, _| true, &mut points, &mut normals);
    let cloud = PointCloud::with_normals(points, normals).expect("unit normals");
    let e = half_extent;
    let mesh = TriMesh::from_polygons(
        vec![
            Vec3::new(-e, -e, height),
            Vec3::new(e, -e, height),
            Vec3::new(e, e, height),
            Vec3::new(-e, e, height),
        ],
        &[vec![0, 1, 2, 3]],
    )
    .expect("valid quad");
    (cloud, mesh)
}
