//! Dense object-level grasp annotation.
//!
//! Every grasp point gets a `V × A × D` grid of candidates (views × in-plane
//! angles × depths). Each candidate gets a collision-free width fitted to the
//! surface caught between the fingers and an analytic force-closure score
//! from a friction sweep.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{CloudIndex, PointCloud};
use crate::contact::{self, score_from_friction};
use crate::error::{Error, Result};
use crate::geometry::{
    rotation_from_view_angle, round_to_f32, sample_view_sphere, tangent_frame, GraspFrame, GraspPose,
    GripperModel, Vec3, ViewSphere,
};
use crate::mesh::TriMesh;

/// Strictly increasing, positive friction coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MuGrid(Vec<f64>);

impl MuGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty()
            || values.iter().any(|m| !(m.is_finite() && *m > 0.0))
            || values.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::invalid(format!(
                "friction grid must be positive and strictly increasing, got {values:?}"
            )));
        }
        Ok(MuGrid(values))
    }

    pub fn single(mu: f64) -> Result<Self> {
        Self::new(vec![mu])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl Default for MuGrid {
    fn default() -> Self {
        MuGrid(vec![0.2, 0.4, 0.6, 0.8, 1.0, 1.2])
    }
}

impl TryFrom<Vec<f64>> for MuGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        MuGrid::new(v)
    }
}

impl From<MuGrid> for Vec<f64> {
    fn from(m: MuGrid) -> Self {
        m.0
    }
}

/// Dense surface sample (with outward normals) of one object.
#[derive(Clone, Debug)]
pub struct ObjectModel {
    pub id: String,
    pub surface: PointCloud,
    pub mesh: Option<TriMesh>,
}

impl ObjectModel {
    pub fn new(id: impl Into<String>, surface: PointCloud, mesh: Option<TriMesh>) -> Result<Self> {
        let obj = ObjectModel {
            id: id.into(),
            surface,
            mesh,
        };
        obj.validate()?;
        Ok(obj)
    }

    pub fn validate(&self) -> Result<()> {
        if self.surface.is_empty() {
            return Err(Error::invalid(format!("object {} has an empty surface", self.id)));
        }
        if self.surface.normals.is_none() {
            return Err(Error::invalid(format!("object {} has no normals", self.id)));
        }
        self.surface.validate()
    }

    fn normals(&self) -> &[Vec3] {
        self.surface.normals.as_deref().unwrap_or(&[])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationConfig {
    pub views: usize,
    pub gripper: GripperModel,
    pub mu_grid: MuGrid,
    /// Voxel edge used to pick grasp points from the surface.
    pub voxel: f64,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        AnnotationConfig {
            views: 300,
            gripper: GripperModel::default(),
            mu_grid: MuGrid::default(),
            voxel: 0.01,
        }
    }
}

impl AnnotationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.views == 0 {
            return Err(Error::invalid("view count must be at least 1"));
        }
        if !(self.voxel.is_finite() && self.voxel > 0.0) {
            return Err(Error::invalid("voxel size must be positive"));
        }
        self.gripper.validate()
    }
}

/// Scores and widths over `points × views × angles × depths`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationTensor {
    pub object_id: String,
    pub grasp_points: Vec<Vec3>,
    pub scores: Vec<f32>,
    pub widths: Vec<f32>,
    pub view_sphere: ViewSphere,
    pub gripper: GripperModel,
    pub mu_grid: MuGrid,
}

impl AnnotationTensor {
    /// `(P, V, A, D)`.
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (
            self.grasp_points.len(),
            self.view_sphere.len(),
            self.gripper.angle_count,
            self.gripper.depth_grid.len(),
        )
    }

    pub fn candidates_per_point(&self) -> usize {
        let (_, v, a, d) = self.shape();
        v * a * d
    }

    pub fn index(&self, p: usize, v: usize, a: usize, d: usize) -> usize {
        let (_, nv, na, nd) = self.shape();
        ((p * nv + v) * na + a) * nd + d
    }

    pub fn pose(&self, p: usize, v: usize, a: usize, d: usize) -> GraspPose {
        let i = self.index(p, v, a, d);
        GraspPose {
            point: self.grasp_points[p],
            view: self.view_sphere.views()[v],
            angle: self.gripper.angles()[a],
            depth: self.gripper.depth_grid[d],
            width: self.widths[i] as f64,
            score: self.scores[i] as f64,
        }
    }

    pub fn positives(&self) -> usize {
        self.scores.iter().filter(|&&s| s > 0.0).count()
    }

    pub fn validate(&self) -> Result<()> {
        let (p, v, a, d) = self.shape();
        let n = p * v * a * d;
        if self.scores.len() != n || self.widths.len() != n {
            return Err(Error::Invariant(format!(
                "tensor payload has {} scores / {} widths for shape {p}×{v}×{a}×{d}",
                self.scores.len(),
                self.widths.len()
            )));
        }
        if self.scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::Invariant("score outside [0, 1]".into()));
        }
        let max_w = self.gripper.max_width as f32;
        if self.widths.iter().any(|w| !(0.0..=max_w).contains(w)) {
            return Err(Error::Invariant("width outside [0, max_width]".into()));
        }
        Ok(())
    }
}

/// One surface sample per occupied voxel: the sample nearest to the voxel
/// centroid (lowest index on ties), in voxel-key order.
pub fn sample_grasp_points(obj: &ObjectModel, voxel: f64) -> Result<Vec<Vec3>> {
    if obj.surface.is_empty() {
        return Err(Error::invalid(format!("object {} has an empty surface", obj.id)));
    }
    if !(voxel.is_finite() && voxel > 0.0) {
        return Err(Error::invalid("voxel size must be positive"));
    }
    let mut cells: BTreeMap<(i64, i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, p) in obj.surface.points.iter().enumerate() {
        let key = (
            (p.x / voxel).floor() as i64,
            (p.y / voxel).floor() as i64,
            (p.z / voxel).floor() as i64,
        );
        cells.entry(key).or_default().push(i);
    }
    let pts = &obj.surface.points;
    Ok(cells
        .values()
        .map(|ids| {
            let centroid: Vec3 = ids.iter().map(|&i| pts[i]).sum::<Vec3>() / ids.len() as f64;
            let best = ids
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    (pts[a] - centroid)
                        .norm_squared()
                        .total_cmp(&(pts[b] - centroid).norm_squared())
                        .then(a.cmp(&b))
                })
                .unwrap();
            pts[best]
        })
        .collect())
}

/// Contacts of `g` against a surface sample and its force-closure score.
///
/// The score is `1.1 − μ_min` clipped to `[0, 1]`, with `μ_min` the smallest
/// friction on the grid at which both contacts hold; 0 when none holds or the
/// closing region catches no contact pair.
pub fn score_grasp_on(
    surface: &PointCloud,
    g: &GraspPose,
    gripper: &GripperModel,
    mu_grid: &MuGrid,
) -> Result<(f64, Option<(Vec3, Vec3)>)> {
    let normals = surface
        .normals
        .as_deref()
        .ok_or_else(|| Error::invalid("surface has no normals"))?;
    let frame = GraspFrame::from_pose(g)?;
    let local: Vec<Vec3> = surface.points.iter().map(|q| frame.to_local(q)).collect();
    let Some((i, j)) = contact::closing_contacts(&local, gripper, g.depth, g.width) else {
        return Ok((0.0, None));
    };
    let n1 = frame.to_local_vector(&normals[i]);
    let n2 = frame.to_local_vector(&normals[j]);
    let score = contact::min_friction(&n1, &n2, mu_grid.values()).map_or(0.0, score_from_friction);
    Ok((score, Some((surface.points[i], surface.points[j]))))
}

pub fn score_grasp(
    obj: &ObjectModel,
    g: &GraspPose,
    gripper: &GripperModel,
    mu_grid: &MuGrid,
) -> Result<(f64, Option<(Vec3, Vec3)>)> {
    score_grasp_on(&obj.surface, g, gripper, mu_grid)
}

/// Smallest collision-free width enclosing the surface caught between the
/// fully opened fingers, or `None` for empty grasps, objects wider than the
/// gripper and finger/palm interpenetration.
pub fn adjust_width(obj: &ObjectModel, g: &GraspPose, gripper: &GripperModel) -> Result<Option<f64>> {
    if g.width > gripper.max_width {
        return Err(Error::invalid("grasp width exceeds the gripper maximum"));
    }
    let frame = GraspFrame::from_pose(g)?;
    let local: Vec<Vec3> = obj.surface.points.iter().map(|q| frame.to_local(q)).collect();
    Ok(contact::collision_free_width(&local, gripper, g.depth))
}

pub fn annotate_object(obj: &ObjectModel, cfg: &AnnotationConfig) -> Result<AnnotationTensor> {
    cfg.validate()?;
    obj.validate()?;
    let points = sample_grasp_points(obj, cfg.voxel)?;
    let views = sample_view_sphere(cfg.views)?;
    annotate_points(obj, points, views, cfg)
}

/// Annotates explicit grasp points against explicit views. Points are first
/// rounded to single precision, the precision they are stored at.
pub fn annotate_points(
    obj: &ObjectModel,
    points: Vec<Vec3>,
    views: ViewSphere,
    cfg: &AnnotationConfig,
) -> Result<AnnotationTensor> {
    cfg.gripper.validate()?;
    obj.validate()?;
    let points: Vec<Vec3> = points.iter().map(round_to_f32).collect();
    let index = CloudIndex::new(&obj.surface, (cfg.gripper.reach() / 4.0).max(1e-3))?;
    let per_point: Vec<(Vec<f32>, Vec<f32>)> = points
        .par_iter()
        .map(|p| annotate_point(obj, &index, p, &views, cfg))
        .collect::<Result<_>>()?;
    let mut scores = Vec::with_capacity(points.len() * views.len() * cfg.gripper.candidates_per_view());
    let mut widths = Vec::with_capacity(scores.capacity());
    for (s, w) in per_point {
        scores.extend(s);
        widths.extend(w);
    }
    let tensor = AnnotationTensor {
        object_id: obj.id.clone(),
        grasp_points: points,
        scores,
        widths,
        view_sphere: views,
        gripper: cfg.gripper.clone(),
        mu_grid: cfg.mu_grid.clone(),
    };
    tensor.validate()?;
    Ok(tensor)
}

fn annotate_point(
    obj: &ObjectModel,
    index: &CloudIndex,
    p: &Vec3,
    views: &ViewSphere,
    cfg: &AnnotationConfig,
) -> Result<(Vec<f32>, Vec<f32>)> {
    let gripper = &cfg.gripper;
    let angles = gripper.angles();
    let n = views.len() * gripper.candidates_per_view();
    let mut scores = Vec::with_capacity(n);
    let mut widths = Vec::with_capacity(n);

    let nearby = index.within(p, gripper.reach());
    let (x_lo, x_hi) = x_extent(gripper);
    let radial = gripper.max_width / 2.0 + gripper.finger_thickness;
    let radial2 = radial * radial + (gripper.finger_height / 2.0).powi(2) + 1e-6;
    let pts = &obj.surface.points;
    let normals = obj.normals();

    let mut subset: Vec<usize> = Vec::with_capacity(nearby.len());
    let mut local: Vec<Vec3> = Vec::with_capacity(nearby.len());
    for view in views.views() {
        // conservative pre-filter; exact tests happen in the gripper frame
        let (t0, b0) = tangent_frame(view);
        subset.clear();
        subset.extend(nearby.iter().copied().filter(|&i| {
            let d = pts[i] - p;
            let x = d.dot(view);
            let (a, b) = (d.dot(&t0), d.dot(&b0));
            x >= x_lo - 1e-6 && x <= x_hi + 1e-6 && a * a + b * b <= radial2
        }));
        for &angle in &angles {
            let frame = GraspFrame::new(*p, rotation_from_view_angle(view, angle)?);
            local.clear();
            local.extend(subset.iter().map(|&i| frame.to_local(&pts[i])));
            for &depth in &gripper.depth_grid {
                let (s, w) = evaluate_candidate(&local, &subset, normals, &frame, gripper, depth, &cfg.mu_grid);
                scores.push(s);
                widths.push(w);
            }
        }
    }
    Ok((scores, widths))
}

fn x_extent(g: &GripperModel) -> (f64, f64) {
    let dmin = g.depth_grid.first().copied().unwrap_or(0.0);
    let dmax = g.depth_grid.last().copied().unwrap_or(0.0);
    (dmin - g.finger_length - g.base_depth, dmax)
}

/// Width fitting followed by force-closure scoring of one candidate.
/// `local[k]` is surface sample `ids[k]` in the gripper frame.
fn evaluate_candidate(
    local: &[Vec3],
    ids: &[usize],
    normals: &[Vec3],
    frame: &GraspFrame,
    gripper: &GripperModel,
    depth: f64,
    mu_grid: &MuGrid,
) -> (f32, f32) {
    let Some(width) = contact::collision_free_width(local, gripper, depth) else {
        return (0.0, 0.0);
    };
    let Some((i, j)) = contact::closing_contacts(local, gripper, depth, width) else {
        return (0.0, width as f32);
    };
    let n1 = frame.to_local_vector(&normals[ids[i]]);
    let n2 = frame.to_local_vector(&normals[ids[j]]);
    let score = contact::min_friction(&n1, &n2, mu_grid.values()).map_or(0.0, score_from_friction);
    (score as f32, width as f32)
}

/// Reference evaluation of a single candidate against the full surface,
/// as `annotate_object` defines it: fitted width, then score at that width.
pub fn evaluate_grasp(
    obj: &ObjectModel,
    g: &GraspPose,
    gripper: &GripperModel,
    mu_grid: &MuGrid,
) -> Result<(f64, f64)> {
    let probe = GraspPose {
        width: gripper.max_width,
        ..g.clone()
    };
    let Some(width) = adjust_width(obj, &probe, gripper)? else {
        return Ok((0.0, 0.0));
    };
    let scored = GraspPose { width, ..g.clone() };
    let (score, _) = score_grasp(obj, &scored, gripper, mu_grid)?;
    Ok((score, width))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use std::f64::consts::PI;

    #[test]
    fn mu_grid_validation() {
        assert!(MuGrid::new(vec![]).is_err());
        assert!(MuGrid::new(vec![0.4, 0.2]).is_err());
        assert!(MuGrid::new(vec![0.0, 0.2]).is_err());
        assert_eq!(MuGrid::default().values().len(), 6);
    }

    #[test]
    fn grasp_points_on_unit_cube_match_occupancy() {
        let cube = shapes::cuboid("cube", Vec3::new(1.0, 1.0, 1.0), 0.05);
        let pts = sample_grasp_points(&cube, 0.5).unwrap();
        let mut occupied = std::collections::HashSet::new();
        for p in &cube.surface.points {
            occupied.insert(((p.x / 0.5).floor() as i64, (p.y / 0.5).floor() as i64, (p.z / 0.5).floor() as i64));
        }
        assert_eq!(pts.len(), occupied.len());
        assert!(pts.len() <= 24);
        for p in &pts {
            assert!(cube.surface.points.contains(p));
        }
    }

    #[test]
    fn oversized_voxel_gives_one_point() {
        let cube = shapes::cuboid("cube", Vec3::new(0.1, 0.1, 0.1), 0.01);
        // shift so the whole cube sits inside one voxel
        let shifted = ObjectModel::new(
            "c",
            cube.surface.transformed(&crate::geometry::RigidPose {
                rotation: crate::geometry::Mat3::identity(),
                translation: Vec3::repeat(0.5),
            }),
            None,
        )
        .unwrap();
        assert_eq!(sample_grasp_points(&shifted, 2.0).unwrap().len(), 1);
    }

    #[test]
    fn sphere_grasp_points_cover_octants() {
        let r = 0.04;
        let ball = shapes::sphere("ball", r, 0.002);
        let pts = sample_grasp_points(&ball, r / 4.0).unwrap();
        let mut octants = [false; 8];
        for p in &pts {
            let o = (p.x >= 0.0) as usize | ((p.y >= 0.0) as usize) << 1 | ((p.z >= 0.0) as usize) << 2;
            octants[o] = true;
        }
        assert!(octants.iter().all(|&o| o));
    }

    #[test]
    fn empty_surface_is_rejected() {
        let obj = ObjectModel {
            id: "none".into(),
            surface: PointCloud::default(),
            mesh: None,
        };
        assert!(sample_grasp_points(&obj, 0.01).is_err());
    }

    #[test]
    fn free_space_grasp_scores_zero() {
        let cube = shapes::cuboid("cube", Vec3::new(0.03, 0.03, 0.03), 0.002);
        let g = GraspPose {
            point: Vec3::new(1.0, 1.0, 1.0),
            view: Vec3::z(),
            angle: 0.0,
            depth: 0.02,
            width: 0.08,
            score: 0.0,
        };
        let gripper = GripperModel::default();
        assert_eq!(score_grasp(&cube, &g, &gripper, &MuGrid::default()).unwrap(), (0.0, None));
        assert_eq!(adjust_width(&cube, &g, &gripper).unwrap(), None);
    }

    #[test]
    fn narrow_box_width_is_span_plus_clearance() {
        // 3 cm across y, approached from the top, closing along y
        let gripper = GripperModel::default();
        let obj = shapes::cuboid("box", Vec3::new(0.05, 0.03, 0.08), 0.002);
        let g = GraspPose {
            point: Vec3::new(0.0, 0.0, 0.04),
            view: -Vec3::z(),
            angle: 0.0,
            depth: 0.02,
            width: 0.08,
            score: 0.0,
        };
        // closing axis must be ±y for this check
        let r = g.rotation().unwrap();
        let closing = r.column(1).into_owned();
        let g = if closing.y.abs() > 0.99 {
            g
        } else {
            GraspPose { angle: PI / 2.0, ..g }
        };
        assert!(g.rotation().unwrap().column(1).y.abs() > 0.99);
        let w = adjust_width(&obj, &g, &gripper).unwrap().unwrap();
        assert!((w - (0.03 + contact::WIDTH_CLEARANCE)).abs() < 1e-9, "width {w}");
    }

    #[test]
    fn wide_box_cannot_be_grasped() {
        let gripper = GripperModel::default();
        let obj = shapes::cuboid("box", Vec3::new(0.12, 0.12, 0.05), 0.002);
        for angle in gripper.angles() {
            let g = GraspPose {
                point: Vec3::new(0.0, 0.0, 0.025),
                view: -Vec3::z(),
                angle,
                depth: 0.02,
                width: 0.08,
                score: 0.0,
            };
            assert_eq!(adjust_width(&obj, &g, &gripper).unwrap(), None);
        }
    }

    #[test]
    fn tiny_grid_shape() {
        let obj = shapes::cuboid("box", Vec3::new(0.04, 0.03, 0.05), 0.002);
        let cfg = AnnotationConfig {
            views: 1,
            gripper: GripperModel {
                angle_count: 1,
                depth_grid: vec![0.02],
                ..Default::default()
            },
            voxel: 0.02,
            ..Default::default()
        };
        let t = annotate_object(&obj, &cfg).unwrap();
        let (p, v, a, d) = t.shape();
        assert_eq!((v, a, d), (1, 1, 1));
        assert_eq!(t.scores.len(), p);
    }
}
