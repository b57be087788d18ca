//! Scene-level ground truth.
//!
//! Object annotations are carried into the world through each object's
//! pose, candidates whose gripper hits anything in the scene are zeroed, and
//! per-point graspness is rendered into image-space supervision targets.
//!
//! A world candidate keeps its object-frame score and width. Its view is the
//! rotated object view and its in-plane angle is re-derived from the rotated
//! gripper rotation, so [`SceneCandidates::pose`] rebuilds the same gripper
//! placement through [`rotation_from_view_angle`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotate::{AnnotationTensor, MuGrid, ObjectModel};
use crate::cloud::{estimate_normals, CloudIndex, HashGrid, PointCloud};
use crate::contact;
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::{
    rotation_from_view_angle, tangent_frame, view_angle_from_rotation, CameraIntrinsics,
    GraspFrame, GraspPose, GripperModel, Mat3, RigidPose, Vec3,
};
use crate::mesh::TriMesh;

/// Heatmap assignment radius around scene grasp points, meters.
pub const GRASPNESS_RADIUS: f64 = 0.005;
/// Object-mask radius around object surface samples, meters.
pub const OBJECT_MASK_RADIUS: f64 = 0.003;

/// Pose of one object instance in the world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenePose {
    pub object_id: String,
    pub pose: RigidPose,
}

impl ScenePose {
    pub fn new(object_id: impl Into<String>, pose: RigidPose) -> Result<Self> {
        let sp = ScenePose {
            object_id: object_id.into(),
            pose,
        };
        sp.validate()?;
        Ok(sp)
    }

    /// Orthonormality and `det = +1`, both within 1e-9.
    pub fn validate(&self) -> Result<()> {
        let r = &self.pose.rotation;
        let ortho = (r.transpose() * r - Mat3::identity()).abs().max();
        let det = r.determinant();
        if !(ortho <= 1e-9 && (det - 1.0).abs() <= 1e-9) {
            return Err(Error::invalid(format!(
                "pose of {} is not a rotation (|RᵀR−I|={ortho:e}, det={det})",
                self.object_id
            )));
        }
        if !self.pose.translation.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("pose translation must be finite"));
        }
        Ok(())
    }
}

/// Candidates contributed by one object instance.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSegment {
    pub object_id: String,
    pub pose: RigidPose,
    pub first_point: usize,
    pub point_count: usize,
    /// World approach directions, `V`.
    pub views: Vec<Vec3>,
    /// World in-plane angles, `V × A`.
    pub angles: Vec<f64>,
}

/// World-frame candidate grid, `points × views × angles × depths`.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneCandidates {
    pub source_id: String,
    pub gripper: GripperModel,
    pub mu_grid: MuGrid,
    pub view_count: usize,
    pub segments: Vec<SceneSegment>,
    /// Grasp points in their object frames.
    pub object_points: Vec<Vec3>,
    pub grasp_points: Vec<Vec3>,
    pub scores: Vec<f32>,
    pub widths: Vec<f32>,
    pub collided: Vec<bool>,
}

impl SceneCandidates {
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (
            self.grasp_points.len(),
            self.view_count,
            self.gripper.angle_count,
            self.gripper.depth_grid.len(),
        )
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn candidates_per_point(&self) -> usize {
        let (_, v, a, d) = self.shape();
        v * a * d
    }

    pub fn index(&self, p: usize, v: usize, a: usize, d: usize) -> usize {
        let (_, nv, na, nd) = self.shape();
        ((p * nv + v) * na + a) * nd + d
    }

    /// `(p, v, a, d)` of a flat index.
    pub fn unravel(&self, i: usize) -> (usize, usize, usize, usize) {
        let (_, nv, na, nd) = self.shape();
        let d = i % nd;
        let a = (i / nd) % na;
        let v = (i / (nd * na)) % nv;
        (i / (nd * na * nv), v, a, d)
    }

    pub fn segment_of(&self, p: usize) -> &SceneSegment {
        let k = self.segments.partition_point(|s| s.first_point + s.point_count <= p);
        &self.segments[k]
    }

    pub fn pose(&self, p: usize, v: usize, a: usize, d: usize) -> GraspPose {
        let seg = self.segment_of(p);
        let i = self.index(p, v, a, d);
        GraspPose {
            point: self.grasp_points[p],
            view: seg.views[v],
            angle: seg.angles[v * self.gripper.angle_count + a],
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
        if self.scores.len() != n || self.widths.len() != n || self.collided.len() != n {
            return Err(Error::Invariant("scene payload does not match its shape".into()));
        }
        if self.object_points.len() != p {
            return Err(Error::Invariant("object-frame point count differs".into()));
        }
        let mut next = 0;
        for s in &self.segments {
            if s.first_point != next || s.views.len() != v || s.angles.len() != v * a {
                return Err(Error::Invariant(format!("segment {} is malformed", s.object_id)));
            }
            next += s.point_count;
        }
        if next != p {
            return Err(Error::Invariant("segments do not cover the grasp points".into()));
        }
        if self.scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::Invariant("score outside [0, 1]".into()));
        }
        if self
            .scores
            .iter()
            .zip(&self.collided)
            .any(|(&s, &c)| c && s != 0.0)
        {
            return Err(Error::Invariant("collided candidate with non-zero score".into()));
        }
        Ok(())
    }
}

/// Carries object annotations into the world. `annotations` are looked up
/// by object id; every instance must have one, and all must share gripper,
/// view count and friction grid.
pub fn project_annotations(
    source_id: &str,
    poses: &[ScenePose],
    annotations: &[AnnotationTensor],
) -> Result<SceneCandidates> {
    let find = |id: &str| {
        annotations
            .iter()
            .find(|t| t.object_id == id)
            .ok_or_else(|| Error::invalid(format!("no annotation for object {id}")))
    };
    let mut reference: Option<&AnnotationTensor> = None;
    for sp in poses {
        sp.validate()?;
        let t = find(&sp.object_id)?;
        t.validate()?;
        if let Some(r) = reference {
            if r.gripper != t.gripper || r.view_sphere != t.view_sphere || r.mu_grid != t.mu_grid {
                return Err(Error::invalid(format!(
                    "annotation of {} uses a different configuration",
                    t.object_id
                )));
            }
        } else {
            reference = Some(t);
        }
    }
    let (gripper, mu_grid, view_count) = match reference.or(annotations.first()) {
        Some(t) => (t.gripper.clone(), t.mu_grid.clone(), t.view_sphere.len()),
        None => (GripperModel::default(), MuGrid::default(), 0),
    };

    let mut out = SceneCandidates {
        source_id: source_id.to_string(),
        gripper,
        mu_grid,
        view_count,
        segments: Vec::new(),
        object_points: Vec::new(),
        grasp_points: Vec::new(),
        scores: Vec::new(),
        widths: Vec::new(),
        collided: Vec::new(),
    };
    for sp in poses {
        let t = find(&sp.object_id)?;
        let pose = &sp.pose;
        let (views, angles) = world_views(pose, t.view_sphere.views(), &t.gripper)?;
        out.segments.push(SceneSegment {
            object_id: sp.object_id.clone(),
            pose: pose.clone(),
            first_point: out.grasp_points.len(),
            point_count: t.grasp_points.len(),
            views,
            angles,
        });
        out.object_points.extend_from_slice(&t.grasp_points);
        out.grasp_points
            .extend(t.grasp_points.iter().map(|p| pose.apply(p)));
        out.scores.extend_from_slice(&t.scores);
        out.widths.extend_from_slice(&t.widths);
        out.collided.resize(out.scores.len(), false);
    }
    Ok(out)
}

/// World approach directions (`V`) and in-plane angles (`V × A`) of object
/// views under `pose`.
pub(crate) fn world_views(
    pose: &RigidPose,
    views: &[Vec3],
    gripper: &GripperModel,
) -> Result<(Vec<Vec3>, Vec<f64>)> {
    let mut world_views = Vec::with_capacity(views.len());
    let mut angles = Vec::with_capacity(views.len() * gripper.angle_count);
    for v in views {
        world_views.push(pose.apply_vector(v));
        for a in gripper.angles() {
            let world = pose.rotation * rotation_from_view_angle(v, a)?;
            angles.push(view_angle_from_rotation(&world).1);
        }
    }
    Ok((world_views, angles))
}

/// Scene points near one grasp point, for repeated gripper tests.
pub struct CollisionProbe<'a> {
    points: &'a [Vec3],
    grid: HashGrid,
    gripper: GripperModel,
}

impl<'a> CollisionProbe<'a> {
    pub fn new(points: &'a [Vec3], gripper: &GripperModel) -> Result<Self> {
        Ok(CollisionProbe {
            points,
            grid: HashGrid::new(points, (gripper.reach() / 4.0).max(1e-3))?,
            gripper: gripper.clone(),
        })
    }

    /// Nearby points in the gripper frame; a superset of everything the
    /// fingers and palm can touch at `(depth, width)`.
    pub fn local_points(&self, frame: &GraspFrame, depth: f64, width: f64) -> Vec<Vec3> {
        self.local_indexed(frame, depth, width).1
    }

    /// [`Self::local_points`] together with their indices into the cloud.
    pub fn local_indexed(&self, frame: &GraspFrame, depth: f64, width: f64) -> (Vec<usize>, Vec<Vec3>) {
        let g = &self.gripper;
        let x = (depth - g.finger_length - g.base_depth).abs().max(depth.abs());
        let y = width / 2.0 + g.finger_thickness;
        let z = g.finger_height / 2.0;
        let radius = (x * x + y * y + z * z).sqrt() + 1e-6;
        let idx = self.grid.within(self.points, &frame.origin, radius);
        let local = idx.iter().map(|&i| frame.to_local(&self.points[i])).collect();
        (idx, local)
    }

    /// Whether fingers or palm at `(frame, depth, width)` contain a point.
    pub fn collides(&self, frame: &GraspFrame, depth: f64, width: f64) -> bool {
        contact::collides(&self.local_points(frame, depth, width), &self.gripper, depth, width)
    }

    /// Points inside fingers or palm.
    pub fn penetration(&self, frame: &GraspFrame, depth: f64, width: f64) -> usize {
        contact::penetration(&self.local_points(frame, depth, width), &self.gripper, depth, width)
    }
}

/// Zeroes every candidate whose fingers or palm contain a scene point and
/// flags it as collided.
pub fn cull_collisions(
    candidates: &SceneCandidates,
    scene_cloud: &PointCloud,
    gripper: &GripperModel,
) -> Result<SceneCandidates> {
    if scene_cloud.is_empty() {
        return Err(Error::invalid("scene cloud is empty"));
    }
    gripper.validate()?;
    let (p_count, nv, na, nd) = candidates.shape();
    let per_point = nv * na * nd;
    let pts = &scene_cloud.points;
    let grid = HashGrid::new(pts, (gripper.reach() / 4.0).max(1e-3))?;
    let max_w = gripper.max_width.max(
        candidates
            .widths
            .iter()
            .fold(0.0f64, |m, &w| m.max(w as f64)),
    );
    let wide = GripperModel {
        max_width: max_w,
        ..gripper.clone()
    };
    let reach = wide.reach();
    let (x_lo, x_hi) = (
        gripper.depth_grid[0] - gripper.finger_length - gripper.base_depth,
        gripper.depth_grid[nd - 1],
    );
    let radial = max_w / 2.0 + gripper.finger_thickness;
    let radial2 = radial * radial + (gripper.finger_height / 2.0).powi(2) + 1e-6;

    let flags: Vec<bool> = (0..p_count)
        .into_par_iter()
        .flat_map_iter(|p| {
            let seg = candidates.segment_of(p);
            let origin = candidates.grasp_points[p];
            let nearby = grid.within(pts, &origin, reach);
            let mut out = Vec::with_capacity(per_point);
            let mut local = Vec::new();
            for (v, view) in seg.views.iter().enumerate() {
                let (t0, b0) = tangent_frame(view);
                let subset: Vec<usize> = nearby
                    .iter()
                    .copied()
                    .filter(|&i| {
                        let d = pts[i] - origin;
                        let x = d.dot(view);
                        let (a, b) = (d.dot(&t0), d.dot(&b0));
                        x >= x_lo - 1e-6 && x <= x_hi + 1e-6 && a * a + b * b <= radial2
                    })
                    .collect();
                for a in 0..na {
                    let angle = seg.angles[v * na + a];
                    let rot = rotation_from_view_angle(view, angle).expect("world views are unit");
                    let frame = GraspFrame::new(origin, rot);
                    local.clear();
                    local.extend(subset.iter().map(|&i| frame.to_local(&pts[i])));
                    for d in 0..nd {
                        let i = candidates.index(p, v, a, d);
                        let w = candidates.widths[i] as f64;
                        out.push(contact::collides(&local, gripper, gripper.depth_grid[d], w));
                    }
                }
            }
            out
        })
        .collect();

    let mut out = candidates.clone();
    for (i, &hit) in flags.iter().enumerate() {
        if hit {
            out.scores[i] = 0.0;
            out.collided[i] = true;
        }
    }
    Ok(out)
}

/// Per-point success rates.
#[derive(Clone, Debug, PartialEq)]
pub struct Graspness {
    /// Positive fraction of all `V·A·D` candidates at each point.
    pub point: Vec<f64>,
    /// Positive fraction of the `A·D` candidates at each view, per point.
    pub view: Vec<Vec<f64>>,
}

/// Graspness from a flat `points × views × per_view` score array.
pub fn compute_graspness(
    scores: &[f32],
    points: usize,
    views: usize,
    per_view: usize,
) -> Result<Graspness> {
    if scores.len() != points * views * per_view {
        return Err(Error::invalid("score array does not match the grid shape"));
    }
    let mut point = Vec::with_capacity(points);
    let mut view = Vec::with_capacity(points);
    for block in scores.chunks((views * per_view).max(1)).take(points) {
        let counts: Vec<usize> = block
            .chunks(per_view.max(1))
            .map(|c| c.iter().filter(|&&s| s > 0.0).count())
            .collect();
        let total: usize = counts.iter().sum();
        point.push(total as f64 / (views * per_view) as f64);
        view.push(counts.iter().map(|&c| c as f64 / per_view as f64).collect());
    }
    // zero-sized grids
    point.resize(points, 0.0);
    view.resize(points, vec![0.0; views]);
    Ok(Graspness { point, view })
}

impl SceneCandidates {
    pub fn graspness(&self) -> Graspness {
        let (p, v, a, d) = self.shape();
        compute_graspness(&self.scores, p, v, a * d).expect("candidate grid is consistent")
    }
}

/// Pinhole camera with its optical frame (x right, y down, z forward)
/// placed in the world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    pub pose: RigidPose,
}

impl Camera {
    /// Camera at `eye` looking at `target`, image rows running along `−up`.
    pub fn look_at(intrinsics: CameraIntrinsics, eye: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let z = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("camera target coincides with the eye"))?;
        let x = z
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("camera up is parallel to the view direction"))?;
        let y = z.cross(&x);
        Ok(Camera {
            intrinsics,
            pose: RigidPose::new(Mat3::from_columns(&[x, y, z]), eye)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SceneObject {
    pub model: ObjectModel,
    pub pose: ScenePose,
}

/// Static geometry that is not annotated, e.g. a table.
#[derive(Clone, Debug, Default)]
pub struct Environment {
    pub cloud: PointCloud,
    pub mesh: Option<TriMesh>,
}

#[derive(Clone, Debug)]
pub struct SceneGroundTruth {
    pub scene_id: String,
    pub objects: Vec<SceneObject>,
    /// Object surfaces in the world, same order as `objects`.
    pub world_surfaces: Vec<PointCloud>,
    pub environment: Environment,
    pub candidates: SceneCandidates,
    pub camera: Camera,
    scene_cloud: PointCloud,
}

impl SceneGroundTruth {
    /// Projects the annotations and culls them against every object surface
    /// plus the environment.
    pub fn build(
        scene_id: &str,
        objects: Vec<SceneObject>,
        annotations: &[AnnotationTensor],
        environment: Environment,
        camera: Camera,
    ) -> Result<Self> {
        camera.intrinsics.validate()?;
        for o in &objects {
            o.model.validate()?;
            if o.model.id != o.pose.object_id {
                return Err(Error::invalid(format!(
                    "pose refers to {} but the model is {}",
                    o.pose.object_id, o.model.id
                )));
            }
        }
        let poses: Vec<ScenePose> = objects.iter().map(|o| o.pose.clone()).collect();
        let projected = project_annotations(scene_id, &poses, annotations)?;
        let world_surfaces: Vec<PointCloud> = objects
            .iter()
            .map(|o| o.model.surface.transformed(&o.pose.pose))
            .collect();
        let mut parts: Vec<&PointCloud> = world_surfaces.iter().collect();
        parts.push(&environment.cloud);
        let mut scene_cloud = PointCloud::concat(&parts);
        scene_cloud.normals = None;
        let candidates = if projected.is_empty() || scene_cloud.is_empty() {
            projected
        } else {
            let gripper = projected.gripper.clone();
            cull_collisions(&projected, &scene_cloud, &gripper)?
        };
        Ok(SceneGroundTruth {
            scene_id: scene_id.to_string(),
            objects,
            world_surfaces,
            environment,
            candidates,
            camera,
            scene_cloud,
        })
    }

    /// Every object surface sample followed by the environment samples.
    pub fn scene_cloud(&self) -> &PointCloud {
        &self.scene_cloud
    }

    /// Ray-cast depth of object meshes and the environment mesh.
    pub fn render_depth(&self) -> Result<DepthMap> {
        let mut meshes = Vec::new();
        for o in &self.objects {
            let mesh = o.model.mesh.as_ref().ok_or_else(|| {
                Error::invalid(format!("object {} has no mesh to render", o.model.id))
            })?;
            meshes.push(mesh.transformed(&o.pose.pose));
        }
        if let Some(m) = &self.environment.mesh {
            meshes.push(m.clone());
        }
        render_depth(&meshes, &self.camera)
    }
}

struct Bounded {
    mesh: TriMesh,
    lo: Vec3,
    hi: Vec3,
}

fn ray_hits_box(o: &Vec3, d: &Vec3, lo: &Vec3, hi: &Vec3) -> bool {
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k] < lo[k] - 1e-9 || o[k] > hi[k] + 1e-9 {
                return false;
            }
            continue;
        }
        let a = (lo[k] - 1e-9 - o[k]) / d[k];
        let b = (hi[k] + 1e-9 - o[k]) / d[k];
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    t0 <= t1
}

/// Depth image, millimeters, of the nearest surface along each pixel ray.
pub fn render_depth(meshes: &[TriMesh], camera: &Camera) -> Result<DepthMap> {
    let intr = camera.intrinsics;
    intr.validate()?;
    let bounded: Vec<Bounded> = meshes
        .iter()
        .filter(|m| !m.vertices.is_empty())
        .map(|m| {
            let lo = m.vertices.iter().fold(Vec3::repeat(f64::INFINITY), |a, v| a.inf(v));
            let hi = m.vertices.iter().fold(Vec3::repeat(f64::NEG_INFINITY), |a, v| a.sup(v));
            Bounded {
                mesh: m.clone(),
                lo,
                hi,
            }
        })
        .collect();
    let origin = camera.pose.translation;
    let values: Vec<f32> = (0..intr.width * intr.height)
        .into_par_iter()
        .map(|i| {
            let ray = intr.unproject(i % intr.width, i / intr.width, 1.0);
            let dir = camera.pose.apply_vector(&ray);
            let t = bounded
                .iter()
                .filter(|b| ray_hits_box(&origin, &dir, &b.lo, &b.hi))
                .filter_map(|b| b.mesh.ray_hit(&origin, &dir))
                .fold(f64::INFINITY, f64::min);
            // the ray's optical-axis component is 1, so t is the depth
            if t.is_finite() {
                (t * 1000.0) as f32
            } else {
                0.0
            }
        })
        .collect();
    DepthMap::new(intr, values)
}

/// Image-space supervision for one frame plus per-point view graspness.
#[derive(Clone, Debug, PartialEq)]
pub struct SupervisionTargets {
    pub width: usize,
    pub height: usize,
    pub object_mask: Vec<bool>,
    pub heatmap: Vec<f64>,
    /// Per scene grasp point, `V` values.
    pub view_graspness: Vec<Vec<f64>>,
}

/// Index of the point nearest to `q` within `radius`, lowest index on ties.
fn nearest_within(points: &[Vec3], grid: &HashGrid, q: &Vec3, radius: f64) -> Option<usize> {
    grid.within(points, q, radius)
        .into_iter()
        .map(|i| (i, (points[i] - q).norm_squared()))
        .fold(None, |best: Option<(usize, f64)>, (i, d2)| match best {
            Some((_, bd)) if bd <= d2 => best,
            _ => Some((i, d2)),
        })
        .map(|(i, _)| i)
}

/// Unprojects `depth` through the scene camera; each valid pixel takes the
/// graspness of the nearest scene grasp point within [`GRASPNESS_RADIUS`]
/// and is marked as object when an object surface sample lies within
/// [`OBJECT_MASK_RADIUS`]. The heatmap is zero off the object mask.
pub fn render_supervision(scene: &SceneGroundTruth, depth: &DepthMap) -> Result<SupervisionTargets> {
    depth.intrinsics.validate()?;
    scene.camera.intrinsics.validate()?;
    if depth.width() != scene.camera.intrinsics.width || depth.height() != scene.camera.intrinsics.height {
        return Err(Error::invalid("depth map size differs from the scene camera"));
    }
    let graspness = scene.candidates.graspness();
    let gp = &scene.candidates.grasp_points;
    let grasp_grid = HashGrid::new(gp, GRASPNESS_RADIUS * 2.0)?;
    let surfaces: Vec<&PointCloud> = scene.world_surfaces.iter().collect();
    let objects = PointCloud::concat(&surfaces);
    let object_index = CloudIndex::new(&objects, OBJECT_MASK_RADIUS * 2.0)?;

    let w = depth.width();
    let (mask, heat): (Vec<bool>, Vec<f64>) = (0..w * depth.height())
        .into_par_iter()
        .map(|i| {
            let z = depth.values[i];
            if z <= 0.0 {
                return (false, 0.0);
            }
            let local = depth.intrinsics.unproject(i % w, i / w, z as f64 / 1000.0);
            let q = scene.camera.pose.apply(&local);
            let on_object = !object_index.within(&q, OBJECT_MASK_RADIUS).is_empty();
            if !on_object {
                return (false, 0.0);
            }
            let g = nearest_within(gp, &grasp_grid, &q, GRASPNESS_RADIUS)
                .map_or(0.0, |k| graspness.point[k]);
            (true, g)
        })
        .unzip();
    Ok(SupervisionTargets {
        width: w,
        height: depth.height(),
        object_mask: mask,
        heatmap: heat,
        view_graspness: graspness.view,
    })
}

/// Cloud seen through `depth` with normals facing the camera and a
/// `graspness` scalar read from the supervision heatmap.
pub fn observed_cloud(
    depth: &DepthMap,
    camera: &Camera,
    targets: &SupervisionTargets,
    normal_radius: f64,
) -> Result<PointCloud> {
    if targets.width != depth.width() || targets.height != depth.height() {
        return Err(Error::invalid("supervision size differs from the depth map"));
    }
    let (mut cloud, pixels) = depth.to_cloud(&camera.pose);
    if cloud.is_empty() {
        return Ok(cloud);
    }
    let normals = estimate_normals(&cloud, normal_radius, &camera.pose.translation)?;
    cloud.normals = Some(normals);
    let g = pixels.iter().map(|&(u, v)| targets.heatmap[v * targets.width + u]).collect();
    cloud.scalars.insert("graspness".into(), g);
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::{annotate_points, AnnotationConfig};
    use crate::geometry::sample_view_sphere;
    use crate::shapes;

    #[test]
    fn graspness_of_empty_grids() {
        let g = compute_graspness(&[], 0, 0, 48).unwrap();
        assert!(g.point.is_empty() && g.view.is_empty());
        let g = compute_graspness(&[], 2, 0, 48).unwrap();
        assert_eq!(g.view, vec![Vec::<f64>::new(); 2]);
    }

    fn small_cfg() -> AnnotationConfig {
        AnnotationConfig {
            views: 6,
            gripper: GripperModel {
                angle_count: 2,
                depth_grid: vec![0.01, 0.02],
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn boxed() -> (ObjectModel, AnnotationTensor) {
        let obj = shapes::cuboid("box", Vec3::new(0.04, 0.03, 0.05), 0.004);
        let cfg = small_cfg();
        let pts = vec![Vec3::new(0.0, 0.0, 0.025), Vec3::new(0.02, 0.0, 0.0)];
        let t = annotate_points(&obj, pts, sample_view_sphere(cfg.views).unwrap(), &cfg).unwrap();
        (obj, t)
    }

    #[test]
    fn identity_projection_keeps_everything() {
        let (_, t) = boxed();
        let sp = ScenePose::new("box", RigidPose::identity()).unwrap();
        let c = project_annotations("s", &[sp], std::slice::from_ref(&t)).unwrap();
        assert_eq!(c.grasp_points, t.grasp_points);
        assert_eq!(c.scores, t.scores);
        assert_eq!(c.widths, t.widths);
        assert_eq!(c.segments[0].views, t.view_sphere.views());
        for (k, a) in c.segments[0].angles.iter().enumerate() {
            let expected = t.gripper.angles()[k % 2];
            assert!((a - expected).abs() < 1e-12);
        }
        c.validate().unwrap();
    }

    #[test]
    fn translation_moves_points_only() {
        let (_, t) = boxed();
        let shift = Vec3::new(0.1, -0.2, 0.3);
        let sp = ScenePose::new(
            "box",
            RigidPose {
                rotation: Mat3::identity(),
                translation: shift,
            },
        )
        .unwrap();
        let c = project_annotations("s", &[sp], std::slice::from_ref(&t)).unwrap();
        for (w, o) in c.grasp_points.iter().zip(&t.grasp_points) {
            assert_eq!(*w, o + shift);
        }
        assert_eq!(c.segments[0].views, t.view_sphere.views());
    }

    #[test]
    fn unknown_object_is_rejected() {
        let (_, t) = boxed();
        let sp = ScenePose::new("mug", RigidPose::identity()).unwrap();
        assert!(project_annotations("s", &[sp], &[t]).is_err());
    }

    #[test]
    fn projected_pose_equals_rotated_gripper() {
        let (_, t) = boxed();
        let pose = RigidPose::from_axis_angle(&Vec3::new(0.3, -1.0, 0.4), 2.1, Vec3::new(0.2, 0.1, 0.0));
        let sp = ScenePose::new("box", pose.clone()).unwrap();
        let c = project_annotations("s", &[sp], std::slice::from_ref(&t)).unwrap();
        let (np, nv, na, nd) = c.shape();
        for p in 0..np {
            for v in 0..nv {
                for a in 0..na {
                    let world = c.pose(p, v, a, nd - 1).rotation().unwrap();
                    let object = t.pose(p, v, a, nd - 1).rotation().unwrap();
                    assert!((world - pose.rotation * object).abs().max() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn graspness_counts() {
        let scores = [0.9f32, 0.0, 0.5, 0.0, 0.0, 0.0, 0.1, 0.1];
        let g = compute_graspness(&scores, 2, 2, 2).unwrap();
        assert_eq!(g.point, vec![0.5, 0.5]);
        assert_eq!(g.view, vec![vec![0.5, 0.5], vec![0.0, 1.0]]);
        assert!(compute_graspness(&scores, 3, 2, 2).is_err());
    }

    #[test]
    fn culling_above_scene_changes_nothing() {
        let (_, t) = boxed();
        let sp = ScenePose::new("box", RigidPose::identity()).unwrap();
        let c = project_annotations("s", &[sp], std::slice::from_ref(&t)).unwrap();
        let far = PointCloud::new(vec![Vec3::new(5.0, 5.0, 5.0)]);
        let culled = cull_collisions(&c, &far, &c.gripper).unwrap();
        assert_eq!(culled.scores, c.scores);
        assert!(culled.collided.iter().all(|&f| !f));
        assert!(cull_collisions(&c, &PointCloud::default(), &c.gripper).is_err());
    }

    #[test]
    fn look_at_points_the_optical_axis() {
        let intr = CameraIntrinsics {
            fx: 100.0,
            fy: 100.0,
            cx: 32.0,
            cy: 24.0,
            width: 64,
            height: 48,
        };
        let cam = Camera::look_at(intr, Vec3::new(0.0, 0.0, 1.0), Vec3::zeros(), Vec3::y()).unwrap();
        let z = cam.pose.rotation.column(2).into_owned();
        assert!((z + Vec3::z()).norm() < 1e-12);
    }

    #[test]
    fn render_sees_table_at_camera_height() {
        let intr = CameraIntrinsics {
            fx: 80.0,
            fy: 80.0,
            cx: 16.0,
            cy: 12.0,
            width: 32,
            height: 24,
        };
        let cam = Camera::look_at(intr, Vec3::new(0.0, 0.0, 0.8), Vec3::zeros(), Vec3::y()).unwrap();
        let (_, mesh) = shapes::table(1.0, 0.0, 0.5);
        let d = render_depth(&[mesh], &cam).unwrap();
        assert!(d.values.iter().all(|&z| (z - 800.0).abs() < 1e-3));
    }
}
