//! `scene.json`: object models, their annotations and poses, an optional
//! table, the camera and an optional observed depth map. Relative paths are
//! resolved against the file's directory.

use std::path::{Path, PathBuf};

use graspkit::annotate::{AnnotationTensor, ObjectModel};
use graspkit::cloud::PointCloud;
use graspkit::error::{Error, Result};
use graspkit::geometry::{CameraIntrinsics, RigidPose, Vec3};
use graspkit::io::{gann, ply};
use graspkit::mesh::TriMesh;
use graspkit::scene::{Camera, Environment, SceneGroundTruth, SceneObject, ScenePose};
use graspkit::shapes;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub scene_id: String,
    #[serde(default)]
    pub objects: Vec<ObjectEntry>,
    #[serde(default)]
    pub table: Option<TableEntry>,
    pub camera: CameraEntry,
    #[serde(default)]
    pub depth: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectEntry {
    pub id: String,
    pub model: PathBuf,
    /// Render mesh; defaults to the faces of `model`, if any.
    #[serde(default)]
    pub mesh: Option<PathBuf>,
    pub annotation: PathBuf,
    pub rotation: Vec<f64>,
    pub translation: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    pub half_extent: f64,
    pub height: f64,
    pub spacing: f64,
}

/// Either an explicit camera-to-world pose or a look-at triple.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraEntry {
    pub intrinsics: CameraIntrinsics,
    #[serde(default)]
    pub rotation: Option<Vec<f64>>,
    #[serde(default)]
    pub translation: Option<Vec<f64>>,
    #[serde(default)]
    pub eye: Option<[f64; 3]>,
    #[serde(default)]
    pub target: Option<[f64; 3]>,
    #[serde(default)]
    pub up: Option<[f64; 3]>,
}

impl CameraEntry {
    fn camera(&self) -> Result<Camera> {
        match (&self.rotation, &self.translation, self.eye, self.target) {
            (Some(r), Some(t), None, None) => Ok(Camera {
                intrinsics: self.intrinsics,
                pose: RigidPose::from_row_major(r, t)?,
            }),
            (None, None, Some(e), Some(t)) => {
                let up = self.up.unwrap_or([0.0, 0.0, 1.0]);
                Camera::look_at(self.intrinsics, Vec3::from(e), Vec3::from(t), Vec3::from(up))
            }
            _ => Err(Error::InvalidArgument(
                "camera needs rotation and translation, or eye and target".into(),
            )),
        }
    }
}

pub struct LoadedScene {
    pub ground_truth: SceneGroundTruth,
    pub depth: Option<PathBuf>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn missing(path: &Path) -> Error {
    Error::InvalidArgument(format!("referenced file {} does not exist", path.display()))
}

fn load_mesh(path: &Path) -> Result<TriMesh> {
    if !path.exists() {
        return Err(missing(path));
    }
    let data = ply::read_ply_file(path)?;
    if data.faces.is_empty() {
        return Err(Error::InvalidArgument(format!("{} has no faces", path.display())));
    }
    TriMesh::from_polygons(data.cloud.points, &data.faces)
}

/// Reads a PLY surface with normals. The mesh comes from `mesh_path`, or
/// from the surface file's own faces.
pub fn load_model(id: &str, path: &Path, mesh_path: Option<&Path>) -> Result<ObjectModel> {
    if !path.exists() {
        return Err(missing(path));
    }
    let data = ply::read_ply_file(path)?;
    if data.cloud.normals.is_none() {
        return Err(Error::InvalidArgument(format!("{} has no normals", path.display())));
    }
    let mesh = if let Some(m) = mesh_path {
        Some(load_mesh(m)?)
    } else if data.faces.is_empty() {
        None
    } else {
        Some(TriMesh::from_polygons(data.cloud.points.clone(), &data.faces)?)
    };
    let surface = PointCloud {
        points: data.cloud.points,
        normals: data.cloud.normals,
        ..Default::default()
    };
    ObjectModel::new(id, surface, mesh)
}

pub fn load_annotation(path: &Path) -> Result<AnnotationTensor> {
    if !path.exists() {
        return Err(missing(path));
    }
    match gann::read_file(path)? {
        gann::Gann::Object(t) => Ok(t),
        other => Err(Error::InvalidArgument(format!(
            "{} holds a {:?} annotation, expected an object annotation",
            path.display(),
            other.kind()
        ))),
    }
}

pub fn load(path: &Path) -> Result<LoadedScene> {
    if !path.exists() {
        return Err(missing(path));
    }
    let file: SceneFile = serde_json::from_slice(&std::fs::read(path)?)
        .map_err(|e| Error::InvalidArgument(format!("bad scene file {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut objects = Vec::new();
    let mut annotations = Vec::new();
    for o in &file.objects {
        let mesh = o.mesh.as_ref().map(|m| resolve(base, m));
        let model = load_model(&o.id, &resolve(base, &o.model), mesh.as_deref())?;
        let annotation = load_annotation(&resolve(base, &o.annotation))?;
        if annotation.object_id != o.id {
            return Err(Error::InvalidArgument(format!(
                "annotation {} belongs to {}, not {}",
                o.annotation.display(),
                annotation.object_id,
                o.id
            )));
        }
        let pose = ScenePose::new(o.id.clone(), RigidPose::from_row_major(&o.rotation, &o.translation)?)?;
        objects.push(SceneObject { model, pose });
        annotations.push(annotation);
    }
    let environment = match &file.table {
        Some(t) => {
            let (cloud, mesh) = shapes::table(t.half_extent, t.height, t.spacing);
            Environment {
                cloud,
                mesh: Some(mesh),
            }
        }
        None => Environment::default(),
    };
    let camera = file.camera.camera()?;
    let ground_truth = SceneGroundTruth::build(&file.scene_id, objects, &annotations, environment, camera)?;
    Ok(LoadedScene {
        ground_truth,
        depth: file.depth.map(|d| resolve(base, &d)),
    })
}
