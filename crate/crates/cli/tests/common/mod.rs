//! Fixtures shared by the CLI tests: primitive models on disk, a small
//! scene file and a runner for the binary.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use graspkit::annotate::ObjectModel;
use graspkit::cloud::PointCloud;
use graspkit::geometry::{CameraIntrinsics, Vec3};
use graspkit::io::ply::{self, PlyData, PlyEncoding};
use graspkit::shapes;
use serde_json::{json, Value};

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub summary: Value,
}

pub fn graspkit(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_graspkit"))
        .args(args)
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8(out.stdout).unwrap();
    let summary = serde_json::from_str(stdout.trim()).unwrap_or(Value::Null);
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout,
        summary,
    }
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes the surface samples (with normals) and the render mesh of `obj`.
pub fn write_model(dir: &Path, obj: &ObjectModel) -> (PathBuf, PathBuf) {
    let model = dir.join(format!("{}.ply", obj.id));
    let mesh_path = dir.join(format!("{}_mesh.ply", obj.id));
    ply::write_ply_file(
        &model,
        &PlyData {
            cloud: obj.surface.clone(),
            faces: Vec::new(),
        },
        PlyEncoding::BinaryLittleEndian,
    )
    .unwrap();
    let mesh = obj.mesh.as_ref().unwrap();
    ply::write_ply_file(
        &mesh_path,
        &PlyData {
            cloud: PointCloud::new(mesh.vertices.clone()),
            faces: mesh.faces.iter().map(|f| f.to_vec()).collect(),
        },
        PlyEncoding::Ascii,
    )
    .unwrap();
    (model, mesh_path)
}

pub fn small_box() -> ObjectModel {
    shapes::cuboid("box", Vec3::new(0.05, 0.04, 0.06), 0.004)
}

pub fn intrinsics() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 90.0,
        fy: 90.0,
        cx: 31.5,
        cy: 23.5,
        width: 64,
        height: 48,
    }
}

/// Config with a coarse annotation grid so scenes stay fast.
pub const SMALL_CONFIG: &str = "seed = 3\nkeep_views = 4\n\n[annotation]\nviews = 24\nvoxel = 0.015\n\n[annotation.gripper]\nangle_count = 6\ndepth_grid = [0.01, 0.02]\n\n[bank]\nk = 4\ndim = 32\nmodel_dim = 16\nheads = 2\nsamples = 64\n\n[proposal]\ntop_m = 8\n";

/// Annotates the small box and writes a one-box-on-a-table scene file.
pub fn box_scene(dir: &Path) -> PathBuf {
    let cfg = dir.join("small.toml");
    std::fs::write(&cfg, SMALL_CONFIG).unwrap();
    let (model, mesh) = write_model(dir, &small_box());
    let gann = dir.join("box.gann");
    let run = graspkit(&["annotate", s(&model), "--output", s(&gann), "--config", s(&cfg)]);
    assert_eq!(run.code, 0, "{}", run.stdout);
    let scene = json!({
        "scene_id": "box_scene",
        "objects": [{
            "id": "box",
            "model": "box.ply",
            "mesh": mesh.file_name().unwrap().to_str().unwrap(),
            "annotation": "box.gann",
            "rotation": [0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
            "translation": [0.0, 0.0, 0.03],
        }],
        "table": {"half_extent": 0.15, "height": 0.0, "spacing": 0.005},
        "camera": {"intrinsics": intrinsics(), "eye": [0.12, 0.0, 0.35], "target": [0.0, 0.0, 0.0], "up": [0.0, 0.0, 1.0]},
    });
    let path = dir.join("scene.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&scene).unwrap()).unwrap();
    path
}
