#![allow(dead_code)]

use graspkit::annotate::{annotate_points, AnnotationConfig, AnnotationTensor, ObjectModel};
use graspkit::geometry::{sample_view_sphere, CameraIntrinsics, GripperModel, RigidPose, Vec3};
use graspkit::scene::{Camera, Environment, SceneGroundTruth, SceneObject, ScenePose};
use graspkit::shapes;

pub fn coarse_config(views: usize) -> AnnotationConfig {
    AnnotationConfig {
        views,
        gripper: GripperModel {
            angle_count: 6,
            depth_grid: vec![0.01, 0.02],
            ..Default::default()
        },
        voxel: 0.015,
        ..Default::default()
    }
}

pub fn annotate(obj: &ObjectModel, cfg: &AnnotationConfig) -> AnnotationTensor {
    let points = graspkit::annotate::sample_grasp_points(obj, cfg.voxel).unwrap();
    annotate_points(obj, points, sample_view_sphere(cfg.views).unwrap(), cfg).unwrap()
}

pub fn intrinsics(width: usize, height: usize, f: f64) -> CameraIntrinsics {
    CameraIntrinsics {
        fx: f,
        fy: f,
        cx: (width as f64 - 1.0) / 2.0,
        cy: (height as f64 - 1.0) / 2.0,
        width,
        height,
    }
}

pub fn overhead_camera(intr: CameraIntrinsics) -> Camera {
    Camera::look_at(intr, Vec3::new(0.1, 0.02, 0.45), Vec3::zeros(), Vec3::z()).unwrap()
}

/// Box, sphere and wedge resting on a table, well apart.
pub fn three_objects() -> Vec<(ObjectModel, RigidPose)> {
    vec![
        (
            shapes::cuboid("box", Vec3::new(0.05, 0.04, 0.06), 0.004),
            RigidPose::from_axis_angle(&Vec3::z(), 0.4, Vec3::new(-0.11, 0.0, 0.03)),
        ),
        (
            shapes::sphere("ball", 0.025, 0.004),
            RigidPose::new(nalgebra::Matrix3::identity(), Vec3::new(0.1, 0.08, 0.025)).unwrap(),
        ),
        (
            shapes::wedge("wedge", 0.04, 0.03, 0.04, 0.004),
            RigidPose::from_axis_angle(&Vec3::z(), -1.1, Vec3::new(0.07, -0.1, 0.02)),
        ),
    ]
}

pub fn build_scene(
    id: &str,
    objects: Vec<(ObjectModel, RigidPose)>,
    cfg: &AnnotationConfig,
    camera: Camera,
) -> SceneGroundTruth {
    let annotations: Vec<AnnotationTensor> = objects.iter().map(|(o, _)| annotate(o, cfg)).collect();
    let objects = objects
        .into_iter()
        .map(|(model, pose)| SceneObject {
            pose: ScenePose::new(model.id.clone(), pose).unwrap(),
            model,
        })
        .collect();
    let (cloud, mesh) = shapes::table(0.25, 0.0, 0.005);
    let env = Environment {
        cloud,
        mesh: Some(mesh),
    };
    SceneGroundTruth::build(id, objects, &annotations, env, camera).unwrap()
}
