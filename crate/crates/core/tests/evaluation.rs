mod common;

use common::{build_scene, coarse_config, intrinsics, overhead_camera, three_objects};
use graspkit::contact;
use graspkit::evaluate::{
    ap_from_judgments, average_precision, ground_truth_predictions, judge_grasp, propose_grasps, Prediction,
    PredictionSet, ProposalConfig, SceneJudge,
};
use graspkit::geometry::{GraspFrame, Vec3};
use graspkit::scene::{observed_cloud, render_supervision, SceneGroundTruth};
use proptest::prelude::*;
use std::sync::OnceLock;

fn scene() -> &'static SceneGroundTruth {
    static SCENE: OnceLock<SceneGroundTruth> = OnceLock::new();
    SCENE.get_or_init(|| build_scene("three", three_objects(), &coarse_config(16), overhead_camera(intrinsics(64, 48, 70.0))))
}

#[test]
fn ground_truth_top_fifty_scores_one_where_it_qualifies() {
    let s = scene();
    for &mu in s.candidates.mu_grid.values() {
        let preds = ground_truth_predictions(s, mu, 50).unwrap();
        assert_eq!(preds.len(), 50, "too few positives at {mu}");
        let report = average_precision(&preds, s, &s.candidates.mu_grid).unwrap();
        assert_eq!(report.ap_at(mu), Some(1.0), "mu {mu}");
    }
}

#[test]
fn colliding_predictions_score_zero() {
    let s = scene();
    let c = &s.candidates;
    let grasps: Vec<Prediction> = (0..c.len())
        .filter(|&i| c.collided[i] && c.widths[i] > 0.0)
        .take(50)
        .enumerate()
        .map(|(k, i)| {
            let (p, v, a, d) = c.unravel(i);
            Prediction { pose: c.pose(p, v, a, d), confidence: 1.0 - k as f64 * 0.01 }
        })
        .collect();
    assert_eq!(grasps.len(), 50);
    let report = average_precision(&PredictionSet::new("three", grasps).unwrap(), s, &c.mu_grid).unwrap();
    assert_eq!(report.ap, 0.0);
}

#[test]
fn judge_collision_matches_brute_force() {
    let s = scene();
    let judge = SceneJudge::new(s).unwrap();
    let c = &s.candidates;
    let cloud = s.scene_cloud();
    for i in (0..c.len()).step_by(97) {
        let (p, v, a, d) = c.unravel(i);
        let mut g = c.pose(p, v, a, d);
        if g.width == 0.0 {
            g.width = c.gripper.max_width;
        }
        let frame = GraspFrame::from_pose(&g).unwrap();
        let local: Vec<Vec3> = cloud.points.iter().map(|q| frame.to_local(q)).collect();
        let brute = contact::collides(&local, &c.gripper, g.depth, g.width);
        assert_eq!(judge.judge(&g).unwrap().collides, brute, "candidate {i}");
    }
}

#[test]
fn ap_is_non_decreasing_in_friction() {
    let s = scene();
    let depth = s.render_depth().unwrap();
    let targets = render_supervision(s, &depth).unwrap();
    let cloud = observed_cloud(&depth, &s.camera, &targets, 0.01).unwrap();
    let g = cloud.scalar("graspness").unwrap().to_vec();
    let preds = propose_grasps("three", &cloud, &g, &s.candidates.gripper, &ProposalConfig::default(), None).unwrap();
    assert!(!preds.is_empty());
    let again = propose_grasps("three", &cloud, &g, &s.candidates.gripper, &ProposalConfig::default(), None).unwrap();
    assert_eq!(preds, again);
    let report = average_precision(&preds, s, &s.candidates.mu_grid).unwrap();
    for w in report.ap_per_mu.windows(2) {
        assert!(w[0].ap <= w[1].ap, "{report:?}");
    }
    assert!(report.ap > 0.0, "{report:?}");
}

#[test]
fn single_grasp_judgment_agrees_with_the_judge() {
    let s = scene();
    let preds = ground_truth_predictions(s, 0.2, 5).unwrap();
    for p in preds.grasps() {
        assert!(judge_grasp(&p.pose, s, 0.2).unwrap());
    }
    assert!(judge_grasp(&preds.grasps()[0].pose, s, 0.0).is_err());
}

#[test]
fn empty_predictions_are_an_error() {
    let s = scene();
    assert!(average_precision(&PredictionSet::new("three", vec![]).unwrap(), s, &s.candidates.mu_grid).is_err());
}

proptest! {
    /// AP lies in [0, 1] and equals a direct mean of Precision@k.
    #[test]
    fn ap_matches_direct_precision_mean(j in proptest::collection::vec(any::<bool>(), 0..80)) {
        let ap = ap_from_judgments(&j, 50);
        let mut direct = 0.0;
        for k in 1..=50 {
            let hits = j.iter().take(k).filter(|&&b| b).count();
            direct += hits as f64 / k as f64;
        }
        prop_assert!((ap - direct / 50.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ap));
    }
}
