use graspkit::annotate::{AnnotationTensor, MuGrid};
use graspkit::geometry::{sample_view_sphere, GripperModel, RigidPose, Vec3};
use graspkit::scene::{project_annotations, SceneCandidates, ScenePose};
use graspkit::simplify::{compression_stats, simplify, simplify_with, SimplifiedAnnotation};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random candidates with roughly `density` positives.
fn random_candidates(points: usize, views: usize, density: f64, seed: u64) -> SceneCandidates {
    let gripper = GripperModel {
        angle_count: 3,
        depth_grid: vec![0.01, 0.03],
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = points * views * gripper.candidates_per_view();
    let scores: Vec<f32> = (0..n)
        .map(|_| if rng.random_bool(density) { [0.1f32, 0.3, 0.5, 0.7, 0.9][rng.random_range(0..5)] } else { 0.0 })
        .collect();
    let widths = scores.iter().map(|&s| if s > 0.0 { 0.04 } else { 0.0 }).collect();
    let t = AnnotationTensor {
        object_id: "o".into(),
        grasp_points: (0..points).map(|i| Vec3::new(i as f64 * 0.01, 0.0, 0.0)).collect(),
        scores,
        widths,
        view_sphere: sample_view_sphere(views).unwrap(),
        gripper,
        mu_grid: MuGrid::default(),
    };
    project_annotations("rand", &[ScenePose::new("o", RigidPose::identity()).unwrap()], &[t]).unwrap()
}

/// Independent simplification: count, full sort, truncate, copy.
fn oracle(c: &SceneCandidates, keep: usize) -> Vec<(usize, Vec<usize>, Vec<f32>, Vec<f32>)> {
    let (np, nv, na, nd) = c.shape();
    let m = na * nd;
    let mut out = Vec::new();
    for p in 0..np {
        let counts: Vec<usize> = (0..nv)
            .map(|v| (0..m).filter(|&j| c.scores[(p * nv + v) * m + j] > 0.0).count())
            .collect();
        if counts.iter().sum::<usize>() == 0 {
            continue;
        }
        let mut views: Vec<usize> = (0..nv).collect();
        views.sort_by_key(|&v| (std::cmp::Reverse(counts[v]), v));
        views.truncate(keep);
        let mut scores = Vec::new();
        let mut widths = Vec::new();
        for &v in &views {
            scores.extend_from_slice(&c.scores[(p * nv + v) * m..(p * nv + v + 1) * m]);
            widths.extend_from_slice(&c.widths[(p * nv + v) * m..(p * nv + v + 1) * m]);
        }
        out.push((p, views, scores, widths));
    }
    out
}

fn flatten(s: &SimplifiedAnnotation) -> Vec<(usize, Vec<usize>, Vec<f32>, Vec<f32>)> {
    s.points
        .iter()
        .map(|p| (p.source_index, p.views.clone(), p.scores.clone(), p.widths.clone()))
        .collect()
}

#[test]
fn full_scale_views_reduce_candidates_by_four_fifths() {
    let c = random_candidates(20, 300, 0.01, 4);
    let s = simplify(&c).unwrap();
    s.validate().unwrap();
    assert_eq!(flatten(&s), oracle(&c, 60));
    let stats = compression_stats(&c, &s).unwrap();
    assert!(stats.candidate_reduction >= 0.8, "{stats:?}");
    assert!(stats.storage_reduction > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simplify_matches_sort_filter_oracle(
        points in 0usize..8, views in 1usize..40, keep in 1usize..70,
        density in 0.0f64..0.3, seed in any::<u64>()
    ) {
        let c = random_candidates(points, views, density, seed);
        let s = simplify_with(&c, keep).unwrap();
        s.validate().unwrap();
        prop_assert_eq!(flatten(&s), oracle(&c, keep));
        for p in &s.points {
            prop_assert_eq!(p.views.len(), keep.min(views));
            prop_assert!(p.scores.iter().any(|&x| x > 0.0));
        }
    }

    /// Simplifying again with the same budget changes nothing.
    #[test]
    fn simplify_is_idempotent(points in 1usize..6, views in 1usize..30, keep in 1usize..20, seed in any::<u64>()) {
        let c = random_candidates(points, views, 0.1, seed);
        let s = simplify_with(&c, keep).unwrap();
        prop_assert_eq!(s.simplify(keep).unwrap(), s.clone());
        prop_assert_eq!(s.simplify(keep + 5).unwrap(), s);
    }

    /// Kept candidates plus dropped candidates account for the input.
    #[test]
    fn candidate_counts_add_up(points in 0usize..6, views in 1usize..30, keep in 1usize..20, seed in any::<u64>()) {
        let c = random_candidates(points, views, 0.05, seed);
        let s = simplify_with(&c, keep).unwrap();
        let m = c.candidates_per_point() / views;
        let retained = s.points.len();
        prop_assert_eq!(s.candidate_count(), retained * keep.min(views) * m);
        let stats = compression_stats(&c, &s).unwrap();
        prop_assert_eq!(stats.candidates_before, c.len());
        prop_assert_eq!(stats.candidates_after, s.candidate_count());
        prop_assert!(s.positives() <= c.positives());
        if keep >= views {
            prop_assert_eq!(s.positives(), c.positives());
        }
    }
}
