//! Annotation simplification.
//!
//! Grasp points without a single successful candidate are dropped. Each
//! survivor keeps only its best views, ranked by the fraction of successful
//! candidates at that view (ties by ascending view index). Kept entries are
//! copied, never recomputed.

use rayon::prelude::*;

use crate::annotate::MuGrid;
use crate::error::{Error, Result};
use crate::geometry::{round_to_f32, GripperModel, Vec3};
use crate::io::gann;
use crate::scene::SceneCandidates;

pub const DEFAULT_KEEP_VIEWS: usize = 60;

#[derive(Clone, Debug, PartialEq)]
pub struct SimplifiedPoint {
    /// Index of the grasp point in the source candidate set.
    pub source_index: usize,
    /// World position, rounded to single precision.
    pub point: Vec3,
    /// Kept view indices, best first.
    pub views: Vec<usize>,
    /// `views.len() × A × D`, in `views` order.
    pub scores: Vec<f32>,
    pub widths: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimplifiedAnnotation {
    /// Id of the candidate set this was derived from.
    pub provenance: String,
    pub view_count: usize,
    pub keep_views: usize,
    pub gripper: GripperModel,
    pub mu_grid: MuGrid,
    pub points: Vec<SimplifiedPoint>,
}

/// Views ordered by descending positive count, ties by ascending index,
/// truncated to `keep`. `counts[j]` belongs to view `ids[j]`.
fn rank_views(ids: &[usize], counts: &[usize], keep: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(ids[a].cmp(&ids[b])));
    order.truncate(keep);
    order
}

fn positives(scores: &[f32]) -> usize {
    scores.iter().filter(|&&s| s > 0.0).count()
}

impl SimplifiedAnnotation {
    pub fn per_view(&self) -> usize {
        self.gripper.candidates_per_view()
    }

    /// Number of views every retained point keeps.
    pub fn views_per_point(&self) -> usize {
        self.keep_views.min(self.view_count)
    }

    pub fn candidate_count(&self) -> usize {
        self.points.iter().map(|p| p.scores.len()).sum()
    }

    pub fn positives(&self) -> usize {
        self.points.iter().map(|p| positives(&p.scores)).sum()
    }

    /// Simplifies an already simplified annotation; a fixed point when
    /// `keep ≥ keep_views`.
    pub fn simplify(&self, keep: usize) -> Result<SimplifiedAnnotation> {
        if keep == 0 {
            return Err(Error::invalid("must keep at least one view"));
        }
        let m = self.per_view();
        let points = self
            .points
            .iter()
            .filter(|p| positives(&p.scores) > 0)
            .map(|p| {
                let counts: Vec<usize> = p.scores.chunks(m).map(positives).collect();
                let order = rank_views(&p.views, &counts, keep);
                let mut out = SimplifiedPoint {
                    source_index: p.source_index,
                    point: p.point,
                    views: Vec::with_capacity(order.len()),
                    scores: Vec::with_capacity(order.len() * m),
                    widths: Vec::with_capacity(order.len() * m),
                };
                for j in order {
                    out.views.push(p.views[j]);
                    out.scores.extend_from_slice(&p.scores[j * m..(j + 1) * m]);
                    out.widths.extend_from_slice(&p.widths[j * m..(j + 1) * m]);
                }
                out
            })
            .collect();
        Ok(SimplifiedAnnotation {
            keep_views: keep.min(self.keep_views),
            points,
            ..self.clone()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.per_view();
        let k = self.views_per_point();
        let mut last: Option<usize> = None;
        for p in &self.points {
            if last.is_some_and(|l| l >= p.source_index) {
                return Err(Error::Invariant("source indices must be strictly increasing".into()));
            }
            last = Some(p.source_index);
            if p.views.len() != k || p.scores.len() != k * m || p.widths.len() != k * m {
                return Err(Error::Invariant(format!(
                    "point {} keeps {} views, expected {k}",
                    p.source_index,
                    p.views.len()
                )));
            }
            if p.views.iter().any(|&v| v >= self.view_count) {
                return Err(Error::Invariant("view index out of range".into()));
            }
            let mut seen = p.views.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != p.views.len() {
                return Err(Error::Invariant("duplicate view index".into()));
            }
            if positives(&p.scores) == 0 {
                return Err(Error::Invariant(format!(
                    "point {} has no positive candidate",
                    p.source_index
                )));
            }
            let counts: Vec<usize> = p.scores.chunks(m).map(positives).collect();
            let ordered = (1..counts.len()).all(|j| {
                counts[j - 1] > counts[j] || (counts[j - 1] == counts[j] && p.views[j - 1] < p.views[j])
            });
            if !ordered {
                return Err(Error::Invariant("views are not ranked by success rate".into()));
            }
            if p.scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
                return Err(Error::Invariant("score outside [0, 1]".into()));
            }
        }
        Ok(())
    }
}

pub fn simplify(candidates: &SceneCandidates) -> Result<SimplifiedAnnotation> {
    simplify_with(candidates, DEFAULT_KEEP_VIEWS)
}

/// Drops barren points and keeps the `keep` best views of the rest.
pub fn simplify_with(candidates: &SceneCandidates, keep: usize) -> Result<SimplifiedAnnotation> {
    if keep == 0 {
        return Err(Error::invalid("must keep at least one view"));
    }
    candidates.validate()?;
    let (np, nv, na, nd) = candidates.shape();
    let m = na * nd;
    let all_views: Vec<usize> = (0..nv).collect();
    let points: Vec<SimplifiedPoint> = (0..np)
        .into_par_iter()
        .filter_map(|p| {
            let block = &candidates.scores[p * nv * m..(p + 1) * nv * m];
            if positives(block) == 0 {
                return None;
            }
            let counts: Vec<usize> = block.chunks(m).map(positives).collect();
            let order = rank_views(&all_views, &counts, keep);
            let mut out = SimplifiedPoint {
                source_index: p,
                point: round_to_f32(&candidates.grasp_points[p]),
                views: order.clone(),
                scores: Vec::with_capacity(order.len() * m),
                widths: Vec::with_capacity(order.len() * m),
            };
            for v in order {
                let start = candidates.index(p, v, 0, 0);
                out.scores.extend_from_slice(&candidates.scores[start..start + m]);
                out.widths.extend_from_slice(&candidates.widths[start..start + m]);
            }
            Some(out)
        })
        .collect();
    Ok(SimplifiedAnnotation {
        provenance: candidates.source_id.clone(),
        view_count: nv,
        keep_views: keep,
        gripper: candidates.gripper.clone(),
        mu_grid: candidates.mu_grid.clone(),
        points,
    })
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct CompressionStats {
    pub candidates_before: usize,
    pub candidates_after: usize,
    pub bytes_before: usize,
    pub bytes_after: usize,
    pub candidate_reduction: f64,
    pub storage_reduction: f64,
    pub positive_ratio_before: f64,
}

fn reduction(before: usize, after: usize) -> f64 {
    if before == 0 {
        0.0
    } else {
        1.0 - after as f64 / before as f64
    }
}

/// Ratios from counted candidates and encoded container sizes.
pub fn compression_stats(before: &SceneCandidates, after: &SimplifiedAnnotation) -> Result<CompressionStats> {
    if before.source_id != after.provenance {
        return Err(Error::invalid(format!(
            "simplified annotation comes from {}, not {}",
            after.provenance, before.source_id
        )));
    }
    let bytes_before = gann::encode_scene(before)?.len();
    let bytes_after = gann::encode_simplified(after)?.len();
    let candidates_before = before.len();
    let candidates_after = after.candidate_count();
    Ok(CompressionStats {
        candidates_before,
        candidates_after,
        bytes_before,
        bytes_after,
        candidate_reduction: reduction(candidates_before, candidates_after),
        storage_reduction: reduction(bytes_before, bytes_after),
        positive_ratio_before: if candidates_before == 0 {
            0.0
        } else {
            before.positives() as f64 / candidates_before as f64
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidPose;
    use crate::scene::SceneSegment;

    pub(crate) fn synthetic(scores: Vec<f32>, points: usize, views: usize) -> SceneCandidates {
        let gripper = GripperModel {
            angle_count: 1,
            depth_grid: vec![0.02],
            ..Default::default()
        };
        let n = scores.len();
        assert_eq!(n, points * views);
        SceneCandidates {
            source_id: "syn".into(),
            gripper,
            mu_grid: MuGrid::default(),
            view_count: views,
            segments: vec![SceneSegment {
                object_id: "o".into(),
                pose: RigidPose::identity(),
                first_point: 0,
                point_count: points,
                views: vec![Vec3::z(); views],
                angles: vec![0.0; views],
            }],
            object_points: vec![Vec3::zeros(); points],
            grasp_points: (0..points).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect(),
            widths: scores.iter().map(|&s| if s > 0.0 { 0.03 } else { 0.0 }).collect(),
            scores,
            collided: vec![false; n],
        }
    }

    #[test]
    fn all_zero_gives_empty() {
        let c = synthetic(vec![0.0; 12], 3, 4);
        let s = simplify(&c).unwrap();
        assert!(s.points.is_empty());
        s.validate().unwrap();
    }

    #[test]
    fn unique_positive_view_ranks_first() {
        let mut scores = vec![0.0; 300];
        scores[7] = 0.5;
        let c = synthetic(scores, 1, 300);
        let s = simplify(&c).unwrap();
        assert_eq!(s.points.len(), 1);
        assert_eq!(s.points[0].views.len(), 60);
        assert_eq!(s.points[0].views[0], 7);
        assert_eq!(&s.points[0].views[1..4], &[0, 1, 2]);
        s.validate().unwrap();
    }

    #[test]
    fn few_views_keep_all() {
        let c = synthetic(vec![0.9, 0.1, 0.0, 0.0, 0.0, 0.3], 2, 3);
        let s = simplify(&c).unwrap();
        assert_eq!(s.points[0].views, vec![0, 1, 2]);
        assert_eq!(s.points[1].views, vec![2, 0, 1]);
        let stats = compression_stats(&c, &s).unwrap();
        assert_eq!(stats.candidate_reduction, 0.0);
        assert_eq!(stats.positive_ratio_before, 0.5);
    }

    #[test]
    fn provenance_mismatch_is_rejected() {
        let c = synthetic(vec![0.9, 0.0], 1, 2);
        let mut s = simplify(&c).unwrap();
        s.provenance = "other".into();
        assert!(compression_stats(&c, &s).is_err());
    }

    #[test]
    fn validate_catches_misordered_views() {
        let c = synthetic(vec![0.9, 0.0, 0.5, 0.5], 1, 4);
        let mut s = simplify(&c).unwrap();
        s.validate().unwrap();
        s.points[0].views.swap(0, 1);
        s.points[0].scores.swap(0, 1);
        assert!(s.validate().is_err());
    }
}
