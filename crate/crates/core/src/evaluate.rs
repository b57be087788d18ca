//! Grasp judging, AP over a friction grid, and a geometric grasp proposer.
//!
//! A grasp counts as a success at friction `μ` when its gripper is free of
//! every scene point and its two contacts with the nearest object pass the
//! friction-cone test at `μ`. `AP_μ` is the mean of Precision@k for
//! `k = 1..=50` over the most confident predictions, and `AP` averages
//! `AP_μ` over the friction grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotate::MuGrid;
use crate::cloud::{CloudIndex, HashGrid, PointCloud};
use crate::contact;
use crate::enhance::{cosine, enhance_vectors, extract_descriptor, AttentionWeights, DescriptorConfig, MemoryBank};
use crate::error::{Error, Result};
use crate::geometry::{rotation_from_view_angle, GraspFrame, GraspPose, GripperModel, Vec3};
use crate::scene::{CollisionProbe, SceneGroundTruth};

/// Predictions scored per scene.
pub const TOP_K: usize = 50;
/// Penetrating points at which proposal confidence reaches zero.
pub const PENETRATION_SCALE: f64 = 16.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub pose: GraspPose,
    pub confidence: f64,
}

/// Predictions for one scene, most confident first. Equal confidences keep
/// their insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    pub scene_id: String,
    grasps: Vec<Prediction>,
}

impl PredictionSet {
    pub fn new(scene_id: impl Into<String>, mut grasps: Vec<Prediction>) -> Result<Self> {
        if grasps.iter().any(|g| !g.confidence.is_finite()) {
            return Err(Error::invalid("prediction confidence must be finite"));
        }
        grasps.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        Ok(PredictionSet {
            scene_id: scene_id.into(),
            grasps,
        })
    }

    pub fn grasps(&self) -> &[Prediction] {
        &self.grasps
    }

    pub fn len(&self) -> usize {
        self.grasps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grasps.is_empty()
    }
}

/// Outcome of one grasp against a scene, independent of friction.
#[derive(Clone, Debug, PartialEq)]
pub struct Judgment {
    pub collides: bool,
    /// Outward contact normals in the gripper frame, when the closing
    /// region of the nearest object yields a contact pair.
    pub normals: Option<(Vec3, Vec3)>,
}

impl Judgment {
    pub fn success(&self, mu: f64) -> bool {
        !self.collides && self.normals.is_some_and(|(n1, n2)| contact::antipodal(&n1, &n2, mu))
    }
}

/// Spatial indices over a scene, reused across many judgments.
pub struct SceneJudge<'a> {
    scene: &'a SceneGroundTruth,
    probe: Option<CollisionProbe<'a>>,
    objects: Vec<HashGrid>,
}

impl<'a> SceneJudge<'a> {
    pub fn new(scene: &'a SceneGroundTruth) -> Result<Self> {
        let gripper = &scene.candidates.gripper;
        let cloud = scene.scene_cloud();
        let probe = if cloud.is_empty() {
            None
        } else {
            Some(CollisionProbe::new(&cloud.points, gripper)?)
        };
        let objects = scene
            .world_surfaces
            .iter()
            .map(|s| HashGrid::new(&s.points, 0.01))
            .collect::<Result<_>>()?;
        Ok(SceneJudge {
            scene,
            probe,
            objects,
        })
    }

    /// Object whose surface holds the sample nearest to `q`; lowest object
    /// index on ties.
    pub fn nearest_object(&self, q: &Vec3) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (k, grid) in self.objects.iter().enumerate() {
            if let Some((_, d)) = grid.nearest(&self.scene.world_surfaces[k].points, q) {
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((k, d));
                }
            }
        }
        best.map(|(k, _)| k)
    }

    pub fn judge(&self, g: &GraspPose) -> Result<Judgment> {
        let gripper = &self.scene.candidates.gripper;
        let frame = GraspFrame::from_pose(g)?;
        let Some(probe) = &self.probe else {
            return Ok(Judgment {
                collides: false,
                normals: None,
            });
        };
        let collides = probe.collides(&frame, g.depth, g.width);
        let centre = frame.to_world(&Vec3::new(g.depth - gripper.finger_length / 2.0, 0.0, 0.0));
        let normals = self.nearest_object(&centre).and_then(|k| {
            let surface = &self.scene.world_surfaces[k];
            let ns = surface.normals.as_ref()?;
            let local: Vec<Vec3> = surface.points.iter().map(|q| frame.to_local(q)).collect();
            let (i, j) = contact::closing_contacts(&local, gripper, g.depth, g.width)?;
            Some((frame.to_local_vector(&ns[i]), frame.to_local_vector(&ns[j])))
        });
        Ok(Judgment { collides, normals })
    }
}

/// Collision-free and force closure at `mu` against the nearest object.
pub fn judge_grasp(g: &GraspPose, scene: &SceneGroundTruth, mu: f64) -> Result<bool> {
    if !(mu > 0.0) {
        return Err(Error::invalid("friction must be positive"));
    }
    Ok(SceneJudge::new(scene)?.judge(g)?.success(mu))
}

/// Mean of Precision@k for `k = 1..=top_k`; missing entries count as
/// failures.
pub fn ap_from_judgments(judgments: &[bool], top_k: usize) -> f64 {
    let mut hits = 0usize;
    let mut total = 0.0;
    for k in 1..=top_k {
        if judgments.get(k - 1).copied().unwrap_or(false) {
            hits += 1;
        }
        total += hits as f64 / k as f64;
    }
    total / top_k as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuAp {
    pub mu: f64,
    pub ap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneAp {
    pub scene_id: String,
    pub ap: f64,
    pub ap_per_mu: Vec<MuAp>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub ap: f64,
    pub ap_per_mu: Vec<MuAp>,
    pub per_scene: Vec<SceneAp>,
}

impl ApReport {
    pub fn ap_at(&self, mu: f64) -> Option<f64> {
        self.ap_per_mu.iter().find(|m| (m.mu - mu).abs() < 1e-12).map(|m| m.ap)
    }
}

fn scene_ap(preds: &PredictionSet, scene: &SceneGroundTruth, mu_grid: &MuGrid) -> Result<SceneAp> {
    if preds.is_empty() {
        return Err(Error::invalid(format!("no predictions for scene {}", preds.scene_id)));
    }
    let judge = SceneJudge::new(scene)?;
    let top: Vec<&Prediction> = preds.grasps().iter().take(TOP_K).collect();
    let judgments: Vec<Judgment> = top
        .par_iter()
        .map(|p| judge.judge(&p.pose))
        .collect::<Result<_>>()?;
    let ap_per_mu: Vec<MuAp> = mu_grid
        .values()
        .iter()
        .map(|&mu| {
            let hits: Vec<bool> = judgments.iter().map(|j| j.success(mu)).collect();
            MuAp {
                mu,
                ap: ap_from_judgments(&hits, TOP_K),
            }
        })
        .collect();
    let ap = ap_per_mu.iter().map(|m| m.ap).sum::<f64>() / ap_per_mu.len() as f64;
    Ok(SceneAp {
        scene_id: scene.scene_id.clone(),
        ap,
        ap_per_mu,
    })
}

pub fn average_precision(preds: &PredictionSet, scene: &SceneGroundTruth, mu_grid: &MuGrid) -> Result<ApReport> {
    average_precision_scenes(&[(preds, scene)], mu_grid)
}

/// Per-scene AP, averaged over scenes for each friction.
pub fn average_precision_scenes(
    runs: &[(&PredictionSet, &SceneGroundTruth)],
    mu_grid: &MuGrid,
) -> Result<ApReport> {
    if runs.is_empty() {
        return Err(Error::invalid("no scenes to evaluate"));
    }
    let per_scene: Vec<SceneAp> = runs
        .iter()
        .map(|(p, s)| scene_ap(p, s, mu_grid))
        .collect::<Result<_>>()?;
    let n = per_scene.len() as f64;
    let ap_per_mu: Vec<MuAp> = mu_grid
        .values()
        .iter()
        .enumerate()
        .map(|(i, &mu)| MuAp {
            mu,
            ap: per_scene.iter().map(|s| s.ap_per_mu[i].ap).sum::<f64>() / n,
        })
        .collect();
    let ap = ap_per_mu.iter().map(|m| m.ap).sum::<f64>() / ap_per_mu.len() as f64;
    Ok(ApReport {
        ap,
        ap_per_mu,
        per_scene,
    })
}

/// Positive scene candidates whose score certifies success at `mu`, best
/// first (ties by candidate index), as predictions with their score as
/// confidence.
pub fn ground_truth_predictions(scene: &SceneGroundTruth, mu: f64, limit: usize) -> Result<PredictionSet> {
    let c = &scene.candidates;
    let mut picked: Vec<usize> = (0..c.len())
        .filter(|&i| contact::score_qualifies(c.scores[i] as f64, mu))
        .collect();
    picked.sort_by(|&a, &b| c.scores[b].total_cmp(&c.scores[a]).then(a.cmp(&b)));
    picked.truncate(limit);
    let grasps = picked
        .into_iter()
        .map(|i| {
            let (p, v, a, d) = c.unravel(i);
            let pose = c.pose(p, v, a, d);
            Prediction {
                confidence: pose.score,
                pose,
            }
        })
        .collect();
    PredictionSet::new(scene.scene_id.clone(), grasps)
}

/// Optional descriptor enhancement applied to proposal confidences.
pub struct Enhancement<'a> {
    pub bank: &'a MemoryBank,
    pub weights: &'a AttentionWeights,
    pub descriptor: DescriptorConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposalConfig {
    /// Most graspable points to propose at.
    pub top_m: usize,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        ProposalConfig { top_m: 64 }
    }
}

/// Cosine between each finger's push and the inward normal at its contact,
/// the worse of the two, clamped at zero.
fn contact_alignment(n1: &Vec3, n2: &Vec3) -> f64 {
    let c1 = -n1.y / n1.norm();
    let c2 = n2.y / n2.norm();
    let c = c1.min(c2);
    if c.is_finite() { c.max(0.0) } else { 0.0 }
}

/// Proposes grasps at the `top_m` most graspable points, approaching
/// against the surface normal and sweeping every angle and depth.
///
/// Confidence is `graspness × alignment × (1 − min(1, penetration / 16))`.
/// The alignment is the worse cosine between a finger's push and the
/// observed normal at its first contact. The penetration counts cloud points
/// inside the fingers or palm at the fitted width. With an [`Enhancement`]
/// it is further scaled by `0.5 + 0.5·cos(enhanced, raw)` of the point's
/// descriptor.
pub fn propose_grasps(
    scene_id: &str,
    cloud: &PointCloud,
    graspness: &[f64],
    gripper: &GripperModel,
    cfg: &ProposalConfig,
    enhancement: Option<&Enhancement>,
) -> Result<PredictionSet> {
    gripper.validate()?;
    let normals = cloud
        .normals
        .as_ref()
        .ok_or_else(|| Error::invalid("proposal cloud needs normals"))?;
    if graspness.len() != cloud.len() {
        return Err(Error::invalid("graspness length differs from the cloud"));
    }
    let mut order: Vec<usize> = (0..cloud.len()).filter(|&i| graspness[i] > 0.0).collect();
    order.sort_by(|&a, &b| graspness[b].total_cmp(&graspness[a]).then(a.cmp(&b)));
    order.truncate(cfg.top_m);
    if order.is_empty() {
        log::warn!("no graspable points in scene {scene_id}");
        return PredictionSet::new(scene_id, Vec::new());
    }

    let probe = CollisionProbe::new(&cloud.points, gripper)?;
    let index = match enhancement {
        Some(e) => Some(CloudIndex::new(cloud, e.descriptor.radius.max(e.descriptor.height / 2.0))?),
        None => None,
    };
    let angles = gripper.angles();
    let per_point: Vec<Vec<Prediction>> = order
        .par_iter()
        .map(|&i| {
            let p = cloud.points[i];
            let view = -normals[i];
            let factor = match (enhancement, &index) {
                (Some(e), Some(idx)) => {
                    let raw = extract_descriptor(idx, &p, &view, &e.descriptor)?;
                    let enhanced = enhance_vectors(&[&raw.vector], e.bank, e.weights)?;
                    0.5 + 0.5 * cosine(&enhanced[0], &raw.vector)
                }
                _ => 1.0,
            };
            let mut out = Vec::new();
            for &angle in &angles {
                let frame = GraspFrame::new(p, rotation_from_view_angle(&view, angle)?);
                for &depth in &gripper.depth_grid {
                    let (idx, local) = probe.local_indexed(&frame, depth, gripper.max_width);
                    let Some(width) = contact::fit_width(&local, gripper, depth) else {
                        continue;
                    };
                    let Some((a, b)) = contact::closing_contacts(&local, gripper, depth, width) else {
                        continue;
                    };
                    let alignment = contact_alignment(
                        &frame.to_local_vector(&normals[idx[a]]),
                        &frame.to_local_vector(&normals[idx[b]]),
                    );
                    let pen = contact::penetration(&local, gripper, depth, width) as f64;
                    let confidence =
                        graspness[i] * alignment * (1.0 - (pen / PENETRATION_SCALE).min(1.0)) * factor;
                    if confidence > 0.0 {
                        out.push(Prediction {
                            pose: GraspPose {
                                point: p,
                                view,
                                angle,
                                depth,
                                width,
                                score: 0.0,
                            },
                            confidence,
                        });
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    PredictionSet::new(scene_id, per_point.into_iter().flatten().collect())
}
