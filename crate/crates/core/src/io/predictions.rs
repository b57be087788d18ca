//! Grasp predictions as CSV and AP reports as JSON or CSV.
//!
//! Prediction columns: `scene_id, px, py, pz, vx, vy, vz, theta, depth,
//! width, confidence`. Floats are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{ApReport, Prediction, PredictionSet};
use crate::geometry::{GraspPose, Vec3};

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    scene_id: String,
    px: f64,
    py: f64,
    pz: f64,
    vx: f64,
    vy: f64,
    vz: f64,
    theta: f64,
    depth: f64,
    width: f64,
    confidence: f64,
}

pub fn write_predictions<W: std::io::Write>(w: W, sets: &[&PredictionSet]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for set in sets {
        for g in set.grasps() {
            let p = &g.pose;
            out.serialize(Row {
                scene_id: set.scene_id.clone(),
                px: p.point.x,
                py: p.point.y,
                pz: p.point.z,
                vx: p.view.x,
                vy: p.view.y,
                vz: p.view.z,
                theta: p.angle,
                depth: p.depth,
                width: p.width,
                confidence: g.confidence,
            })?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Prediction sets by scene id, in id order.
pub fn read_predictions<R: std::io::Read>(r: R) -> Result<Vec<PredictionSet>> {
    let mut by_scene: BTreeMap<String, Vec<Prediction>> = BTreeMap::new();
    for row in csv::Reader::from_reader(r).deserialize() {
        let row: Row = row?;
        let view = Vec3::new(row.vx, row.vy, row.vz);
        if (view.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::format("predictions", "approach vector is not unit length"));
        }
        by_scene.entry(row.scene_id).or_default().push(Prediction {
            pose: GraspPose {
                point: Vec3::new(row.px, row.py, row.pz),
                view,
                angle: row.theta,
                depth: row.depth,
                width: row.width,
                score: 0.0,
            },
            confidence: row.confidence,
        });
    }
    by_scene
        .into_iter()
        .map(|(id, grasps)| PredictionSet::new(id, grasps))
        .collect()
}

pub fn write_predictions_file(path: &Path, sets: &[&PredictionSet]) -> Result<()> {
    write_predictions(std::fs::File::create(path)?, sets)
}

pub fn read_predictions_file(path: &Path) -> Result<Vec<PredictionSet>> {
    read_predictions(std::fs::File::open(path)?)
}

pub fn report_json(report: &ApReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

/// One row per scene plus an `all` row, columns `scene_id, AP, AP_<μ>...`.
pub fn report_csv(report: &ApReport) -> Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["scene_id".to_string(), "AP".to_string()];
    header.extend(report.ap_per_mu.iter().map(|m| format!("AP_{}", m.mu)));
    out.write_record(&header)?;
    let rows = report
        .per_scene
        .iter()
        .map(|s| (s.scene_id.as_str(), s.ap, &s.ap_per_mu))
        .chain(std::iter::once(("all", report.ap, &report.ap_per_mu)));
    for (id, ap, per_mu) in rows {
        let mut rec = vec![id.to_string(), ap.to_string()];
        rec.extend(per_mu.iter().map(|m| m.ap.to_string()));
        out.write_record(&rec)?;
    }
    let bytes = out.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
