//! Gripper-frame primitives shared by annotation, collision culling, judging
//! and proposal: contact extraction, width fitting, swept-volume collision
//! and the two-contact friction-cone test.
//!
//! Every function here takes surface samples already expressed in the
//! gripper frame (x = approach, y = closing, z = third axis). Normals are
//! outward surface normals in the same frame.

use crate::geometry::{GripperModel, Vec3, GEOM_EPS};

/// Gap added to the measured contact span when fitting a width.
pub const WIDTH_CLEARANCE: f64 = 0.002;

/// Positions (into `local`) of the first contact of each finger inside the
/// closing region: the samples with the smallest and the largest closing
/// coordinate. Ties within [`GEOM_EPS`] resolve to the lowest position.
/// Returns `None` when the region is empty or holds a single closing
/// coordinate.
pub fn closing_contacts(
    local: &[Vec3],
    gripper: &GripperModel,
    depth: f64,
    width: f64,
) -> Option<(usize, usize)> {
    let region = gripper.closing_region(depth, width);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for q in local.iter().filter(|q| region.contains(q)) {
        lo = lo.min(q.y);
        hi = hi.max(q.y);
    }
    if !(hi - lo > GEOM_EPS) {
        return None;
    }
    let first = local
        .iter()
        .position(|q| region.contains(q) && q.y <= lo + GEOM_EPS)?;
    let second = local
        .iter()
        .position(|q| region.contains(q) && q.y >= hi - GEOM_EPS)?;
    Some((first, second))
}

/// True when any sample lies inside a finger or the palm.
pub fn collides(local: &[Vec3], gripper: &GripperModel, depth: f64, width: f64) -> bool {
    let boxes = gripper.collision_boxes(depth, width);
    local.iter().any(|q| boxes.iter().any(|b| b.contains(q)))
}

/// Number of samples inside the fingers or palm.
pub fn penetration(local: &[Vec3], gripper: &GripperModel, depth: f64, width: f64) -> usize {
    let boxes = gripper.collision_boxes(depth, width);
    local
        .iter()
        .filter(|q| boxes.iter().any(|b| b.contains(q)))
        .count()
}

/// Narrowest symmetric opening that encloses every sample caught between
/// fully opened fingers, plus [`WIDTH_CLEARANCE`]. `None` when nothing is
/// caught or the opening exceeds `max_width`.
pub fn fit_width(local: &[Vec3], gripper: &GripperModel, depth: f64) -> Option<f64> {
    let region = gripper.closing_region(depth, gripper.max_width);
    let span = local
        .iter()
        .filter(|q| region.contains(q))
        .map(|q| q.y.abs())
        .fold(None, |acc: Option<f64>, y| Some(acc.map_or(y, |a| a.max(y))))?;
    let width = 2.0 * span + WIDTH_CLEARANCE;
    if width > gripper.max_width + GEOM_EPS {
        return None;
    }
    Some(width.min(gripper.max_width))
}

/// [`fit_width`] followed by a collision check of fingers and palm at the
/// fitted width.
pub fn collision_free_width(local: &[Vec3], gripper: &GripperModel, depth: f64) -> Option<f64> {
    let width = fit_width(local, gripper, depth)?;
    (!collides(local, gripper, depth, width)).then_some(width)
}

/// Antipodal test at friction `mu`. Finger one pushes along +y, finger two
/// along −y; each push must lie inside the friction cone around the inward
/// normal of its contact.
pub fn antipodal(n1: &Vec3, n2: &Vec3, mu: f64) -> bool {
    let cos_cone = 1.0 / (1.0 + mu * mu).sqrt();
    let c1 = -n1.y / n1.norm();
    let c2 = n2.y / n2.norm();
    c1 >= cos_cone - GEOM_EPS && c2 >= cos_cone - GEOM_EPS
}

/// Smallest friction on the grid at which the contact pair holds.
pub fn min_friction(n1: &Vec3, n2: &Vec3, mu_grid: &[f64]) -> Option<f64> {
    mu_grid.iter().copied().find(|&mu| antipodal(n1, n2, mu))
}

pub fn score_from_friction(mu_min: f64) -> f64 {
    (1.1 - mu_min).clamp(0.0, 1.0)
}

/// Whether a stored score certifies success at friction `mu`, allowing for
/// single-precision storage.
pub fn score_qualifies(score: f64, mu: f64) -> bool {
    score > 0.0 && score >= 1.1 - mu - 1e-6
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g() -> GripperModel {
        GripperModel::default()
    }

    #[test]
    fn contacts_pick_extremes_with_lowest_index_ties() {
        let local = vec![
            Vec3::new(0.0, -0.01, 0.0),
            Vec3::new(0.005, -0.01, 0.001),
            Vec3::new(0.0, 0.012, 0.0),
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.0, 0.5, 0.0), // outside the closing region
        ];
        assert_eq!(closing_contacts(&local, &g(), 0.02, 0.08), Some((0, 2)));
    }

    #[test]
    fn single_sample_has_no_contact_pair() {
        let local = vec![Vec3::new(0.0, 0.01, 0.0)];
        assert_eq!(closing_contacts(&local, &g(), 0.02, 0.08), None);
        assert_eq!(closing_contacts(&[], &g(), 0.02, 0.08), None);
    }

    #[test]
    fn width_fits_span_plus_clearance() {
        let local = vec![Vec3::new(0.0, -0.015, 0.0), Vec3::new(0.0, 0.015, 0.0)];
        let w = collision_free_width(&local, &g(), 0.02).unwrap();
        assert!((w - 0.032).abs() < 1e-12);
    }

    #[test]
    fn width_rejects_wide_and_colliding() {
        let wide = vec![Vec3::new(0.0, -0.0395, 0.0), Vec3::new(0.0, 0.0395, 0.0)];
        assert_eq!(fit_width(&wide, &g(), 0.02), None);
        // sample sitting in the palm
        let palm = vec![
            Vec3::new(0.0, -0.01, 0.0),
            Vec3::new(0.0, 0.01, 0.0),
            Vec3::new(-0.03, 0.0, 0.0),
        ];
        assert!(fit_width(&palm, &g(), 0.02).is_some());
        assert_eq!(collision_free_width(&palm, &g(), 0.02), None);
    }

    #[test]
    fn antipodal_thresholds() {
        let flat1 = Vec3::new(0.0, -1.0, 0.0);
        let flat2 = Vec3::new(0.0, 1.0, 0.0);
        assert_eq!(min_friction(&flat1, &flat2, &[0.2, 0.4]), Some(0.2));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let tilt1 = Vec3::new(s, -s, 0.0);
        let tilt2 = Vec3::new(s, s, 0.0);
        let grid = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2];
        assert_eq!(min_friction(&tilt1, &tilt2, &grid), Some(1.0));
        // normals facing the wrong way never hold
        assert_eq!(min_friction(&flat2, &flat1, &grid), None);
    }

    #[test]
    fn score_map() {
        assert!((score_from_friction(0.2) - 0.9).abs() < 1e-12);
        assert_eq!(score_from_friction(1.2), 0.0);
        assert!(score_qualifies(0.9f32 as f64, 0.2));
        assert!(!score_qualifies(0.5, 0.2));
    }
}
