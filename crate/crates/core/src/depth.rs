//! Metric depth maps, residual repair and a sensor-like noise model.
//!
//! Depth is stored in millimeters as `f32` with `0` marking a missing
//! reading. Residuals are `f64`: the difference of two `f32` depths is exact
//! in double precision, so adding a residual built from a pair back onto the
//! real map reproduces the simulated map bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidPose, Vec3};
use crate::cloud::PointCloud;

/// Depth jump, in millimeters between neighboring pixels, treated as a
/// discontinuity by the noise model.
pub const EDGE_GRADIENT_MM: f64 = 20.0;

#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub intrinsics: CameraIntrinsics,
    /// Row-major, `height × width`, millimeters.
    pub values: Vec<f32>,
}

impl DepthMap {
    pub fn new(intrinsics: CameraIntrinsics, values: Vec<f32>) -> Result<Self> {
        let map = DepthMap { intrinsics, values };
        map.validate()?;
        Ok(map)
    }

    pub fn filled(intrinsics: CameraIntrinsics, value: f32) -> Result<Self> {
        Self::new(intrinsics, vec![value; intrinsics.width * intrinsics.height])
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.values[v * self.width() + u]
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.values[i] > 0.0
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&z| z > 0.0).count()
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        let n = self.width() * self.height();
        if self.values.len() != n {
            return Err(Error::invalid(format!(
                "depth map holds {} values for {}×{} pixels",
                self.values.len(),
                self.width(),
                self.height()
            )));
        }
        if self.values.iter().any(|z| !(z.is_finite() && *z >= 0.0)) {
            return Err(Error::Invariant("depth values must be finite and non-negative".into()));
        }
        Ok(())
    }

    fn check_same_shape(&self, w: usize, h: usize) -> Result<()> {
        if self.width() != w || self.height() != h {
            return Err(Error::invalid(format!(
                "shape mismatch: {}×{} vs {w}×{h}",
                self.width(),
                self.height()
            )));
        }
        Ok(())
    }

    /// World-frame points for every valid pixel, with their `(u, v)`.
    /// `camera_to_world` maps the optical frame (x right, y down, z forward)
    /// into the world.
    pub fn to_cloud(&self, camera_to_world: &RigidPose) -> (PointCloud, Vec<(usize, usize)>) {
        let w = self.width();
        let mut points = Vec::new();
        let mut pixels = Vec::new();
        for (i, &z) in self.values.iter().enumerate() {
            if z > 0.0 {
                let (u, v) = (i % w, i / w);
                let local = self.intrinsics.unproject(u, v, z as f64 / 1000.0);
                points.push(camera_to_world.apply(&local));
                pixels.push((u, v));
            }
        }
        (PointCloud::new(points), pixels)
    }
}

/// Signed per-pixel correction in millimeters.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl ResidualMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        ResidualMap {
            width,
            height,
            values: vec![0.0; width * height],
            valid: vec![true; width * height],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.width * self.height;
        if self.values.len() != n || self.valid.len() != n {
            return Err(Error::invalid("residual payload does not match its shape"));
        }
        if self
            .values
            .iter()
            .zip(&self.valid)
            .any(|(r, &ok)| ok && !r.is_finite())
        {
            return Err(Error::Invariant("non-finite residual on a valid pixel".into()));
        }
        Ok(())
    }
}

/// Supervision residual: `sim − real`, valid where both readings exist.
pub fn make_residual_label(sim: &DepthMap, real: &DepthMap) -> Result<ResidualMap> {
    sim.check_same_shape(real.width(), real.height())?;
    if sim.intrinsics != real.intrinsics {
        return Err(Error::invalid("depth maps have different intrinsics"));
    }
    let (values, valid) = sim
        .values
        .iter()
        .zip(&real.values)
        .map(|(&s, &r)| {
            if s > 0.0 && r > 0.0 {
                (s as f64 - r as f64, true)
            } else {
                (0.0, false)
            }
        })
        .unzip();
    Ok(ResidualMap {
        width: sim.width(),
        height: sim.height(),
        values,
        valid,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Repaired {
    pub depth: DepthMap,
    /// Pixels whose repaired value went negative and were set to 0.
    pub clamped: usize,
}

/// `real + residual` on valid residual pixels; other pixels pass through.
pub fn apply_repair(real: &DepthMap, residual: &ResidualMap) -> Result<Repaired> {
    real.check_same_shape(residual.width, residual.height)?;
    residual.validate()?;
    let mut clamped = 0;
    let values = real
        .values
        .iter()
        .zip(residual.values.iter().zip(&residual.valid))
        .map(|(&z, (&r, &ok))| {
            if !ok {
                return z;
            }
            let out = (z as f64 + r) as f32;
            if out < 0.0 {
                clamped += 1;
                0.0
            } else {
                out
            }
        })
        .collect();
    if clamped > 0 {
        log::warn!("repair clamped {clamped} negative pixels to 0");
    }
    Ok(Repaired {
        depth: DepthMap {
            intrinsics: real.intrinsics,
            values,
        },
        clamped,
    })
}

/// Root-mean-square difference over pixels valid in both maps, millimeters.
pub fn rmse(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    pred.check_same_shape(gt.width(), gt.height())?;
    let (sum, n) = pred
        .values
        .iter()
        .zip(&gt.values)
        .filter(|(&a, &b)| a > 0.0 && b > 0.0)
        .fold((0.0, 0usize), |(s, n), (&a, &b)| {
            let d = a as f64 - b as f64;
            (s + d * d, n + 1)
        });
    if n == 0 {
        return Err(Error::invalid("no pixel is valid in both depth maps"));
    }
    Ok((sum / n as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Base standard deviation, mm.
    pub sigma0: f64,
    /// Additional standard deviation per squared meter of depth, mm/m².
    pub depth_gain: f64,
    /// Pixels around a discontinuity that receive edge noise.
    pub edge_band: usize,
    /// Extra standard deviation near discontinuities, mm.
    pub edge_sigma: f64,
    pub hole_rate: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            sigma0: 1.5,
            depth_gain: 2.0,
            edge_band: 2,
            edge_sigma: 6.0,
            hole_rate: 0.01,
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel {
            sigma0: 0.0,
            depth_gain: 0.0,
            edge_band: 0,
            edge_sigma: 0.0,
            hole_rate: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.sigma0, self.depth_gain, self.edge_sigma]
            .iter()
            .all(|x| x.is_finite() && *x >= 0.0)
            && (0.0..=1.0).contains(&self.hole_rate);
        if !ok {
            return Err(Error::invalid(format!("invalid noise model {self:?}")));
        }
        Ok(())
    }
}

/// Pixels within `band` (Chebyshev distance) of a depth discontinuity.
fn edge_mask(depth: &DepthMap, band: usize) -> Vec<bool> {
    let (w, h) = (depth.width(), depth.height());
    let mut edge = vec![false; w * h];
    if band == 0 {
        return edge;
    }
    let jump = |a: f32, b: f32| a > 0.0 && b > 0.0 && (a as f64 - b as f64).abs() > EDGE_GRADIENT_MM;
    let mut seeds = Vec::new();
    for v in 0..h {
        for u in 0..w {
            let z = depth.get(u, v);
            let right = u + 1 < w && jump(z, depth.get(u + 1, v));
            let down = v + 1 < h && jump(z, depth.get(u, v + 1));
            if right {
                seeds.push((u, v));
                seeds.push((u + 1, v));
            }
            if down {
                seeds.push((u, v));
                seeds.push((u, v + 1));
            }
        }
    }
    for (u, v) in seeds {
        for vv in v.saturating_sub(band)..=(v + band).min(h - 1) {
            for uu in u.saturating_sub(band)..=(u + band).min(w - 1) {
                edge[vv * w + uu] = true;
            }
        }
    }
    edge
}

/// Adds depth-dependent Gaussian noise, edge noise and holes. Every pixel
/// consumes the same number of random draws, so the output depends only on
/// the input and the seed.
pub fn corrupt(sim: &DepthMap, model: &NoiseModel) -> Result<DepthMap> {
    model.validate()?;
    sim.validate()?;
    let edge = edge_mask(sim, model.edge_band);
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let values = sim
        .values
        .iter()
        .zip(&edge)
        .map(|(&z, &on_edge)| {
            let n1: f64 = rng.sample(StandardNormal);
            let n2: f64 = rng.sample(StandardNormal);
            let hole: f64 = rng.random();
            if z <= 0.0 {
                return z;
            }
            if hole < model.hole_rate {
                return 0.0;
            }
            let meters = z as f64 / 1000.0;
            let mut noisy = z as f64 + (model.sigma0 + model.depth_gain * meters * meters) * n1;
            if on_edge {
                noisy += model.edge_sigma * n2;
            }
            let out = noisy as f32;
            // a non-positive reading would read as a hole
            if out > 0.0 {
                out
            } else {
                f32::MIN_POSITIVE
            }
        })
        .collect();
    Ok(DepthMap {
        intrinsics: sim.intrinsics,
        values,
    })
}

/// Anything that predicts a residual from a captured depth map.
pub trait RepairPredictor {
    fn predict(&self, real: &DepthMap) -> Result<ResidualMap>;
}

/// Returns the supervision residual against a known simulated map.
pub struct OracleRepairer {
    pub sim: DepthMap,
}

impl RepairPredictor for OracleRepairer {
    fn predict(&self, real: &DepthMap) -> Result<ResidualMap> {
        make_residual_label(&self.sim, real)
    }
}

pub struct SmoothingRepairer;

impl RepairPredictor for SmoothingRepairer {
    fn predict(&self, real: &DepthMap) -> Result<ResidualMap> {
        smoothing_repairer(real)
    }
}

const MEDIAN_RADIUS: usize = 2;
const MIN_FILL_NEIGHBORS: usize = 6;

fn median(values: &mut [f32]) -> f64 {
    values.sort_by(f32::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] as f64 + values[n / 2] as f64) / 2.0
    }
}

/// Residual towards the 5×5 median of valid pixels. Holes are filled when
/// at least six valid neighbors exist.
pub fn smoothing_repairer(real: &DepthMap) -> Result<ResidualMap> {
    real.validate()?;
    let (w, h) = (real.width(), real.height());
    let (values, valid): (Vec<f64>, Vec<bool>) = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (u, v) = (i % w, i / w);
            let mut window = Vec::with_capacity(25);
            for vv in v.saturating_sub(MEDIAN_RADIUS)..=(v + MEDIAN_RADIUS).min(h - 1) {
                for uu in u.saturating_sub(MEDIAN_RADIUS)..=(u + MEDIAN_RADIUS).min(w - 1) {
                    let z = real.get(uu, vv);
                    if z > 0.0 {
                        window.push(z);
                    }
                }
            }
            let z = real.values[i];
            if z > 0.0 {
                (median(&mut window) - z as f64, true)
            } else if window.len() >= MIN_FILL_NEIGHBORS {
                (median(&mut window), true)
            } else {
                (0.0, false)
            }
        })
        .unzip();
    Ok(ResidualMap {
        width: w,
        height: h,
        values,
        valid,
    })
}

/// Camera-frame ray direction through the centre of pixel `(u, v)`, scaled
/// so its z component is 1.
pub fn pixel_ray(intr: &CameraIntrinsics, u: usize, v: usize) -> Vec3 {
    intr.unproject(u, v, 1.0)
}
