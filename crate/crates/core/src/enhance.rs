//! Local structural features, a momentum-updated memory bank and
//! cross-attention enhancement against the bank.
//!
//! The bank keeps `K` feature vectors. Every update assigns each incoming
//! feature to the entry with the highest cosine similarity and pulls each
//! assigned entry towards the mean of its assignees:
//! `k_j ← α·k_j + (1 − α)·f̄_j`. Enhancement is multi-head scaled dot-product
//! attention from the features (queries) to the bank (keys and values),
//! added back onto the features.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cloud::{covariance, sorted_eigen, CloudIndex, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::{GripperModel, Vec3};

/// Eigenvalue triple, 16 normal-angle bins and 8 radial bins.
pub const DESCRIPTOR_BASE_LEN: usize = 3 + NORMAL_BINS + RADIAL_BINS;
const NORMAL_BINS: usize = 16;
const RADIAL_BINS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct LocalFeature {
    pub vector: Vec<f64>,
    pub source_point: Vec3,
    pub source_view: Vec3,
}

impl LocalFeature {
    pub fn new(vector: Vec<f64>) -> Self {
        LocalFeature {
            vector,
            source_point: Vec3::zeros(),
            source_view: Vec3::z(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescriptorConfig {
    pub radius: f64,
    pub height: f64,
    pub max_points: usize,
    pub dim: usize,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self::from_gripper(&GripperModel::default(), 256)
    }
}

impl DescriptorConfig {
    /// Cylinder a quarter of the opening wide and one finger long.
    pub fn from_gripper(g: &GripperModel, dim: usize) -> Self {
        DescriptorConfig {
            radius: g.max_width / 4.0,
            height: g.finger_length,
            max_points: 1024,
            dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.height > 0.0 && self.max_points > 0 && self.dim > 0) {
            return Err(Error::invalid(format!("invalid descriptor config {self:?}")));
        }
        Ok(())
    }
}

/// Descriptor of the cylinder neighborhood around `p` along `v`.
pub fn extract_descriptor(
    index: &CloudIndex,
    p: &Vec3,
    v: &Vec3,
    cfg: &DescriptorConfig,
) -> Result<LocalFeature> {
    cfg.validate()?;
    let ids = index.cylinder_group(p, v, cfg.radius, cfg.height, cfg.max_points);
    let cloud = index.cloud;
    let points: Vec<Vec3> = ids.iter().map(|&i| cloud.points[i]).collect();
    let normals: Option<Vec<Vec3>> = cloud
        .normals
        .as_ref()
        .map(|ns| ids.iter().map(|&i| ns[i]).collect());
    let vector = describe_neighborhood(&points, normals.as_deref(), p, v, cfg)?;
    Ok(LocalFeature {
        vector,
        source_point: *p,
        source_view: *v,
    })
}

/// Convenience wrapper building a throwaway index.
pub fn extract_descriptor_from(
    cloud: &PointCloud,
    p: &Vec3,
    v: &Vec3,
    cfg: &DescriptorConfig,
) -> Result<LocalFeature> {
    let index = CloudIndex::new(cloud, cfg.radius.max(cfg.height / 2.0))?;
    extract_descriptor(&index, p, v, cfg)
}

/// Descriptors at up to `count` distinct points drawn with `seed`, each
/// approached against the point's normal. Returned in point order.
pub fn sample_descriptors(
    cloud: &PointCloud,
    cfg: &DescriptorConfig,
    count: usize,
    seed: u64,
) -> Result<Vec<LocalFeature>> {
    let normals = cloud
        .normals
        .as_ref()
        .ok_or_else(|| Error::invalid("descriptor sampling needs normals"))?;
    if cloud.is_empty() {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = rand::seq::index::sample(&mut rng, cloud.len(), count.min(cloud.len())).into_vec();
    ids.sort_unstable();
    let index = CloudIndex::new(cloud, cfg.radius.max(cfg.height / 2.0))?;
    ids.iter()
        .map(|&i| extract_descriptor(&index, &cloud.points[i], &-normals[i], cfg))
        .collect()
}

/// Descriptor of an explicit neighborhood. The neighborhood is sorted
/// first, so the result does not depend on its order.
pub fn describe_neighborhood(
    points: &[Vec3],
    normals: Option<&[Vec3]>,
    p: &Vec3,
    v: &Vec3,
    cfg: &DescriptorConfig,
) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::invalid("descriptor neighborhood is empty"));
    }
    let zero = Vec3::zeros();
    let mut items: Vec<(Vec3, Vec3)> = points
        .iter()
        .enumerate()
        .map(|(i, q)| (*q, normals.map_or(zero, |ns| ns[i])))
        .collect();
    items.sort_by(|a, b| {
        let key = |x: &(Vec3, Vec3)| [x.0.x, x.0.y, x.0.z, x.1.x, x.1.y, x.1.z];
        key(a)
            .iter()
            .zip(key(b).iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let pts: Vec<Vec3> = items.iter().map(|x| x.0).collect();
    let n = pts.len() as f64;

    let mut base = Vec::with_capacity(DESCRIPTOR_BASE_LEN);
    let (eig, _) = sorted_eigen(&covariance(&pts));
    let eig = eig.map(|e| e.max(0.0));
    let total: f64 = eig.iter().sum();
    base.extend(eig.iter().map(|e| if total > 0.0 { e / total } else { 0.0 }));

    let mut normal_hist = [0.0; NORMAL_BINS];
    if normals.is_some() {
        for (_, nrm) in &items {
            let c = nrm.dot(v).clamp(-1.0, 1.0);
            let bin = ((c.acos() / std::f64::consts::PI) * NORMAL_BINS as f64) as usize;
            normal_hist[bin.min(NORMAL_BINS - 1)] += 1.0 / n;
        }
    }
    base.extend_from_slice(&normal_hist);

    let mut radial_hist = [0.0; RADIAL_BINS];
    for q in &pts {
        let d = q - p;
        let r = (d - v * d.dot(v)).norm() / cfg.radius;
        let bin = (r * RADIAL_BINS as f64) as usize;
        radial_hist[bin.min(RADIAL_BINS - 1)] += 1.0 / n;
    }
    base.extend_from_slice(&radial_hist);

    Ok((0..cfg.dim).map(|i| base[i % DESCRIPTOR_BASE_LEN]).collect())
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryBank {
    entries: Vec<Vec<f64>>,
    pub alpha: f64,
    pub update_count: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct UpdateStats {
    pub assigned: usize,
    /// Zero-norm features left out of the update.
    pub skipped: usize,
    /// Entries that received at least one feature.
    pub touched: usize,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("momentum must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

impl MemoryBank {
    pub fn new(entries: Vec<Vec<f64>>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let c = entries.first().map_or(0, Vec::len);
        if entries.is_empty() || c == 0 || entries.iter().any(|e| e.len() != c) {
            return Err(Error::invalid("bank entries must be non-empty and of equal length"));
        }
        if entries.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::invalid("bank entries must be finite"));
        }
        Ok(MemoryBank {
            entries,
            alpha,
            update_count: 0,
        })
    }

    /// Standard-normal entries scaled to unit length.
    pub fn random(k: usize, dim: usize, alpha: f64, seed: u64) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::invalid("bank needs at least one entry of positive dimension"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..k)
            .map(|_| loop {
                let e: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let n = e.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 0.0 {
                    break e.into_iter().map(|x| x / n).collect();
                }
            })
            .collect();
        Self::new(entries, alpha)
    }

    /// Entries seeded from `features` by k-means++ (squared-distance
    /// sampling).
    pub fn from_features(features: &[Vec<f64>], k: usize, alpha: f64, seed: u64) -> Result<Self> {
        if features.len() < k || k == 0 {
            return Err(Error::invalid(format!(
                "need at least {k} features to seed {k} entries"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        let mut chosen = vec![rng.random_range(0..features.len())];
        let mut best: Vec<f64> = features.iter().map(|f| d2(f, &features[chosen[0]])).collect();
        while chosen.len() < k {
            let total: f64 = best.iter().sum();
            let next = if total > 0.0 {
                let mut r = rng.random::<f64>() * total;
                let mut pick = features.len() - 1;
                for (i, &w) in best.iter().enumerate() {
                    if r < w {
                        pick = i;
                        break;
                    }
                    r -= w;
                }
                pick
            } else {
                (0..features.len()).find(|i| !chosen.contains(i)).unwrap()
            };
            chosen.push(next);
            for (b, f) in best.iter_mut().zip(features) {
                *b = b.min(d2(f, &features[next]));
            }
        }
        Self::new(chosen.iter().map(|&i| features[i].clone()).collect(), alpha)
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn k(&self) -> usize {
        self.entries.len()
    }

    pub fn dim(&self) -> usize {
        self.entries[0].len()
    }

    /// Entry with the highest cosine similarity, lowest index on ties;
    /// `None` for a zero-norm feature.
    pub fn assign(&self, f: &[f64]) -> Option<usize> {
        if f.iter().all(|&x| x == 0.0) {
            return None;
        }
        let mut best = 0;
        let mut best_sim = f64::NEG_INFINITY;
        for (j, e) in self.entries.iter().enumerate() {
            let s = cosine(e, f);
            if s > best_sim {
                best = j;
                best_sim = s;
            }
        }
        Some(best)
    }

    pub fn update(&mut self, batch: &[LocalFeature]) -> Result<UpdateStats> {
        let vectors: Vec<&[f64]> = batch.iter().map(|f| f.vector.as_slice()).collect();
        self.update_vectors(&vectors)
    }

    pub fn update_vectors(&mut self, batch: &[&[f64]]) -> Result<UpdateStats> {
        if batch.is_empty() {
            return Err(Error::invalid("bank update needs a non-empty batch"));
        }
        let c = self.dim();
        if let Some(f) = batch.iter().find(|f| f.len() != c) {
            return Err(Error::invalid(format!("feature of length {} for a {c}-dim bank", f.len())));
        }
        if batch.iter().any(|f| f.iter().any(|x| !x.is_finite())) {
            return Err(Error::invalid("features must be finite"));
        }
        let mut groups: Vec<Vec<&[f64]>> = vec![Vec::new(); self.k()];
        let mut stats = UpdateStats::default();
        for f in batch {
            match self.assign(f) {
                Some(j) => {
                    groups[j].push(f);
                    stats.assigned += 1;
                }
                None => stats.skipped += 1,
            }
        }
        if stats.skipped > 0 {
            log::warn!("skipped {} zero-norm features", stats.skipped);
        }
        let a = self.alpha;
        for (entry, members) in self.entries.iter_mut().zip(&groups) {
            if members.is_empty() {
                continue;
            }
            stats.touched += 1;
            let mean = shifted_mean(members);
            for (k, m) in entry.iter_mut().zip(mean) {
                *k = a * *k + (1.0 - a) * m;
            }
        }
        self.update_count += 1;
        Ok(stats)
    }
}

/// Mean computed as `f₀ + Σ(fᵢ − f₀)/n`, exact when all members are equal.
fn shifted_mean(members: &[&[f64]]) -> Vec<f64> {
    let first = members[0];
    let n = members.len() as f64;
    (0..first.len())
        .map(|c| {
            let spread: f64 = members.iter().map(|f| f[c] - first[c]).sum();
            first[c] + spread / n
        })
        .collect()
}

/// Query/key/value encodings (`C × D_m`) and the `D_m × C` output
/// projection.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights {
    pub wq: DMatrix<f64>,
    pub wk: DMatrix<f64>,
    pub wv: DMatrix<f64>,
    pub wo: DMatrix<f64>,
    pub heads: usize,
}

/// `rows × cols` matrix with ones on the main diagonal.
pub fn projection_identity(rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| if i == j { 1.0 } else { 0.0 })
}

impl AttentionWeights {
    pub fn new(wq: DMatrix<f64>, wk: DMatrix<f64>, wv: DMatrix<f64>, heads: usize) -> Result<Self> {
        let wo = projection_identity(wq.ncols(), wq.nrows());
        Self::with_output(wq, wk, wv, wo, heads)
    }

    pub fn with_output(
        wq: DMatrix<f64>,
        wk: DMatrix<f64>,
        wv: DMatrix<f64>,
        wo: DMatrix<f64>,
        heads: usize,
    ) -> Result<Self> {
        let w = AttentionWeights { wq, wk, wv, wo, heads };
        w.validate()?;
        Ok(w)
    }

    /// Seeded Gaussian encodings with standard deviation `1/√C`.
    pub fn random(dim: usize, model_dim: usize, heads: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let mut draw = || {
            DMatrix::from_fn(dim, model_dim, |_, _| rng.sample::<f64, _>(StandardNormal) * scale)
        };
        let (wq, wk, wv) = (draw(), draw(), draw());
        Self::new(wq, wk, wv, heads)
    }

    pub fn dim(&self) -> usize {
        self.wq.nrows()
    }

    pub fn model_dim(&self) -> usize {
        self.wq.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (c, dm) = self.wq.shape();
        if c == 0 || dm == 0 {
            return Err(Error::invalid("attention matrices must be non-empty"));
        }
        if self.wk.shape() != (c, dm) || self.wv.shape() != (c, dm) || self.wo.shape() != (dm, c) {
            return Err(Error::invalid("attention matrix shapes disagree"));
        }
        if self.heads == 0 || dm % self.heads != 0 {
            return Err(Error::invalid(format!(
                "model dimension {dm} is not divisible by {} heads",
                self.heads
            )));
        }
        let all = [&self.wq, &self.wk, &self.wv, &self.wo];
        if all.iter().any(|m| m.iter().any(|x| !x.is_finite())) {
            return Err(Error::invalid("attention weights must be finite"));
        }
        Ok(())
    }
}

fn feature_matrix(features: &[&[f64]], c: usize) -> Result<DMatrix<f64>> {
    if let Some(f) = features.iter().find(|f| f.len() != c) {
        return Err(Error::invalid(format!("feature of length {} where {c} expected", f.len())));
    }
    Ok(DMatrix::from_fn(features.len(), c, |i, j| features[i][j]))
}

fn softmax_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|x| *x = (*x - max).exp());
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= sum);
    }
}

struct Attention {
    /// Per head, `N × K`.
    weights: Vec<DMatrix<f64>>,
    /// `N × D_m`, heads concatenated.
    context: DMatrix<f64>,
}

fn attend(features: &[&[f64]], bank: &MemoryBank, w: &AttentionWeights) -> Result<Attention> {
    w.validate()?;
    let c = w.dim();
    if bank.dim() != c {
        return Err(Error::invalid(format!(
            "bank dimension {} differs from feature dimension {c}",
            bank.dim()
        )));
    }
    let f = feature_matrix(features, c)?;
    let entries: Vec<&[f64]> = bank.entries().iter().map(Vec::as_slice).collect();
    let m = feature_matrix(&entries, c)?;
    let q = &f * &w.wq;
    let k = &m * &w.wk;
    let v = &m * &w.wv;
    let dm = w.model_dim();
    let dh = dm / w.heads;
    let scale = 1.0 / (dm as f64).sqrt();
    let mut context = DMatrix::zeros(features.len(), dm);
    let mut weights = Vec::with_capacity(w.heads);
    for h in 0..w.heads {
        let qh = q.columns(h * dh, dh);
        let kh = k.columns(h * dh, dh);
        let mut a = (qh * kh.transpose()) * scale;
        softmax_rows(&mut a);
        context.columns_mut(h * dh, dh).copy_from(&(&a * v.columns(h * dh, dh)));
        weights.push(a);
    }
    Ok(Attention { weights, context })
}

/// Per-head attention weights, each `N × K`.
pub fn attention_weights(
    features: &[&[f64]],
    bank: &MemoryBank,
    w: &AttentionWeights,
) -> Result<Vec<DMatrix<f64>>> {
    Ok(attend(features, bank, w)?.weights)
}

/// Enhanced feature vectors: the projected attention context plus the input.
pub fn enhance_vectors(
    features: &[&[f64]],
    bank: &MemoryBank,
    w: &AttentionWeights,
) -> Result<Vec<Vec<f64>>> {
    if features.is_empty() {
        return Ok(Vec::new());
    }
    let att = attend(features, bank, w)?;
    let projected = &att.context * &w.wo;
    Ok(features
        .iter()
        .enumerate()
        .map(|(i, f)| f.iter().enumerate().map(|(j, x)| projected[(i, j)] + x).collect())
        .collect())
}

pub fn enhance(
    features: &[LocalFeature],
    bank: &MemoryBank,
    w: &AttentionWeights,
) -> Result<Vec<LocalFeature>> {
    let vectors: Vec<&[f64]> = features.iter().map(|f| f.vector.as_slice()).collect();
    Ok(enhance_vectors(&vectors, bank, w)?
        .into_iter()
        .zip(features)
        .map(|(vector, f)| LocalFeature {
            vector,
            source_point: f.source_point,
            source_view: f.source_view,
        })
        .collect())
}
