//! Point-cloud container, uniform hash-grid index and neighborhood queries.

use std::collections::{BTreeMap, HashMap};

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec3, GEOM_EPS};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub colors: Option<Vec<[u8; 3]>>,
    /// Additional per-point scalar channels, e.g. `graspness`.
    pub scalars: BTreeMap<String, Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        PointCloud {
            points,
            ..Default::default()
        }
    }

    pub fn with_normals(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        let cloud = PointCloud {
            points,
            normals: Some(normals),
            ..Default::default()
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if self.points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("point coordinates must be finite"));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(Error::invalid(format!(
                    "{} normals for {n} points",
                    normals.len()
                )));
            }
            if let Some(i) = normals.iter().position(|v| (v.norm() - 1.0).abs() > 1e-6) {
                return Err(Error::invalid(format!("normal {i} is not unit length")));
            }
        }
        if self.colors.as_ref().is_some_and(|c| c.len() != n) {
            return Err(Error::invalid("color count differs from point count"));
        }
        if let Some((name, _)) = self.scalars.iter().find(|(_, v)| v.len() != n) {
            return Err(Error::invalid(format!("scalar channel {name} has wrong length")));
        }
        Ok(())
    }

    pub fn scalar(&self, name: &str) -> Option<&[f64]> {
        self.scalars.get(name).map(Vec::as_slice)
    }

    /// Concatenates clouds. Optional channels survive only when every input
    /// carries them.
    pub fn concat(clouds: &[&PointCloud]) -> PointCloud {
        let mut out = PointCloud::default();
        let all_normals = clouds.iter().all(|c| c.normals.is_some());
        let all_colors = clouds.iter().all(|c| c.colors.is_some());
        out.normals = all_normals.then(Vec::new);
        out.colors = all_colors.then(Vec::new);
        for c in clouds {
            out.points.extend_from_slice(&c.points);
            if let (Some(dst), Some(src)) = (out.normals.as_mut(), c.normals.as_ref()) {
                dst.extend_from_slice(src);
            }
            if let (Some(dst), Some(src)) = (out.colors.as_mut(), c.colors.as_ref()) {
                dst.extend_from_slice(src);
            }
        }
        out
    }

    /// Applies `x ↦ R·x + t`; normals are rotated.
    pub fn transformed(&self, pose: &crate::geometry::RigidPose) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.apply(p)).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| pose.apply_vector(n)).collect()),
            colors: self.colors.clone(),
            scalars: self.scalars.clone(),
        }
    }
}

type CellKey = (i64, i64, i64);

fn cell_of(p: &Vec3, cell: f64) -> CellKey {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

/// Uniform hash grid over a point set. Indices inside a cell are ascending.
#[derive(Clone, Debug)]
pub struct HashGrid {
    cell: f64,
    cells: HashMap<CellKey, Vec<u32>>,
    key_min: CellKey,
    key_max: CellKey,
}

impl HashGrid {
    pub fn new(points: &[Vec3], cell: f64) -> Result<Self> {
        if !(cell.is_finite() && cell > 0.0) {
            return Err(Error::invalid("grid cell size must be positive"));
        }
        let mut cells: HashMap<CellKey, Vec<u32>> = HashMap::new();
        let mut key_min = (i64::MAX, i64::MAX, i64::MAX);
        let mut key_max = (i64::MIN, i64::MIN, i64::MIN);
        for (i, p) in points.iter().enumerate() {
            let k = cell_of(p, cell);
            key_min = (key_min.0.min(k.0), key_min.1.min(k.1), key_min.2.min(k.2));
            key_max = (key_max.0.max(k.0), key_max.1.max(k.1), key_max.2.max(k.2));
            cells.entry(k).or_default().push(i as u32);
        }
        Ok(HashGrid {
            cell,
            cells,
            key_min,
            key_max,
        })
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    /// Indices (ascending) of points within `radius` of `center`.
    pub fn within(&self, points: &[Vec3], center: &Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let lo = cell_of(&(center - Vec3::repeat(radius)), self.cell);
        let hi = cell_of(&(center + Vec3::repeat(radius)), self.cell);
        let r2 = radius * radius;
        for x in lo.0..=hi.0 {
            for y in lo.1..=hi.1 {
                for z in lo.2..=hi.2 {
                    if let Some(ids) = self.cells.get(&(x, y, z)) {
                        for &i in ids {
                            if (points[i as usize] - center).norm_squared() <= r2 {
                                out.push(i as usize);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Nearest point to `query`, ties broken by lowest index.
    pub fn nearest(&self, points: &[Vec3], query: &Vec3) -> Option<(usize, f64)> {
        if points.is_empty() {
            return None;
        }
        let center = cell_of(query, self.cell);
        let mut best: Option<(usize, f64)> = None;
        let max_ring = self.max_ring(&center);
        for ring in 0..=max_ring {
            for (x, y, z) in shell(center, ring) {
                if let Some(ids) = self.cells.get(&(x, y, z)) {
                    for &i in ids {
                        let d2 = (points[i as usize] - query).norm_squared();
                        let better = match best {
                            None => true,
                            Some((bi, bd)) => d2 < bd || (d2 == bd && (i as usize) < bi),
                        };
                        if better {
                            best = Some((i as usize, d2));
                        }
                    }
                }
            }
            // every point in ring r+1 or beyond is at least r·cell away
            if let Some((_, bd)) = best {
                let bound = ring as f64 * self.cell;
                if bound * bound > bd {
                    break;
                }
            }
        }
        best.map(|(i, d2)| (i, d2.sqrt()))
    }

    fn max_ring(&self, c: &CellKey) -> i64 {
        if self.cells.is_empty() {
            return 0;
        }
        let span = |lo: i64, hi: i64, x: i64| (x - lo).abs().max((hi - x).abs());
        span(self.key_min.0, self.key_max.0, c.0)
            .max(span(self.key_min.1, self.key_max.1, c.1))
            .max(span(self.key_min.2, self.key_max.2, c.2))
    }
}

fn shell(c: CellKey, ring: i64) -> impl Iterator<Item = CellKey> {
    let r = ring;
    (-r..=r).flat_map(move |dx| {
        (-r..=r).flat_map(move |dy| {
            (-r..=r).filter_map(move |dz| {
                if dx.abs().max(dy.abs()).max(dz.abs()) == r {
                    Some((c.0 + dx, c.1 + dy, c.2 + dz))
                } else {
                    None
                }
            })
        })
    })
}

/// A cloud plus a hash grid, for repeated neighborhood queries.
#[derive(Clone, Debug)]
pub struct CloudIndex<'a> {
    pub cloud: &'a PointCloud,
    grid: HashGrid,
}

impl<'a> CloudIndex<'a> {
    pub fn new(cloud: &'a PointCloud, cell: f64) -> Result<Self> {
        Ok(CloudIndex {
            grid: HashGrid::new(&cloud.points, cell)?,
            cloud,
        })
    }

    pub fn within(&self, center: &Vec3, radius: f64) -> Vec<usize> {
        self.grid.within(&self.cloud.points, center, radius)
    }

    pub fn nearest(&self, query: &Vec3) -> Option<(usize, f64)> {
        self.grid.nearest(&self.cloud.points, query)
    }

    /// Same contract as [`cylinder_group`], using the grid to prune.
    pub fn cylinder_group(
        &self,
        center: &Vec3,
        axis: &Vec3,
        radius: f64,
        height: f64,
        max_points: usize,
    ) -> Vec<usize> {
        let bound = (radius * radius + height * height / 4.0).sqrt();
        let mut out: Vec<usize> = self
            .within(center, bound + GEOM_EPS)
            .into_iter()
            .filter(|&i| in_cylinder(&self.cloud.points[i], center, axis, radius, height))
            .collect();
        out.truncate(max_points);
        out
    }
}

fn in_cylinder(q: &Vec3, center: &Vec3, axis: &Vec3, radius: f64, height: f64) -> bool {
    let d = q - center;
    let along = d.dot(axis);
    let radial2 = (d - axis * along).norm_squared();
    along.abs() <= height / 2.0 + GEOM_EPS && radial2 <= (radius + GEOM_EPS).powi(2)
}

/// Indices of points inside the cylinder of `radius` and total `height`
/// centred at `center` with unit `axis`. When more than `max_points` qualify
/// the lowest indices are kept.
pub fn cylinder_group(
    cloud: &PointCloud,
    center: &Vec3,
    axis: &Vec3,
    radius: f64,
    height: f64,
    max_points: usize,
) -> Vec<usize> {
    cloud
        .points
        .iter()
        .enumerate()
        .filter(|(_, q)| in_cylinder(q, center, axis, radius, height))
        .map(|(i, _)| i)
        .take(max_points)
        .collect()
}

/// One centroid per occupied voxel, ordered by voxel key.
pub fn voxel_downsample(cloud: &PointCloud, voxel: f64) -> Result<PointCloud> {
    if !(voxel.is_finite() && voxel > 0.0) {
        return Err(Error::invalid("voxel size must be positive"));
    }
    let mut groups: BTreeMap<CellKey, Vec<usize>> = BTreeMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        groups.entry(cell_of(p, voxel)).or_default().push(i);
    }
    let mut out = PointCloud {
        normals: cloud.normals.as_ref().map(|_| Vec::with_capacity(groups.len())),
        colors: cloud.colors.as_ref().map(|_| Vec::with_capacity(groups.len())),
        scalars: cloud.scalars.keys().map(|k| (k.clone(), Vec::new())).collect(),
        points: Vec::with_capacity(groups.len()),
    };
    for ids in groups.values() {
        let n = ids.len() as f64;
        if ids.len() == 1 {
            let i = ids[0];
            out.points.push(cloud.points[i]);
            if let (Some(dst), Some(src)) = (out.normals.as_mut(), cloud.normals.as_ref()) {
                dst.push(src[i]);
            }
            if let (Some(dst), Some(src)) = (out.colors.as_mut(), cloud.colors.as_ref()) {
                dst.push(src[i]);
            }
            for (k, v) in out.scalars.iter_mut() {
                v.push(cloud.scalars[k][i]);
            }
            continue;
        }
        let sum: Vec3 = ids.iter().map(|&i| cloud.points[i]).sum();
        out.points.push(sum / n);
        if let (Some(dst), Some(src)) = (out.normals.as_mut(), cloud.normals.as_ref()) {
            let s: Vec3 = ids.iter().map(|&i| src[i]).sum();
            // opposing normals cancel; fall back to the first one
            dst.push(s.try_normalize(1e-12).unwrap_or(src[ids[0]]));
        }
        if let (Some(dst), Some(src)) = (out.colors.as_mut(), cloud.colors.as_ref()) {
            let mut acc = [0f64; 3];
            for &i in ids {
                for c in 0..3 {
                    acc[c] += src[i][c] as f64;
                }
            }
            dst.push(acc.map(|a| (a / n).round() as u8));
        }
        for (k, v) in out.scalars.iter_mut() {
            let src = &cloud.scalars[k];
            v.push(ids.iter().map(|&i| src[i]).sum::<f64>() / n);
        }
    }
    Ok(out)
}

/// Sample covariance of a point set, accumulated in the given order.
pub fn covariance(points: &[Vec3]) -> Mat3 {
    let n = points.len().max(1) as f64;
    let mean: Vec3 = points.iter().sum::<Vec3>() / n;
    let mut cov = Mat3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov / n
}

/// Eigenvalues of a symmetric 3×3 matrix with matching eigenvectors, sorted
/// descending.
pub fn sorted_eigen(m: &Mat3) -> ([f64; 3], [Vec3; 3]) {
    let eig = SymmetricEigen::new(*m);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.map(|i| eig.eigenvalues[i]);
    let vecs = order.map(|i| eig.eigenvectors.column(i).into_owned());
    (vals, vecs)
}

/// PCA normals from neighbors within `radius`, oriented towards `viewpoint`.
/// Points with fewer than three neighbors get the direction to the viewpoint.
pub fn estimate_normals(cloud: &PointCloud, radius: f64, viewpoint: &Vec3) -> Result<Vec<Vec3>> {
    let index = CloudIndex::new(cloud, radius)?;
    let normals = cloud
        .points
        .iter()
        .map(|p| {
            let to_view = (viewpoint - p).try_normalize(1e-12).unwrap_or(Vec3::z());
            let nbrs = index.within(p, radius);
            if nbrs.len() < 3 {
                return to_view;
            }
            let pts: Vec<Vec3> = nbrs.iter().map(|&i| cloud.points[i]).collect();
            let (_, vecs) = sorted_eigen(&covariance(&pts));
            let n = vecs[2].normalize();
            if n.dot(&to_view) < 0.0 {
                -n
            } else {
                n
            }
        })
        .collect();
    Ok(normals)
}
