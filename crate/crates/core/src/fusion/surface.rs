use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::marching_cubes::{cell_gradient, extract_mesh, field_gradient, SurfaceMesh};
use super::volume::FrozenVolume;
use crate::error::{Error, Result};
use crate::spatial::PointGrid;

pub const DEFAULT_NEIGHBORHOOD_K: usize = 16;
pub const DEFAULT_TARGET_POINTS: usize = 4000;

const MAX_VARIATION: f64 = 1.0 / 3.0;

/// Oriented point cloud with per-point surface uncertainty `c` (mm, standard
/// deviation) and surface variation `u` in [0, 1/3].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurfaceCloud {
    pub positions: Vec<Point3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub uncertainty: Vec<f64>,
    pub variation: Vec<f64>,
}

impl SurfaceCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Checks the per-point invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if self.normals.len() != n || self.uncertainty.len() != n || self.variation.len() != n {
            return Err(Error::InvalidInput("surface cloud attribute lengths differ".into()));
        }
        for i in 0..n {
            if (self.normals[i].norm() - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidInput(format!("normal {i} is not unit length")));
            }
            if !(self.uncertainty[i] >= 0.0) {
                return Err(Error::InvalidInput(format!("uncertainty {i} negative")));
            }
            let u = self.variation[i];
            if !(0.0..=MAX_VARIATION + 1e-9).contains(&u) {
                return Err(Error::InvalidInput(format!("surface variation {u} at {i} out of range")));
            }
        }
        Ok(())
    }

    /// Applies a similarity transform (rotation, translation, uniform scale
    /// about the origin). Uncertainty scales with length; variation is
    /// scale-free.
    pub fn transformed(&self, iso: &nalgebra::Isometry3<f64>, scale: f64) -> Self {
        Self {
            positions: self
                .positions
                .iter()
                .map(|p| iso * Point3::from(p.coords * scale))
                .collect(),
            normals: self.normals.iter().map(|n| iso.rotation * n).collect(),
            uncertainty: self.uncertainty.iter().map(|c| c * scale).collect(),
            variation: self.variation.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub target_points: usize,
    pub neighborhood_k: usize,
    pub seed: u64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            target_points: DEFAULT_TARGET_POINTS,
            neighborhood_k: DEFAULT_NEIGHBORHOOD_K,
            seed: 0,
        }
    }
}

/// Extracts the zero-level surface of a frozen volume and resamples it to
/// `target_points` evenly spread points.
pub fn extract_surface(volume: &FrozenVolume, opts: &ExtractOptions) -> Result<SurfaceCloud> {
    if opts.target_points == 0 {
        return Err(Error::InvalidConfig("target point count must be > 0".into()));
    }
    let vol = volume.volume();
    let mesh = extract_mesh(vol);
    if mesh.triangles.is_empty() {
        return Err(Error::EmptySurface);
    }
    let samples = resample_uniform(&mesh, opts.target_points, opts.seed)?;

    let mut cloud = SurfaceCloud::default();
    for s in &samples {
        let [a, b, c] = mesh.triangles[s.triangle].map(|i| i as usize);
        let w = s.bary;
        cloud.positions.push(s.position);
        cloud
            .uncertainty
            .push(w[0] * mesh.sigma[a] + w[1] * mesh.sigma[b] + w[2] * mesh.sigma[c]);
        let cell = mesh.triangle_cells[s.triangle];
        let face = {
            let [pa, pb, pc] = [a, b, c].map(|i| mesh.vertices[i]);
            (pb - pa).cross(&(pc - pa))
        };
        let raw = cell_gradient(vol, cell, &s.position).unwrap_or_else(Vector3::zeros);
        let grad = field_gradient(vol, cell, &s.position).unwrap_or(raw);
        // outward = towards free space = against the gradient
        let normal = match (-grad).try_normalize(1e-12) {
            Some(n) => n,
            None => {
                let f = face.try_normalize(1e-18).unwrap_or_else(Vector3::z);
                if f.dot(&raw) > 0.0 {
                    -f
                } else {
                    f
                }
            }
        };
        cloud.normals.push(normal);
    }
    let k = opts.neighborhood_k.min(cloud.positions.len());
    cloud.variation = surface_variation(&cloud.positions, k)?.values;
    Ok(cloud)
}

#[derive(Debug, Clone, Copy)]
struct SurfaceSample {
    triangle: usize,
    bary: [f64; 3],
    position: Point3<f64>,
}

/// Area-weighted random candidates thinned by greedy Poisson-disk rejection.
/// The disk radius is the largest (by bisection) that still keeps at least
/// `target` candidates; the first `target` survivors are returned.
fn resample_uniform(mesh: &SurfaceMesh, target: usize, seed: u64) -> Result<Vec<SurfaceSample>> {
    let areas: Vec<f64> = (0..mesh.triangles.len()).map(|t| mesh.triangle_area(t)).collect();
    let total: f64 = areas.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptySurface);
    }
    let mut cdf = Vec::with_capacity(areas.len());
    let mut acc = 0.0;
    for a in &areas {
        acc += a;
        cdf.push(acc);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_cand = (6 * target).max(2000);
    let candidates: Vec<SurfaceSample> = (0..n_cand)
        .map(|_| {
            let x = rng.random::<f64>() * total;
            let t = cdf.partition_point(|c| *c < x).min(cdf.len() - 1);
            let (mut r1, mut r2): (f64, f64) = (rng.random(), rng.random());
            if r1 + r2 > 1.0 {
                r1 = 1.0 - r1;
                r2 = 1.0 - r2;
            }
            let bary = [1.0 - r1 - r2, r1, r2];
            let [a, b, c] = mesh.triangles[t].map(|i| mesh.vertices[i as usize]);
            let position = Point3::from(a.coords * bary[0] + b.coords * bary[1] + c.coords * bary[2]);
            SurfaceSample {
                triangle: t,
                bary,
                position,
            }
        })
        .collect();

    let positions: Vec<Point3<f64>> = candidates.iter().map(|c| c.position).collect();
    let mut lo = 0.0;
    let mut hi = (2.0 * total / (target as f64 * 3f64.sqrt())).sqrt() * 2.0;
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if poisson_accept(&positions, mid, target).len() >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let kept = poisson_accept(&positions, lo, target);
    if kept.len() < target {
        return Err(Error::Numerical(format!(
            "resampling produced {} of {target} points",
            kept.len()
        )));
    }
    Ok(kept.into_iter().map(|i| candidates[i]).collect())
}

/// Greedy dart-throwing over `points` in order; stops after `limit` accepts.
fn poisson_accept(points: &[Point3<f64>], radius: f64, limit: usize) -> Vec<usize> {
    if radius <= 0.0 {
        return (0..points.len().min(limit)).collect();
    }
    let mut lo = points[0].coords;
    let mut hi = points[0].coords;
    for p in points {
        lo = lo.inf(&p.coords);
        hi = hi.sup(&p.coords);
    }
    let extent = hi - lo;
    let mut cell = radius;
    while (0..3).map(|a| extent[a] / cell + 1.0).product::<f64>() > 4e6 {
        cell *= 1.5;
    }
    let dims = [0, 1, 2].map(|a| (extent[a] / cell) as usize + 1);
    let mut head = vec![u32::MAX; dims[0] * dims[1] * dims[2]];
    let mut next: Vec<u32> = Vec::new();
    let mut accepted: Vec<usize> = Vec::new();
    let r2 = radius * radius;
    let reach = (radius / cell).ceil() as i64;
    for (i, p) in points.iter().enumerate() {
        let c = [0, 1, 2].map(|a| (((p[a] - lo[a]) / cell) as i64).min(dims[a] as i64 - 1));
        let mut clear = true;
        'scan: for z in (c[2] - reach).max(0)..=(c[2] + reach).min(dims[2] as i64 - 1) {
            for y in (c[1] - reach).max(0)..=(c[1] + reach).min(dims[1] as i64 - 1) {
                for x in (c[0] - reach).max(0)..=(c[0] + reach).min(dims[0] as i64 - 1) {
                    let mut e = head[(z as usize * dims[1] + y as usize) * dims[0] + x as usize];
                    while e != u32::MAX {
                        let q = &points[accepted[e as usize]];
                        if (q - p).norm_squared() < r2 {
                            clear = false;
                            break 'scan;
                        }
                        e = next[e as usize];
                    }
                }
            }
        }
        if clear {
            let slot = (c[2] as usize * dims[1] + c[1] as usize) * dims[0] + c[0] as usize;
            next.push(head[slot]);
            head[slot] = accepted.len() as u32;
            accepted.push(i);
            if accepted.len() >= limit {
                break;
            }
        }
    }
    accepted
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceVariation {
    pub values: Vec<f64>,
    /// Points whose neighbourhood collapsed to a single location (u set to 0).
    pub degenerate: Vec<usize>,
}

/// Surface variation `λ0 / (λ0 + λ1 + λ2)` of each point's `k` nearest
/// neighbours (the point itself included), clamped to [0, 1/3].
pub fn surface_variation(points: &[Point3<f64>], k: usize) -> Result<SurfaceVariation> {
    if k < 3 {
        return Err(Error::InvalidInput(format!("neighbourhood size {k} must be >= 3")));
    }
    if points.len() < k {
        return Err(Error::InvalidInput(format!(
            "cloud has {} points, neighbourhood needs {k}",
            points.len()
        )));
    }
    let grid = PointGrid::for_surface(points, k);
    let results: Vec<(f64, bool)> = points
        .par_iter()
        .map(|p| {
            let nb = grid.nearest_k(p, k);
            let n = nb.len() as f64;
            let mean = nb.iter().fold(Vector3::zeros(), |a, (i, _)| a + points[*i].coords) / n;
            let mut cov = Matrix3::zeros();
            for (i, _) in &nb {
                let d = points[*i].coords - mean;
                cov += d * d.transpose();
            }
            cov /= n;
            let trace = cov.trace();
            let scale = nb.iter().map(|(_, d2)| *d2).fold(0.0, f64::max);
            if !(trace > 1e-12 * scale.max(1e-300)) || trace <= 0.0 {
                return (0.0, true);
            }
            let eig = SymmetricEigen::new(cov);
            let smallest = eig.eigenvalues.min().max(0.0);
            ((smallest / trace).clamp(0.0, MAX_VARIATION), false)
        })
        .collect();
    let degenerate = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.1.then_some(i))
        .collect();
    Ok(SurfaceVariation {
        values: results.into_iter().map(|r| r.0).collect(),
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::volume::{FusedVolume, Gaussian};

    fn analytic_sphere(radius: f64, vs: f64) -> FrozenVolume {
        let n = ((2.0 * radius + 10.0 * vs) / vs) as usize;
        let half = n as f64 * vs / 2.0;
        let mut vol = FusedVolume::new(Point3::new(-half, -half, -half), vs, [n, n, n], 4.0 * vs).unwrap();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let d = radius - vol.voxel_center(i, j, k).coords.norm();
                    if d.abs() <= vol.truncation() {
                        vol.set_voxel(i, j, k, Some(Gaussian::new(d, 0.25))).unwrap();
                    }
                }
            }
        }
        vol.freeze()
    }

    #[test]
    fn extracts_exact_point_count_on_sphere() {
        let vol = analytic_sphere(50.0, 3.0);
        let opts = ExtractOptions {
            target_points: 1000,
            ..Default::default()
        };
        let cloud = extract_surface(&vol, &opts).unwrap();
        assert_eq!(cloud.len(), 1000);
        cloud.validate().unwrap();
        let rms = (cloud
            .positions
            .iter()
            .map(|p| (p.coords.norm() - 50.0).powi(2))
            .sum::<f64>()
            / 1000.0)
            .sqrt();
        assert!(rms <= 3.0, "rms {rms}");
        for (p, n) in cloud.positions.iter().zip(&cloud.normals) {
            assert!(n.dot(&p.coords.normalize()) > 0.9, "normal not outward");
        }
        for c in &cloud.uncertainty {
            assert!((c - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn all_positive_volume_is_empty_surface() {
        let mut vol = FusedVolume::new(Point3::origin(), 3.0, [5, 5, 5], 12.0).unwrap();
        for k in 0..5 {
            for j in 0..5 {
                for i in 0..5 {
                    vol.set_voxel(i, j, k, Some(Gaussian::new(12.0, 1.0))).unwrap();
                }
            }
        }
        let r = extract_surface(&vol.freeze(), &ExtractOptions::default());
        assert!(matches!(r, Err(Error::EmptySurface)));
    }

    #[test]
    fn extraction_is_deterministic() {
        let vol = analytic_sphere(30.0, 3.0);
        let opts = ExtractOptions {
            target_points: 500,
            seed: 7,
            ..Default::default()
        };
        assert_eq!(
            extract_surface(&vol, &opts).unwrap(),
            extract_surface(&vol, &opts).unwrap()
        );
    }

    #[test]
    fn resampled_points_are_spread() {
        let vol = analytic_sphere(50.0, 3.0);
        let opts = ExtractOptions {
            target_points: 800,
            ..Default::default()
        };
        let cloud = extract_surface(&vol, &opts).unwrap();
        let grid = PointGrid::new(&cloud.positions, 5.0);
        let min_gap = cloud
            .positions
            .iter()
            .map(|p| grid.nearest_k(p, 2)[1].1.sqrt())
            .fold(f64::INFINITY, f64::min);
        // nominal spacing for 800 points on this sphere is ~6 mm
        assert!(min_gap > 2.0, "min gap {min_gap}");
    }

    #[test]
    fn plane_has_zero_variation() {
        let pts: Vec<_> = (0..20)
            .flat_map(|i| (0..20).map(move |j| Point3::new(i as f64, j as f64 * 1.3, 5.0)))
            .collect();
        let sv = surface_variation(&pts, 16).unwrap();
        assert!(sv.values.iter().all(|u| *u < 1e-12));
        assert!(sv.degenerate.is_empty());
    }

    #[test]
    fn symmetric_lattice_shell_is_exactly_one_third() {
        // the 33 nearest lattice points to the centre form complete cubic
        // shells (1 + 6 + 12 + 8 + 6), so the covariance is isotropic
        let pts: Vec<_> = (0..9)
            .flat_map(|k| (0..9).flat_map(move |j| (0..9).map(move |i| Point3::new(i as f64, j as f64, k as f64))))
            .collect();
        let sv = surface_variation(&pts, 33).unwrap();
        let center = (4 * 9 + 4) * 9 + 4;
        assert!((sv.values[center] - 1.0 / 3.0).abs() < 1e-12, "{}", sv.values[center]);
    }

    #[test]
    fn cylinder_wall_is_between_plane_and_blob() {
        // points on a radius-5 cylinder patch, oracle from direct eigen-decomposition
        let pts: Vec<_> = (0..40)
            .flat_map(|i| {
                (0..40).map(move |j| {
                    let a = j as f64 * 2.0 * std::f64::consts::PI / 40.0;
                    Point3::new(5.0 * a.cos(), 5.0 * a.sin(), i as f64 * 0.8)
                })
            })
            .collect();
        let sv = surface_variation(&pts, 16).unwrap();
        let u = sv.values[20 * 40 + 5];
        assert!(u > 1e-4 && u < 1.0 / 3.0, "{u}");
    }

    #[test]
    fn coincident_points_are_flagged() {
        let pts = vec![Point3::new(1.0, 1.0, 1.0); 20];
        let sv = surface_variation(&pts, 16).unwrap();
        assert!(sv.values.iter().all(|u| *u == 0.0));
        assert_eq!(sv.degenerate.len(), 20);
    }

    #[test]
    fn too_few_points_is_an_error() {
        let pts = vec![Point3::origin(); 5];
        assert!(surface_variation(&pts, 16).is_err());
    }
}
