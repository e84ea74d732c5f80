use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::frame::DepthFrame;
use crate::error::{Error, Result};
use crate::sensor::SensorModel;

pub const DEFAULT_VOXEL_SIZE: f64 = 3.0;

/// Normal belief over a signed distance (mm, mm²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub var: f64,
}

impl Gaussian {
    pub fn new(mean: f64, var: f64) -> Self {
        Self { mean, var }
    }
}

/// Precision-weighted fusion of a prior belief with a measurement.
pub fn gaussian_update(prior: Gaussian, meas: Gaussian) -> Result<Gaussian> {
    if !(prior.var > 0.0) || !(meas.var > 0.0) {
        return Err(Error::InvalidInput(format!(
            "variances must be positive (prior {}, measurement {})",
            prior.var, meas.var
        )));
    }
    let denom = prior.var + meas.var;
    Ok(Gaussian {
        mean: (prior.mean * meas.var + meas.mean * prior.var) / denom,
        var: prior.var * meas.var / denom,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrationStats {
    /// Masked pixels with a valid depth.
    pub usable_pixels: usize,
    /// Usable pixels dropped for grazing incidence.
    pub grazing_pixels: usize,
    pub voxels_updated: usize,
    pub voxels_first_observed: usize,
}

/// Truncated voxel grid of signed-distance beliefs.
///
/// Distances are projective, measured along the camera ray: negative in free
/// space in front of the surface, positive behind it. Only voxels within the
/// truncation band of some measurement carry a belief.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedVolume {
    origin: Point3<f64>,
    voxel_size: f64,
    dims: [usize; 3],
    truncation: f64,
    voxels: Vec<Option<Gaussian>>,
}

impl FusedVolume {
    /// `origin` is the outer corner of voxel (0, 0, 0).
    pub fn new(origin: Point3<f64>, voxel_size: f64, dims: [usize; 3], truncation: f64) -> Result<Self> {
        if !(voxel_size > 0.0) || !voxel_size.is_finite() {
            return Err(Error::InvalidConfig(format!("voxel size {voxel_size} must be > 0")));
        }
        if !(truncation > 0.0) || !truncation.is_finite() {
            return Err(Error::InvalidConfig(format!("truncation {truncation} must be > 0")));
        }
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidConfig(format!("grid dims {dims:?} too small")));
        }
        let n = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .filter(|&n| n <= 400_000_000)
            .ok_or_else(|| Error::InvalidConfig(format!("grid dims {dims:?} too large")))?;
        Ok(Self {
            origin,
            voxel_size,
            dims,
            truncation,
            voxels: vec![None; n],
        })
    }

    /// Smallest grid covering the masked points of all frames, padded by the
    /// truncation band plus one voxel.
    pub fn enclosing(frames: &[DepthFrame], voxel_size: f64, truncation: f64) -> Result<Self> {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for f in frames {
            for p in f.world_points() {
                lo = lo.inf(&p.coords);
                hi = hi.sup(&p.coords);
            }
        }
        if !lo.x.is_finite() {
            return Err(Error::InvalidInput("no masked depth in any frame".into()));
        }
        let pad = truncation + voxel_size;
        lo -= Vector3::repeat(pad);
        hi += Vector3::repeat(pad);
        let dims = [0, 1, 2].map(|a| ((hi[a] - lo[a]) / voxel_size).ceil() as usize + 1);
        Self::new(Point3::from(lo), voxel_size, dims, truncation)
    }

    pub fn origin(&self) -> Point3<f64> {
        self.origin
    }
    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Option<Gaussian> {
        self.voxels[self.index(i, j, k)]
    }

    /// Overwrites one voxel. Beliefs must respect the truncation band.
    pub fn set_voxel(&mut self, i: usize, j: usize, k: usize, value: Option<Gaussian>) -> Result<()> {
        if i >= self.dims[0] || j >= self.dims[1] || k >= self.dims[2] {
            return Err(Error::InvalidInput(format!("voxel ({i}, {j}, {k}) out of bounds")));
        }
        if let Some(g) = value {
            if !(g.var > 0.0) || !(g.mean.abs() <= self.truncation) {
                return Err(Error::InvalidInput(format!(
                    "voxel belief {g:?} violates truncation {} or variance > 0",
                    self.truncation
                )));
            }
        }
        let idx = self.index(i, j, k);
        self.voxels[idx] = value;
        Ok(())
    }

    pub fn voxels(&self) -> &[Option<Gaussian>] {
        &self.voxels
    }

    pub fn observed_count(&self) -> usize {
        self.voxels.iter().filter(|v| v.is_some()).count()
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        self.origin
            + Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.voxel_size
    }

    /// Fuses one depth frame. Every usable, non-grazing pixel updates the
    /// voxels its ray crosses within the truncation band of the measured
    /// surface; first-touch voxels adopt their first measurement.
    ///
    /// Work is split by voxel: each voxel gathers the pixels whose rays pass
    /// through its cube, in row-major order, so the result does not depend
    /// on scheduling.
    pub fn integrate(&mut self, frame: &DepthFrame, sensor: &SensorModel) -> IntegrationStats {
        let variances = frame.measurement_variances(sensor);
        let mut stats = IntegrationStats::default();
        for (i, v) in variances.iter().enumerate() {
            if frame.mask()[i] && frame.depth()[i] > 0.0 {
                stats.usable_pixels += 1;
                if v.is_none() {
                    stats.grazing_pixels += 1;
                }
            }
        }
        if variances.iter().all(Option::is_none) {
            return stats;
        }

        let world_to_cam = frame.pose().inverse();
        let intr = *frame.intrinsics();
        let (w, h) = (frame.width(), frame.height());
        let [nx, ny, _] = self.dims;
        let origin = self.origin;
        let vs = self.voxel_size;
        let tau = self.truncation;
        let depth = frame.depth();
        let eye = Point3::from(frame.pose().translation.vector);
        // unit ray in camera and world frames, and measured range, per pixel
        let rays: Vec<(Vector3<f64>, Vector3<f64>, f64)> = (0..w * h)
            .map(|i| {
                let r = intr.ray((i % w) as f64, (i / w) as f64);
                let n = r.norm();
                (r / n, frame.pose().rotation * (r / n), depth[i] * n)
            })
            .collect();
        let half = Vector3::repeat(vs / 2.0);

        let counts: (usize, usize) = self
            .voxels
            .par_chunks_mut(nx * ny)
            .enumerate()
            .map(|(k, slice)| {
                let mut updated = 0;
                let mut first = 0;
                for j in 0..ny {
                    for i in 0..nx {
                        let center = origin + Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * vs;
                        let Some((u0, u1, v0, v1)) = footprint(&world_to_cam, &intr, &center, vs, w, h) else {
                            continue;
                        };
                        let pc = world_to_cam * center;
                        let cell = &mut slice[j * nx + i];
                        let mut touched = false;
                        for v in v0..=v1 {
                            for u in u0..=u1 {
                                let pix = v * w + u;
                                let Some(var) = variances[pix] else {
                                    continue;
                                };
                                let (dir, dir_world, range) = rays[pix];
                                if !ray_hits_box(&eye, &dir_world, &(center - half), &(center + half)) {
                                    continue;
                                }
                                let sdf = pc.coords.dot(&dir) - range;
                                if sdf.abs() > tau {
                                    continue;
                                }
                                let meas = Gaussian::new(sdf, var);
                                *cell = Some(match *cell {
                                    Some(prior) => gaussian_update(prior, meas).expect("variances validated positive"),
                                    None => {
                                        first += 1;
                                        meas
                                    }
                                });
                                touched = true;
                            }
                        }
                        updated += usize::from(touched);
                    }
                }
                (updated, first)
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        stats.voxels_updated = counts.0;
        stats.voxels_first_observed = counts.1;
        stats
    }

    /// Ends integration; the frozen volume is read-only.
    pub fn freeze(self) -> FrozenVolume {
        FrozenVolume(self)
    }
}

/// Inclusive pixel-centre bounds covered by the projection of a voxel cube,
/// or `None` when the cube is off-image or reaches behind the camera.
fn footprint(
    world_to_cam: &nalgebra::Isometry3<f64>,
    intr: &crate::sensor::CameraIntrinsics,
    center: &Point3<f64>,
    vs: f64,
    w: usize,
    h: usize,
) -> Option<(usize, usize, usize, usize)> {
    let (mut umin, mut umax, mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for c in 0..8 {
        let off = Vector3::new(
            if c & 1 == 0 { -0.5 } else { 0.5 },
            if c & 2 == 0 { -0.5 } else { 0.5 },
            if c & 4 == 0 { -0.5 } else { 0.5 },
        ) * vs;
        let px = intr.project(&(world_to_cam * (center + off)))?;
        umin = umin.min(px.x);
        umax = umax.max(px.x);
        vmin = vmin.min(px.y);
        vmax = vmax.max(px.y);
    }
    let u0 = umin.ceil().max(0.0);
    let v0 = vmin.ceil().max(0.0);
    let u1 = umax.floor().min(w as f64 - 1.0);
    let v1 = vmax.floor().min(h as f64 - 1.0);
    (u0 <= u1 && v0 <= v1).then_some((u0 as usize, u1 as usize, v0 as usize, v1 as usize))
}

/// Slab test of the half-line `o + t d`, t ≥ 0, against a box.
fn ray_hits_box(o: &Point3<f64>, d: &Vector3<f64>, lo: &Point3<f64>, hi: &Point3<f64>) -> bool {
    let mut t0: f64 = 0.0;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if d[a].abs() < 1e-300 {
            if o[a] < lo[a] || o[a] > hi[a] {
                return false;
            }
            continue;
        }
        let (mut ta, mut tb) = ((lo[a] - o[a]) / d[a], (hi[a] - o[a]) / d[a]);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
    }
    t0 <= t1
}

/// An immutable fused volume, ready for surface extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenVolume(FusedVolume);

const VOLUME_MAGIC: &[u8; 8] = b"PSDFVOL1";

impl FrozenVolume {
    pub fn volume(&self) -> &FusedVolume {
        &self.0
    }

    /// Little-endian binary dump: magic, dims (u32 x3), origin (f64 x3),
    /// voxel size, truncation, then per voxel a flag byte and, when
    /// observed, mean and variance as f64.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let v = &self.0;
        w.write_all(VOLUME_MAGIC)?;
        for d in v.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for a in 0..3 {
            w.write_all(&v.origin[a].to_le_bytes())?;
        }
        w.write_all(&v.voxel_size.to_le_bytes())?;
        w.write_all(&v.truncation.to_le_bytes())?;
        for cell in &v.voxels {
            match cell {
                None => w.write_all(&[0])?,
                Some(g) => {
                    w.write_all(&[1])?;
                    w.write_all(&g.mean.to_le_bytes())?;
                    w.write_all(&g.var.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |m: &str| Error::parse("volume file", m);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| bad(&e.to_string()))?;
        if &magic != VOLUME_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u4 = [0u8; 4];
        let mut f8 = [0u8; 8];
        let mut dims = [0usize; 3];
        for d in &mut dims {
            r.read_exact(&mut u4).map_err(|e| bad(&e.to_string()))?;
            *d = u32::from_le_bytes(u4) as usize;
        }
        let mut next_f64 = |r: &mut R| -> Result<f64> {
            r.read_exact(&mut f8).map_err(|e| bad(&e.to_string()))?;
            Ok(f64::from_le_bytes(f8))
        };
        let origin = Point3::new(next_f64(&mut r)?, next_f64(&mut r)?, next_f64(&mut r)?);
        let voxel_size = next_f64(&mut r)?;
        let truncation = next_f64(&mut r)?;
        let mut vol = FusedVolume::new(origin, voxel_size, dims, truncation)?;
        let mut flag = [0u8; 1];
        for i in 0..vol.voxels.len() {
            r.read_exact(&mut flag).map_err(|e| bad(&e.to_string()))?;
            if flag[0] == 1 {
                let mean = next_f64(&mut r)?;
                let var = next_f64(&mut r)?;
                vol.voxels[i] = Some(Gaussian { mean, var });
            }
        }
        Ok(FrozenVolume(vol))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn update_examples() {
        let g = gaussian_update(Gaussian::new(10.0, 4.0), Gaussian::new(6.0, 4.0)).unwrap();
        assert_eq!((g.mean, g.var), (8.0, 2.0));

        let g = gaussian_update(Gaussian::new(0.0, 1e6), Gaussian::new(5.0, 1.0)).unwrap();
        assert!(close(g.mean, 5.0 * 1e6 / (1e6 + 1.0), 1e-12));
        assert!((g.mean - 4.999995).abs() < 1e-6);
        assert!((g.var - 0.999999).abs() < 1e-6);

        // (2*3 + 4*1) / 4 = 2.5 ; 1*3/4 = 0.75
        let g = gaussian_update(Gaussian::new(2.0, 1.0), Gaussian::new(4.0, 3.0)).unwrap();
        assert!(close(g.mean, 2.5, 1e-12) && close(g.var, 0.75, 1e-12));
    }

    #[test]
    fn update_rejects_nonpositive_variance() {
        assert!(gaussian_update(Gaussian::new(0.0, 0.0), Gaussian::new(1.0, 1.0)).is_err());
        assert!(gaussian_update(Gaussian::new(0.0, 1.0), Gaussian::new(1.0, -1.0)).is_err());
    }

    #[test]
    fn volume_rejects_bad_config() {
        assert!(FusedVolume::new(Point3::origin(), 0.0, [4, 4, 4], 1.0).is_err());
        assert!(FusedVolume::new(Point3::origin(), 1.0, [4, 4, 4], -1.0).is_err());
        assert!(FusedVolume::new(Point3::origin(), 1.0, [1, 4, 4], 1.0).is_err());
    }

    #[test]
    fn volume_file_roundtrip() {
        let mut v = FusedVolume::new(Point3::new(-1.0, 2.0, 3.5), 3.0, [3, 4, 5], 12.0).unwrap();
        let idx = v.index(1, 2, 3);
        v.voxels[idx] = Some(Gaussian::new(-1.25, 0.5));
        let frozen = v.freeze();
        let mut buf = Vec::new();
        frozen.write_to(&mut buf).unwrap();
        let back = FrozenVolume::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, frozen);
        assert!(FrozenVolume::read_from(&buf[..20]).is_err());
    }

    proptest! {
        #[test]
        fn update_is_symmetric(m1 in -20.0f64..20.0, v1 in 1e-3f64..50.0, m2 in -20.0f64..20.0, v2 in 1e-3f64..50.0) {
            let a = gaussian_update(Gaussian::new(m1, v1), Gaussian::new(m2, v2)).unwrap();
            let b = gaussian_update(Gaussian::new(m2, v2), Gaussian::new(m1, v1)).unwrap();
            prop_assert!((a.mean - b.mean).abs() <= 1e-9);
            prop_assert!((a.var - b.var).abs() <= 1e-9);
        }

        #[test]
        fn posterior_is_convex_and_tighter(m1 in -20.0f64..20.0, v1 in 1e-3f64..50.0, m2 in -20.0f64..20.0, v2 in 1e-3f64..50.0) {
            let g = gaussian_update(Gaussian::new(m1, v1), Gaussian::new(m2, v2)).unwrap();
            prop_assert!(g.mean >= m1.min(m2) - 1e-12 && g.mean <= m1.max(m2) + 1e-12);
            prop_assert!(g.var < v1.min(v2));
        }

        #[test]
        fn fusion_order_independent(ms in proptest::collection::vec((-10.0f64..10.0, 0.01f64..10.0), 2..6)) {
            let fold = |xs: &[(f64, f64)]| {
                let mut g = Gaussian::new(xs[0].0, xs[0].1);
                for &(m, v) in &xs[1..] {
                    g = gaussian_update(g, Gaussian::new(m, v)).unwrap();
                }
                g
            };
            let mut rev = ms.clone();
            rev.reverse();
            let a = fold(&ms);
            let b = fold(&rev);
            prop_assert!((a.mean - b.mean).abs() <= 1e-9);
            prop_assert!((a.var - b.var).abs() <= 1e-9);
        }
    }
}
