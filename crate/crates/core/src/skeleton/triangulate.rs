use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{pose_from_row_major, pose_to_row_major, Pose};
use crate::sensor::{CameraIntrinsics, IntrinsicsFile};

/// Rays closer to parallel than this (ratio of smallest to largest normal
/// matrix eigenvalue) cannot be intersected.
pub const MIN_RAY_CONDITION: f64 = 1e-10;

pub const DEFAULT_MIN_VIEWS: usize = 2;

/// One detected 2D keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointObservation {
    pub view: u32,
    pub keypoint: usize,
    /// (u, v) pixel coordinates
    pub pixel: [f64; 2],
    /// world <- camera
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
}

/// JSON-lines record form of [`KeypointObservation`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationRecord {
    pub view: u32,
    pub keypoint: usize,
    pub pixel: [f64; 2],
    pub pose: Vec<f64>,
    pub intrinsics: IntrinsicsFile,
}

impl KeypointObservation {
    pub fn new(view: u32, keypoint: usize, pixel: [f64; 2], pose: Pose, intrinsics: CameraIntrinsics) -> Result<Self> {
        let (w, h) = (intrinsics.x_res() as f64, intrinsics.y_res() as f64);
        let [u, v] = pixel;
        if !(u >= 0.0 && u < w && v >= 0.0 && v < h) {
            return Err(Error::InvalidInput(format!(
                "view {view} keypoint {keypoint}: pixel ({u}, {v}) outside {w}x{h} image"
            )));
        }
        Ok(Self {
            view,
            keypoint,
            pixel,
            pose,
            intrinsics,
        })
    }

    pub fn camera_center(&self) -> Point3<f64> {
        Point3::from(self.pose.translation.vector)
    }

    /// Unit world-frame direction of the back-projected ray.
    pub fn ray_direction(&self) -> Vector3<f64> {
        (self.pose.rotation * self.intrinsics.ray(self.pixel[0], self.pixel[1])).normalize()
    }

    pub fn to_record(&self) -> ObservationRecord {
        ObservationRecord {
            view: self.view,
            keypoint: self.keypoint,
            pixel: self.pixel,
            pose: pose_to_row_major(&self.pose).to_vec(),
            intrinsics: self.intrinsics.to_file(),
        }
    }

    pub fn from_record(r: ObservationRecord) -> Result<Self> {
        Self::new(
            r.view,
            r.keypoint,
            r.pixel,
            pose_from_row_major(&r.pose)?,
            CameraIntrinsics::try_from(r.intrinsics)?,
        )
    }
}

/// Reads one observation per non-blank line.
pub fn read_observations<R: BufRead>(reader: R) -> Result<Vec<KeypointObservation>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse("observations", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ObservationRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse("observations", format!("line {}: {e}", i + 1)))?;
        out.push(KeypointObservation::from_record(rec)?);
    }
    Ok(out)
}

pub fn load_observations(path: &Path) -> Result<Vec<KeypointObservation>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_observations(std::io::BufReader::new(f))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangulatedKeypoint {
    pub position: Point3<f64>,
    /// RMS distance from the position to the rays, mm
    pub residual: f64,
    pub views: usize,
}

/// Least-squares intersection of the rays of each keypoint. Keypoints seen
/// in fewer than `min_views` distinct views come back as `None`.
pub fn triangulate_keypoints(
    observations: &[KeypointObservation],
    n_keypoints: usize,
    min_views: usize,
) -> Result<Vec<Option<TriangulatedKeypoint>>> {
    if min_views < 2 {
        return Err(Error::InvalidConfig(format!("min_views {min_views} must be >= 2")));
    }
    if let Some(o) = observations.iter().find(|o| o.keypoint >= n_keypoints) {
        return Err(Error::InvalidInput(format!(
            "observation of keypoint {} but the skeleton has {n_keypoints}",
            o.keypoint
        )));
    }
    (0..n_keypoints)
        .map(|k| {
            let obs: Vec<&KeypointObservation> = observations.iter().filter(|o| o.keypoint == k).collect();
            let views: BTreeSet<u32> = obs.iter().map(|o| o.view).collect();
            if views.len() < min_views {
                return Ok(None);
            }
            let rays: Vec<(Point3<f64>, Vector3<f64>)> =
                obs.iter().map(|o| (o.camera_center(), o.ray_direction())).collect();
            intersect_rays(&rays)
                .map(|(position, residual)| {
                    Some(TriangulatedKeypoint {
                        position,
                        residual,
                        views: views.len(),
                    })
                })
                .map_err(|e| match e {
                    Error::DegenerateGeometry(m) => Error::DegenerateGeometry(format!("keypoint {k}: {m}")),
                    e => e,
                })
        })
        .collect()
}

/// Point minimising the summed squared distance to the rays `(origin, unit
/// direction)`, and the RMS of those distances.
pub fn intersect_rays(rays: &[(Point3<f64>, Vector3<f64>)]) -> Result<(Point3<f64>, f64)> {
    if rays.len() < 2 {
        return Err(Error::DegenerateGeometry("need at least two rays".into()));
    }
    let c0 = rays[0].0;
    let baseline = rays.iter().map(|(c, _)| (c - c0).norm()).fold(0.0, f64::max);
    if !(baseline > 1e-6) {
        return Err(Error::DegenerateGeometry("all rays start at the same camera centre".into()));
    }
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for (c, d) in rays {
        let m = Matrix3::identity() - d * d.transpose();
        a += m;
        b += m * c.coords;
    }
    let eig = SymmetricEigen::new(a);
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(lo > MIN_RAY_CONDITION * hi) {
        return Err(Error::DegenerateGeometry(format!(
            "rays are nearly parallel (eigenvalue ratio {:.3e})",
            lo / hi
        )));
    }
    let p = a
        .cholesky()
        .ok_or_else(|| Error::DegenerateGeometry("ray normal matrix not positive definite".into()))?
        .solve(&b);
    let p = Point3::from(p);
    let ss: f64 = rays
        .iter()
        .map(|(c, d)| {
            let v = p - c;
            (v - d * d.dot(&v)).norm_squared()
        })
        .sum();
    Ok((p, (ss / rays.len() as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::look_at;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn camera(eye: Vector3<f64>) -> (Pose, CameraIntrinsics) {
        (
            look_at(eye, Vector3::zeros(), Vector3::z()).unwrap(),
            CameraIntrinsics::centered(640, 480, 1.1).unwrap(),
        )
    }

    fn observe(view: u32, k: usize, p: &Point3<f64>, eye: Vector3<f64>, noise: [f64; 2]) -> KeypointObservation {
        let (pose, intr) = camera(eye);
        let px = intr.project(&(pose.inverse() * p)).unwrap();
        KeypointObservation::new(view, k, [px.x + noise[0], px.y + noise[1]], pose, intr).unwrap()
    }

    #[test]
    fn two_views_recover_point() {
        let p = Point3::new(12.0, -7.5, 30.0);
        let obs = vec![
            observe(0, 0, &p, Vector3::new(400.0, 0.0, 200.0), [0.0; 2]),
            observe(1, 0, &p, Vector3::new(0.0, 400.0, 250.0), [0.0; 2]),
        ];
        let out = triangulate_keypoints(&obs, 1, 2).unwrap();
        let t = out[0].unwrap();
        assert!((t.position - p).norm() < 1e-6);
        assert!(t.residual < 1e-6);
        assert_eq!(t.views, 2);
    }

    #[test]
    fn single_view_is_missing() {
        let p = Point3::new(0.0, 0.0, 10.0);
        let obs = vec![
            observe(0, 0, &p, Vector3::new(400.0, 0.0, 200.0), [0.0; 2]),
            observe(0, 1, &p, Vector3::new(400.0, 0.0, 200.0), [0.0; 2]),
            observe(1, 1, &p, Vector3::new(0.0, -400.0, 200.0), [0.0; 2]),
        ];
        let out = triangulate_keypoints(&obs, 2, 2).unwrap();
        assert!(out[0].is_none());
        assert!(out[1].is_some());
    }

    #[test]
    fn same_camera_centre_is_degenerate() {
        let p = Point3::new(0.0, 0.0, 10.0);
        let eye = Vector3::new(400.0, 0.0, 200.0);
        let obs = vec![observe(0, 0, &p, eye, [0.0; 2]), observe(1, 0, &p, eye, [3.0, 1.0])];
        assert!(matches!(triangulate_keypoints(&obs, 1, 2), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn parallel_rays_are_degenerate() {
        let d = Vector3::new(0.0, 0.0, 1.0);
        let rays = vec![(Point3::origin(), d), (Point3::new(1e-3, 0.0, 0.0) + Vector3::new(5.0, 0.0, 0.0), d)];
        assert!(intersect_rays(&rays).is_err());
    }

    #[test]
    fn noisy_four_views() {
        let p = Point3::new(5.0, 5.0, 40.0);
        let eyes = [
            Vector3::new(450.0, 0.0, 250.0),
            Vector3::new(0.0, 450.0, 250.0),
            Vector3::new(-450.0, 0.0, 250.0),
            Vector3::new(0.0, -450.0, 250.0),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = Normal::new(0.0, 0.5).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let obs: Vec<_> = eyes
                .iter()
                .enumerate()
                .map(|(i, e)| observe(i as u32, 0, &p, *e, [n.sample(&mut rng), n.sample(&mut rng)]))
                .collect();
            let t = triangulate_keypoints(&obs, 1, 2).unwrap()[0].unwrap();
            assert!(t.residual > 0.0);
            worst = worst.max((t.position - p).norm());
        }
        // 0.5 px at ~515 mm with f ~ 520 px is ~0.5 mm per ray; 4 views at
        // right angles keep the error at that order
        assert!(worst < 2.0, "{worst}");
    }

    #[test]
    fn records_roundtrip_and_bounds() {
        let p = Point3::new(1.0, 2.0, 3.0);
        let o = observe(3, 0, &p, Vector3::new(400.0, 0.0, 200.0), [0.0; 2]);
        let line = serde_json::to_string(&o.to_record()).unwrap();
        let back = read_observations(format!("{line}\n\n{line}\n").as_bytes()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].view, 3);
        assert!((back[0].pixel[0] - o.pixel[0]).abs() < 1e-12);
        let (pose, intr) = camera(Vector3::new(1.0, 1.0, 1.0));
        assert!(KeypointObservation::new(0, 0, [640.0, 0.0], pose, intr).is_err());
        assert!(read_observations("{\"view\":0}".as_bytes()).is_err());
    }
}
