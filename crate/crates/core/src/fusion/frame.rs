use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::pose::{validate_rotation, Pose};
use crate::sensor::{CameraIntrinsics, SensorModel};

/// A masked depth image with its camera pose (world <- camera).
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    width: usize,
    height: usize,
    /// z-depth in mm; 0 marks an invalid pixel.
    depth: Vec<f64>,
    mask: Vec<bool>,
    pose: Pose,
    intrinsics: CameraIntrinsics,
}

impl DepthFrame {
    pub fn new(
        depth: Vec<f64>,
        mask: Vec<bool>,
        pose: Pose,
        intrinsics: CameraIntrinsics,
    ) -> Result<Self> {
        let width = intrinsics.x_res() as usize;
        let height = intrinsics.y_res() as usize;
        if depth.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "depth has {} pixels, intrinsics say {width}x{height}",
                depth.len()
            )));
        }
        if mask.len() != depth.len() {
            return Err(Error::InvalidInput(format!(
                "mask has {} pixels, depth has {}",
                mask.len(),
                depth.len()
            )));
        }
        if let Some(bad) = depth.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::InvalidInput(format!("depth value {bad} not finite and >= 0")));
        }
        validate_rotation(pose.rotation.to_rotation_matrix().matrix())?;
        Ok(Self {
            width,
            height,
            depth,
            mask,
            pose,
            intrinsics,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn depth(&self) -> &[f64] {
        &self.depth
    }
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
    pub fn pose(&self) -> &Pose {
        &self.pose
    }
    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    /// Depth at a masked pixel with a valid measurement.
    pub fn usable_depth(&self, u: usize, v: usize) -> Option<f64> {
        let i = v * self.width + u;
        (self.mask[i] && self.depth[i] > 0.0).then_some(self.depth[i])
    }

    /// Camera-frame point for pixel `(u, v)`.
    pub fn backproject(&self, u: usize, v: usize) -> Option<Point3<f64>> {
        let d = self.usable_depth(u, v)?;
        Some(Point3::from(self.intrinsics.ray(u as f64, v as f64) * d))
    }

    /// World-frame points of every usable pixel.
    pub fn world_points(&self) -> Vec<Point3<f64>> {
        let mut out = Vec::new();
        for v in 0..self.height {
            for u in 0..self.width {
                if let Some(p) = self.backproject(u, v) {
                    out.push(self.pose * p);
                }
            }
        }
        out
    }

    /// Incidence angle at each pixel, estimated from a plane fitted to the 3x3
    /// neighbourhood of back-projected points. Pixels whose fit fails get 0.
    pub fn incidence_angles(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.width * self.height];
        for v in 0..self.height {
            for u in 0..self.width {
                let Some(center) = self.backproject(u, v) else {
                    continue;
                };
                let mut pts = Vec::with_capacity(9);
                for dv in -1i64..=1 {
                    for du in -1i64..=1 {
                        let (uu, vv) = (u as i64 + du, v as i64 + dv);
                        if uu < 0 || vv < 0 || uu >= self.width as i64 || vv >= self.height as i64 {
                            continue;
                        }
                        if let Some(p) = self.backproject(uu as usize, vv as usize) {
                            pts.push(p);
                        }
                    }
                }
                if let Some(n) = fit_plane_normal(&pts) {
                    let ray = center.coords.normalize();
                    out[v * self.width + u] = n.dot(&ray).abs().min(1.0).acos();
                }
            }
        }
        out
    }

    /// Per-pixel measurement variance (mm²); `None` for unusable or grazing pixels.
    pub fn measurement_variances(&self, sensor: &SensorModel) -> Vec<Option<f64>> {
        let angles = self.incidence_angles();
        let mut out = vec![None; self.width * self.height];
        for v in 0..self.height {
            for u in 0..self.width {
                let i = v * self.width + u;
                if let Some(d) = self.usable_depth(u, v) {
                    out[i] = sensor
                        .measurement_variance(d, angles[i], &self.intrinsics)
                        .ok()
                        .filter(|var| *var > 0.0);
                }
            }
        }
        out
    }
}

/// Unit normal of the least-squares plane through `pts`, or `None` when the
/// points do not span a plane.
pub(crate) fn fit_plane_normal(pts: &[Point3<f64>]) -> Option<Vector3<f64>> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mean = pts.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mid = eig.eigenvalues[order[1]];
    let top = eig.eigenvalues[order[2]];
    if !(top > 0.0) || mid <= 1e-9 * top {
        return None;
    }
    Some(eig.eigenvectors.column(order[0]).normalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::centered(16, 12, 1.0).unwrap()
    }

    #[test]
    fn rejects_mismatched_mask() {
        let i = intr();
        let r = DepthFrame::new(vec![0.0; 192], vec![false; 10], Pose::identity(), i);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rejects_negative_depth() {
        let mut d = vec![0.0; 192];
        d[3] = -1.0;
        assert!(DepthFrame::new(d, vec![true; 192], Pose::identity(), intr()).is_err());
    }

    #[test]
    fn fronto_parallel_plane_has_near_zero_incidence_at_center() {
        let i = intr();
        let f = DepthFrame::new(vec![500.0; 192], vec![true; 192], Pose::identity(), i).unwrap();
        let angles = f.incidence_angles();
        // plane normal is the optical axis; the central ray is almost parallel to it
        let (cx, cy) = i.principal_point();
        let center = (cy.round() as usize) * 16 + cx.round() as usize;
        assert!(angles[center] < 0.05);
    }

    #[test]
    fn tilted_plane_incidence_matches_tilt() {
        // plane z = 500 + x * tan(40deg) seen along the optical axis
        let i = CameraIntrinsics::centered(33, 33, 0.5).unwrap();
        let tilt = 40f64.to_radians();
        let mut depth = vec![0.0; 33 * 33];
        for v in 0..33 {
            for u in 0..33 {
                let r = i.ray(u as f64, v as f64);
                // solve d * r.z = 500 + d * r.x * tan(tilt)
                depth[v * 33 + u] = 500.0 / (1.0 - r.x * tilt.tan());
            }
        }
        let f = DepthFrame::new(depth, vec![true; 33 * 33], Pose::identity(), i).unwrap();
        let a = f.incidence_angles()[16 * 33 + 16];
        assert!((a - tilt).abs() < 1e-6, "{a}");
    }

    #[test]
    fn collinear_neighbourhood_has_no_plane() {
        let pts: Vec<_> = (0..5).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        assert!(fit_plane_normal(&pts).is_none());
    }
}
