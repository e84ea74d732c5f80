//! Depth-camera measurement noise.
//!
//! Two error sources are modelled, both in millimetres: the RMS depth error of
//! a stereo sensor observing a local plane, which grows quadratically with
//! depth, and an incidence-angle term that diverges as the viewing ray grazes
//! the surface. They are summed and squared to give the per-pixel variance
//! consumed by depth fusion.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default grazing-angle cutoff in radians. Rays steeper than this are not fused.
pub const DEFAULT_MAX_INCIDENCE: f64 = 1.3;

/// Pinhole intrinsics with square pixels. The focal length is always derived
/// from the horizontal resolution and field of view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    x_res: u32,
    y_res: u32,
    hfov: f64,
    cx: f64,
    cy: f64,
    focal: f64,
}

/// On-disk form: `{x_res, y_res, hfov_deg, cx, cy}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicsFile {
    pub x_res: u32,
    pub y_res: u32,
    pub hfov_deg: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(x_res: u32, y_res: u32, hfov: f64, cx: f64, cy: f64) -> Result<Self> {
        if x_res == 0 || y_res == 0 {
            return Err(Error::InvalidIntrinsics(format!(
                "resolution must be positive, got {x_res}x{y_res}"
            )));
        }
        if !cx.is_finite() || !cy.is_finite() {
            return Err(Error::InvalidIntrinsics("non-finite principal point".into()));
        }
        let focal = focal_length(x_res, hfov)?;
        Ok(Self {
            x_res,
            y_res,
            hfov,
            cx,
            cy,
            focal,
        })
    }

    /// Intrinsics with the principal point at the image centre.
    pub fn centered(x_res: u32, y_res: u32, hfov: f64) -> Result<Self> {
        Self::new(
            x_res,
            y_res,
            hfov,
            (x_res as f64 - 1.0) / 2.0,
            (y_res as f64 - 1.0) / 2.0,
        )
    }

    pub fn x_res(&self) -> u32 {
        self.x_res
    }
    pub fn y_res(&self) -> u32 {
        self.y_res
    }
    pub fn hfov(&self) -> f64 {
        self.hfov
    }
    pub fn principal_point(&self) -> (f64, f64) {
        (self.cx, self.cy)
    }
    pub fn focal(&self) -> f64 {
        self.focal
    }

    /// Projects a camera-frame point. Returns `None` behind the camera.
    pub fn project(&self, p: &Point3<f64>) -> Option<Point2<f64>> {
        if p.z <= 0.0 {
            return None;
        }
        Some(Point2::new(
            self.cx + self.focal * p.x / p.z,
            self.cy + self.focal * p.y / p.z,
        ))
    }

    /// Camera-frame ray direction (z = 1) through pixel coordinates `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.focal, (v - self.cy) / self.focal, 1.0)
    }

    pub fn to_file(&self) -> IntrinsicsFile {
        IntrinsicsFile {
            x_res: self.x_res,
            y_res: self.y_res,
            hfov_deg: self.hfov.to_degrees(),
            cx: self.cx,
            cy: self.cy,
        }
    }
}

impl TryFrom<IntrinsicsFile> for CameraIntrinsics {
    type Error = Error;
    fn try_from(f: IntrinsicsFile) -> Result<Self> {
        CameraIntrinsics::new(f.x_res, f.y_res, f.hfov_deg.to_radians(), f.cx, f.cy)
    }
}

impl Serialize for CameraIntrinsics {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_file().serialize(s)
    }
}

impl<'de> Deserialize<'de> for CameraIntrinsics {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = IntrinsicsFile::deserialize(d)?;
        CameraIntrinsics::try_from(f).map_err(serde::de::Error::custom)
    }
}

/// Focal length in pixels from horizontal resolution and field of view.
pub fn focal_length(x_res: u32, hfov: f64) -> Result<f64> {
    if !(hfov > 0.0 && hfov < std::f64::consts::PI) {
        return Err(Error::InvalidIntrinsics(format!(
            "horizontal field of view {hfov} rad outside (0, pi)"
        )));
    }
    if x_res == 0 {
        return Err(Error::InvalidIntrinsics("zero horizontal resolution".into()));
    }
    Ok(0.5 * x_res as f64 / (hfov / 2.0).tan())
}

/// RMS depth error (mm) for a plane observed at depth `depth` (mm).
pub fn depth_rms_error(depth: f64, focal: f64) -> Result<f64> {
    if !(depth >= 0.0) || !depth.is_finite() {
        return Err(Error::InvalidInput(format!("depth {depth} must be >= 0")));
    }
    if !(focal > 0.0) {
        return Err(Error::InvalidInput(format!("focal length {focal} must be > 0")));
    }
    Ok(0.08 * depth * depth / (55.0 * focal))
}

/// Incidence-angle error (mm) for the angle `theta` between the viewing ray
/// and the surface normal. Angles at or beyond `limit` are rejected.
pub fn incidence_error(theta: f64, limit: f64) -> Result<f64> {
    if !(theta >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "incidence angle {theta} must be >= 0"
        )));
    }
    if theta >= limit || theta >= FRAC_PI_2 {
        return Err(Error::GrazingRay { theta, limit });
    }
    let gap = FRAC_PI_2 - theta;
    Ok(theta / (gap * gap))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    /// mm
    pub depth_rms: f64,
    /// mm
    pub incidence_error: f64,
    /// mm²
    pub total_variance: f64,
}

/// Noise model with a configurable grazing-ray cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub max_incidence: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            max_incidence: DEFAULT_MAX_INCIDENCE,
        }
    }
}

impl SensorModel {
    pub fn new(max_incidence: f64) -> Result<Self> {
        if !(max_incidence > 0.0 && max_incidence < FRAC_PI_2) {
            return Err(Error::InvalidConfig(format!(
                "max incidence {max_incidence} rad outside (0, pi/2)"
            )));
        }
        Ok(Self { max_incidence })
    }

    /// Combined noise for a measurement at `depth` mm seen at incidence `theta`.
    /// The two error terms are summed in millimetres and squared.
    pub fn estimate(&self, depth: f64, theta: f64, focal: f64) -> Result<NoiseEstimate> {
        let depth_rms = depth_rms_error(depth, focal)?;
        let incidence = incidence_error(theta, self.max_incidence)?;
        let total = depth_rms + incidence;
        Ok(NoiseEstimate {
            depth_rms,
            incidence_error: incidence,
            total_variance: total * total,
        })
    }

    pub fn measurement_variance(
        &self,
        depth: f64,
        theta: f64,
        intrinsics: &CameraIntrinsics,
    ) -> Result<f64> {
        Ok(self.estimate(depth, theta, intrinsics.focal())?.total_variance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn focal_length_examples() {
        // 640 / tan(32.5 deg), evaluated independently
        let want = 640.0 / 0.637_070_260_807_493_2;
        let f = focal_length(1280, 65f64.to_radians()).unwrap();
        assert!(rel(f, want) < 1e-9, "{f}");
        assert!((f - 1004.6).abs() < 0.05);
        assert!((focal_length(2, 90f64.to_radians()).unwrap() - 1.0).abs() < 1e-12);
        assert!(focal_length(1280, PI).is_err());
        assert!(focal_length(1280, 0.0).is_err());
    }

    #[test]
    fn intrinsics_focal_is_derived() {
        let intr = CameraIntrinsics::new(1280, 720, 65f64.to_radians(), 640.0, 360.0).unwrap();
        let f = 0.5 * 1280.0 / (65f64.to_radians() / 2.0).tan();
        assert!(rel(intr.focal(), f) < 1e-12);
        let json = serde_json::to_string(&intr).unwrap();
        assert!(!json.contains("focal"));
        let back: CameraIntrinsics = serde_json::from_str(&json).unwrap();
        assert!(rel(back.focal(), f) < 1e-12);
        assert!(CameraIntrinsics::new(0, 720, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn depth_rms_examples() {
        let f = 1004.6;
        assert_eq!(depth_rms_error(0.0, f).unwrap(), 0.0);
        // 0.08 * 500^2 / (55 * 1004.6) = 20000 / 55253
        assert!(rel(depth_rms_error(500.0, f).unwrap(), 20000.0 / 55253.0) < 1e-12);
        assert!((depth_rms_error(500.0, f).unwrap() - 0.362).abs() < 1e-3);
        assert!((depth_rms_error(1000.0, f).unwrap() - 1.448).abs() < 1e-3);
        assert!(matches!(
            depth_rms_error(-1.0, f),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn incidence_examples() {
        assert_eq!(incidence_error(0.0, 1.3).unwrap(), 0.0);
        let e = incidence_error(FRAC_PI_4, 1.3).unwrap();
        assert!(rel(e, 4.0 / PI) < 1e-12);
        assert!(matches!(
            incidence_error(1.4, 1.3),
            Err(Error::GrazingRay { .. })
        ));
    }

    #[test]
    fn variance_examples() {
        let model = SensorModel::default();
        let intr = CameraIntrinsics::centered(1280, 720, 65f64.to_radians()).unwrap();
        assert_eq!(model.measurement_variance(0.0, 0.0, &intr).unwrap(), 0.0);
        let v = model.measurement_variance(500.0, FRAC_PI_4, &intr).unwrap();
        let want = (depth_rms_error(500.0, intr.focal()).unwrap() + 4.0 / PI).powi(2);
        assert!(rel(v, want) < 1e-12);
        assert!((v - 2.674).abs() < 2e-3, "{v}");
        assert!(model.measurement_variance(500.0, 1.4, &intr).is_err());
    }

    proptest! {
        #[test]
        fn quadratic_depth_law(d in 0.0f64..5000.0, f in 1.0f64..5000.0) {
            let a = depth_rms_error(d, f).unwrap();
            let b = depth_rms_error(2.0 * d, f).unwrap();
            prop_assert!((b - 4.0 * a).abs() <= 1e-12 * b.max(1e-300));
        }

        #[test]
        fn incidence_strictly_increasing(a in 0.0f64..1.55, b in 0.0f64..1.55) {
            prop_assume!(a < b);
            let ea = incidence_error(a, FRAC_PI_2).unwrap();
            let eb = incidence_error(b, FRAC_PI_2).unwrap();
            prop_assert!(ea < eb);
        }

        #[test]
        fn variance_nonnegative(d in 0.0f64..3000.0, t in 0.0f64..1.29) {
            let intr = CameraIntrinsics::centered(640, 480, 1.2).unwrap();
            let v = SensorModel::default().measurement_variance(d, t, &intr).unwrap();
            prop_assert!(v >= 0.0);
        }
    }
}
