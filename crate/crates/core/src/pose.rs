//! Rigid-transform helpers shared by the file formats.

use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub type Pose = Isometry3<f64>;

const RIGID_TOL: f64 = 1e-9;

/// Checks that `m` is a proper rotation: orthonormal with determinant +1.
pub fn validate_rotation(m: &Matrix3<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidPose("non-finite rotation entry".into()));
    }
    let err = (m.transpose() * m - Matrix3::identity()).abs().max();
    if err > RIGID_TOL {
        return Err(Error::InvalidPose(format!(
            "rotation not orthonormal (max deviation {err:.3e})"
        )));
    }
    let det = m.determinant();
    if (det - 1.0).abs() > RIGID_TOL {
        return Err(Error::InvalidPose(format!("rotation determinant {det}")));
    }
    Ok(())
}

pub fn pose_from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Pose> {
    validate_rotation(&rotation)?;
    if translation.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidPose("non-finite translation".into()));
    }
    let rot = Rotation3::from_matrix_unchecked(rotation);
    Ok(Isometry3::from_parts(
        Translation3::from(translation),
        UnitQuaternion::from_rotation_matrix(&rot),
    ))
}

/// Parses a 4x4 homogeneous transform stored row-major.
pub fn pose_from_row_major(m: &[f64]) -> Result<Pose> {
    if m.len() != 16 {
        return Err(Error::InvalidPose(format!(
            "expected 16 matrix entries, got {}",
            m.len()
        )));
    }
    let bottom = [m[12], m[13], m[14], m[15]];
    if bottom != [0.0, 0.0, 0.0, 1.0] {
        return Err(Error::InvalidPose(format!(
            "bottom row must be [0, 0, 0, 1], got {bottom:?}"
        )));
    }
    let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
    pose_from_parts(rotation, Vector3::new(m[3], m[7], m[11]))
}

pub fn pose_to_row_major(pose: &Pose) -> [f64; 16] {
    let h = pose.to_homogeneous();
    let mut out = [0.0; 16];
    for r in 0..4 {
        for c in 0..4 {
            out[r * 4 + c] = h[(r, c)];
        }
    }
    out
}

pub fn matrix3_to_row_major(m: &Matrix3<f64>) -> [f64; 9] {
    [
        m[(0, 0)],
        m[(0, 1)],
        m[(0, 2)],
        m[(1, 0)],
        m[(1, 1)],
        m[(1, 2)],
        m[(2, 0)],
        m[(2, 1)],
        m[(2, 2)],
    ]
}

pub fn matrix3_from_row_major(m: &[f64; 9]) -> Matrix3<f64> {
    Matrix3::new(m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7], m[8])
}

/// Camera-to-world pose of a camera at `eye` looking at `target`, using the
/// x-right, y-down, z-forward optical convention.
pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<Pose> {
    let forward = (target - eye)
        .try_normalize(1e-12)
        .ok_or_else(|| Error::InvalidPose("eye coincides with target".into()))?;
    let right = forward
        .cross(&up)
        .try_normalize(1e-9)
        .ok_or_else(|| Error::InvalidPose("viewing direction parallel to up".into()))?;
    let down = forward.cross(&right);
    let rot = Matrix3::from_columns(&[right, down, forward]);
    pose_from_parts(rot, eye)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_roundtrip() {
        let pose = Isometry3::new(Vector3::new(1.0, -2.0, 3.0), Vector3::new(0.1, 0.2, -0.3));
        let m = pose_to_row_major(&pose);
        let back = pose_from_row_major(&m).unwrap();
        assert!((back.to_homogeneous() - pose.to_homogeneous()).abs().max() < 1e-12);
    }

    #[test]
    fn rejects_reflection_and_scaling() {
        let mut m = pose_to_row_major(&Pose::identity());
        m[0] = -1.0;
        assert!(matches!(pose_from_row_major(&m), Err(Error::InvalidPose(_))));
        let mut m = pose_to_row_major(&Pose::identity());
        m[5] = 1.001;
        assert!(pose_from_row_major(&m).is_err());
    }

    #[test]
    fn look_at_points_forward_axis_at_target() {
        let eye = Vector3::new(400.0, 0.0, 100.0);
        let pose = look_at(eye, Vector3::zeros(), Vector3::z()).unwrap();
        let fwd = pose.rotation * Vector3::z();
        assert!((fwd - (-eye).normalize()).norm() < 1e-12);
        // image "down" has a negative world-z component
        assert!((pose.rotation * Vector3::y()).z < 0.0);
    }
}
