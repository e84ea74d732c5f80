//! Parallel-jaw gripper geometry: placing, closing and table clearance.
//!
//! Gripper frame: origin at the centre of the fixed pad's contact face,
//! x along the closing axis (into the object), z the approach direction
//! (from palm toward fingertips), y = z × x. The moving pad's face sits at
//! x = opening.

use nalgebra::{Isometry3, Point3, Rotation3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::eval::Contact;
use crate::error::{Error, Result};
use crate::fusion::SurfaceCloud;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GripperModel {
    /// mm
    pub max_opening: f64,
    pub pad_width: f64,
    pub pad_height: f64,
    /// distance from pad centre to palm face, mm
    pub palm_depth: f64,
    pub finger_thickness: f64,
    pub palm_height: f64,
    /// points within this distance of a pad face touch it, mm
    pub contact_threshold: f64,
    pub closing_step: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        Self {
            max_opening: 80.0,
            pad_width: 20.0,
            pad_height: 15.0,
            palm_depth: 50.0,
            finger_thickness: 8.0,
            palm_height: 30.0,
            contact_threshold: 1.0,
            closing_step: 0.5,
        }
    }
}

impl GripperModel {
    /// Always two fingers.
    pub const FINGERS: usize = 2;

    /// Closing axis in the gripper frame.
    pub fn closing_axis(&self) -> Vector3<f64> {
        Vector3::x()
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("max_opening", self.max_opening),
            ("pad_width", self.pad_width),
            ("pad_height", self.pad_height),
            ("palm_depth", self.palm_depth),
            ("finger_thickness", self.finger_thickness),
            ("palm_height", self.palm_height),
            ("contact_threshold", self.contact_threshold),
            ("closing_step", self.closing_step),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("gripper {name} = {v} must be positive")));
            }
        }
        if self.palm_depth < self.pad_height / 2.0 {
            return Err(Error::InvalidConfig("palm overlaps the pads".into()));
        }
        Ok(())
    }
}

/// Plane `normal · p = offset`; the object side is where the normal points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TablePlane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Default for TablePlane {
    fn default() -> Self {
        Self {
            normal: Vector3::z(),
            offset: 0.0,
        }
    }
}

impl TablePlane {
    pub fn validate(&self) -> Result<()> {
        if !((self.normal.norm() - 1.0).abs() < 1e-6) || !self.offset.is_finite() {
            return Err(Error::InvalidConfig("table normal must be a unit vector".into()));
        }
        Ok(())
    }

    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }
}

/// Places the fixed pad on `point`, closing against `normal`, body toward
/// `up`, rolled about the closing axis. The flag is set when the normal is
/// parallel to `up` and world +x stood in as the reference.
pub fn pose_gripper(point: &Point3<f64>, normal: &Vector3<f64>, roll: f64, up: &Vector3<f64>) -> Result<(Isometry3<f64>, bool)> {
    let n = normal
        .try_normalize(1e-12)
        .ok_or_else(|| Error::InvalidInput("zero surface normal".into()))?;
    let up = up
        .try_normalize(1e-12)
        .ok_or_else(|| Error::InvalidInput("zero up vector".into()))?;
    let x = -n;
    let mut fallback = false;
    let reference = if n.cross(&up).norm() < 1e-6 {
        fallback = true;
        let ex = Vector3::x();
        if n.cross(&ex).norm() < 1e-6 {
            Vector3::y()
        } else {
            ex
        }
    } else {
        up
    };
    // approach opposes the reference so the body sits on its side
    let approach = -(reference - x * x.dot(&reference)).normalize();
    let z = Rotation3::from_axis_angle(&Unit::new_unchecked(x), roll) * approach;
    let y = z.cross(&x);
    let rot = Rotation3::from_basis_unchecked(&[x, y, z]);
    Ok((
        Isometry3::from_parts(Translation3::from(point.coords), UnitQuaternion::from_rotation_matrix(&rot)),
        fallback,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Closure {
    /// final distance between the pad faces, mm
    pub opening: f64,
    /// fixed pad first
    pub contacts: [Contact; 2],
    pub fixed_points: Vec<usize>,
    pub moving_points: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CloseOutcome {
    Closed(Box<Closure>),
    /// nothing met the moving pad before it reached the fixed one
    Unclosed,
    /// a finger or the palm would sit inside the object
    Penetrating,
}

/// Sweeps the moving pad in from full opening until cloud points come
/// within the contact threshold of its face.
pub fn close_gripper(pose: &Isometry3<f64>, gripper: &GripperModel, cloud: &SurfaceCloud) -> Result<CloseOutcome> {
    let g = gripper;
    let (hw, hh) = (g.pad_width / 2.0, g.pad_height / 2.0);
    let thr = g.contact_threshold;
    let smax = g.max_opening;
    let t = g.finger_thickness;
    let inv = pose.inverse();

    let mut fixed = Vec::new();
    let mut pad_zone: Vec<(usize, f64)> = Vec::new();
    let mut shank_zone: Vec<f64> = Vec::new();
    let mut farthest: Option<f64> = None;
    for (i, p) in cloud.positions.iter().enumerate() {
        let q = inv * p;
        if q.y.abs() > hw {
            continue;
        }
        let in_pad_rows = q.z.abs() <= hh;
        let in_finger_rows = q.z >= -g.palm_depth && q.z <= hh;
        if in_finger_rows && q.x >= -t && q.x < -thr {
            return Ok(CloseOutcome::Penetrating);
        }
        if q.z < -g.palm_depth && q.z >= -g.palm_depth - g.palm_height && q.x >= -t && q.x <= smax + t {
            return Ok(CloseOutcome::Penetrating);
        }
        if in_pad_rows {
            if q.x.abs() <= thr {
                fixed.push(i);
            } else if q.x > thr && q.x <= smax {
                pad_zone.push((i, q.x));
                farthest = Some(farthest.map_or(q.x, |f: f64| f.max(q.x)));
            } else if q.x > smax && q.x <= smax + t {
                // inside the moving finger before it starts closing
                return Ok(CloseOutcome::Penetrating);
            }
        } else if in_finger_rows && q.x > thr && q.x <= smax + t {
            shank_zone.push(q.x);
        }
    }
    if fixed.is_empty() {
        return Err(Error::InvalidPose("no surface under the fixed pad".into()));
    }
    let Some(q_star) = farthest else {
        return Ok(CloseOutcome::Unclosed);
    };
    let steps = ((smax - q_star) / g.closing_step).ceil().max(0.0);
    let opening = smax - steps * g.closing_step;
    // the finger above the pad would have run into these first
    if shank_zone.iter().any(|x| *x > opening + thr) {
        return Ok(CloseOutcome::Penetrating);
    }
    let moving: Vec<usize> = pad_zone
        .iter()
        .filter(|(_, x)| *x >= opening - thr)
        .map(|(i, _)| *i)
        .collect();
    let axis = pose.rotation * Vector3::x();
    let (Some(cf), Some(cm)) = (
        average_contact(cloud, &fixed, axis),
        average_contact(cloud, &moving, -axis),
    ) else {
        return Ok(CloseOutcome::Unclosed);
    };
    Ok(CloseOutcome::Closed(Box::new(Closure {
        opening,
        contacts: [cf, cm],
        fixed_points: fixed,
        moving_points: moving,
    })))
}

fn average_contact(cloud: &SurfaceCloud, idx: &[usize], closing: Vector3<f64>) -> Option<Contact> {
    if idx.is_empty() {
        return None;
    }
    let n = idx.len() as f64;
    let pos = idx.iter().fold(Vector3::zeros(), |a, i| a + cloud.positions[*i].coords) / n;
    let normal = idx.iter().fold(Vector3::zeros(), |a, i| a + cloud.normals[*i]).try_normalize(1e-9)?;
    Some(Contact {
        position: Point3::from(pos),
        normal,
        closing,
        uncertainty: idx.iter().map(|i| cloud.uncertainty[*i]).sum::<f64>() / n,
        variation: idx.iter().map(|i| cloud.variation[*i]).sum::<f64>() / n,
    })
}

/// Corners of the fixed finger, the moving finger's swept volume down to
/// `opening`, and the palm, in world coordinates.
pub fn body_vertices(pose: &Isometry3<f64>, gripper: &GripperModel, opening: f64) -> Vec<Point3<f64>> {
    let g = gripper;
    let (hw, hh, t) = (g.pad_width / 2.0, g.pad_height / 2.0, g.finger_thickness);
    let boxes = [
        ([-t, 0.0], [-hw, hw], [-g.palm_depth, hh]),
        ([opening, g.max_opening + t], [-hw, hw], [-g.palm_depth, hh]),
        (
            [-t, g.max_opening + t],
            [-hw, hw],
            [-g.palm_depth - g.palm_height, -g.palm_depth],
        ),
    ];
    let mut out = Vec::with_capacity(24);
    for (xs, ys, zs) in boxes {
        for x in xs {
            for y in ys {
                for z in zs {
                    out.push(pose * Point3::new(x, y, z));
                }
            }
        }
    }
    out
}

/// Passes only if every body vertex is more than `margin` above the table.
pub fn check_collision(pose: &Isometry3<f64>, gripper: &GripperModel, opening: f64, table: &TablePlane, margin: f64) -> bool {
    body_vertices(pose, gripper, opening)
        .iter()
        .all(|v| table.signed_distance(v) > margin)
}
