use nalgebra::{Isometry3, Matrix3, Point3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::spec::SkeletonSpec;
use crate::error::{Error, Result};
use crate::pose::{matrix3_from_row_major, matrix3_to_row_major, validate_rotation};

/// Below this sine the third keypoint is treated as collinear with the link.
pub const MIN_PLANE_SINE: f64 = 1e-3;

/// Orientation of a keypoint, columns are the x, y, z axes in world
/// coordinates, plus the length of the link it was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointFrame {
    pub axes: Matrix3<f64>,
    pub link: usize,
    pub scale: f64,
}

/// A placed skeleton: keypoint positions (mm, world), link lengths and
/// per-keypoint frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    spec: SkeletonSpec,
    positions: Vec<Point3<f64>>,
    link_lengths: Vec<f64>,
    link_frames: Vec<Matrix3<f64>>,
    frames: Vec<Option<KeypointFrame>>,
}

impl Skeleton {
    /// Places the keypoints and builds frames. `cloud` is only consulted
    /// for links whose plane rule is missing or collinear.
    pub fn new(spec: SkeletonSpec, positions: Vec<Point3<f64>>, cloud: Option<&[Point3<f64>]>) -> Result<Self> {
        spec.validate()?;
        if positions.len() != spec.keypoints.len() {
            return Err(Error::InvalidInput(format!(
                "{} positions for {} keypoints",
                positions.len(),
                spec.keypoints.len()
            )));
        }
        if positions.iter().any(|p| !p.coords.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidInput("non-finite keypoint position".into()));
        }
        let mut link_lengths = Vec::with_capacity(spec.links.len());
        let mut link_frames = Vec::with_capacity(spec.links.len());
        for (l, (link, rule)) in spec.links.iter().zip(&spec.frame_rules).enumerate() {
            let r = rule.reference;
            let o = if link[0] == r { link[1] } else { link[0] };
            let dir = positions[o] - positions[r];
            let len = dir.norm();
            if !(len > 0.0) {
                return Err(Error::DegenerateGeometry(format!("link {l} has zero length")));
            }
            link_lengths.push(len);
            let x = dir / len;
            let plane = rule.third.and_then(|t| plane_frame(&positions[r], &positions[o], &positions[t]));
            let axes = match (plane, cloud) {
                (Some(m), _) => m,
                (None, Some(c)) => eigen_frame(&x, c)?,
                (None, None) => {
                    return Err(Error::FrameUndefined(format!(
                        "link {l} of `{}` needs the object cloud",
                        spec.class
                    )))
                }
            };
            link_frames.push(axes);
        }
        Ok(Self::assemble(spec, positions, link_lengths, link_frames))
    }

    fn assemble(
        spec: SkeletonSpec,
        positions: Vec<Point3<f64>>,
        link_lengths: Vec<f64>,
        link_frames: Vec<Matrix3<f64>>,
    ) -> Self {
        let flip = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
        let frames = (0..spec.keypoints.len())
            .map(|k| {
                spec.frame_owner(k).map(|(l, is_ref)| KeypointFrame {
                    axes: if is_ref { link_frames[l] } else { link_frames[l] * flip },
                    link: l,
                    scale: link_lengths[l],
                })
            })
            .collect();
        Self {
            spec,
            positions,
            link_lengths,
            link_frames,
            frames,
        }
    }

    pub fn spec(&self) -> &SkeletonSpec {
        &self.spec
    }
    pub fn positions(&self) -> &[Point3<f64>] {
        &self.positions
    }
    pub fn link_lengths(&self) -> &[f64] {
        &self.link_lengths
    }
    /// Frame of link `l` at its reference keypoint.
    pub fn link_frame(&self, l: usize) -> &Matrix3<f64> {
        &self.link_frames[l]
    }
    /// `None` for keypoints not on any link.
    pub fn frame(&self, k: usize) -> Option<&KeypointFrame> {
        self.frames[k].as_ref()
    }

    /// Rigidly moves and uniformly scales the skeleton, carrying frames along.
    pub fn transformed(&self, iso: &Isometry3<f64>, scale: f64) -> Self {
        let r = iso.rotation.to_rotation_matrix().into_inner();
        let mut out = self.clone();
        for p in &mut out.positions {
            *p = iso * Point3::from(p.coords * scale);
        }
        for s in &mut out.link_lengths {
            *s *= scale;
        }
        for m in &mut out.link_frames {
            *m = r * *m;
        }
        for f in out.frames.iter_mut().flatten() {
            f.axes = r * f.axes;
            f.scale *= scale;
        }
        out
    }

    /// Index of the link closest to `p`; the lowest index wins ties.
    pub fn nearest_link(&self, p: &Point3<f64>) -> usize {
        self.nearest_link_with_distance(p).0
    }

    pub fn nearest_link_with_distance(&self, p: &Point3<f64>) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (l, [a, b]) in self.spec.links.iter().enumerate() {
            let d = segment_distance(p, &self.positions[*a], &self.positions[*b]);
            if d < best.1 {
                best = (l, d);
            }
        }
        best
    }

    /// Spherical coordinates of `p` about keypoint `k` in its frame.
    pub fn spherical(&self, k: usize, p: &Point3<f64>) -> Result<(f64, f64)> {
        let f = self.frames[k]
            .as_ref()
            .ok_or_else(|| Error::FrameUndefined(format!("keypoint {k} is on no link")))?;
        to_spherical(&f.axes, &self.positions[k], f.scale, p)
    }

    pub fn to_file(&self) -> SkeletonFile {
        SkeletonFile {
            spec: self.spec.clone(),
            positions: self.positions.iter().map(|p| Some([p.x, p.y, p.z])).collect(),
            residuals: None,
            link_lengths: self.link_lengths.clone(),
            link_frames: self.link_frames.iter().map(matrix3_to_row_major).collect(),
            missing: Vec::new(),
            seed: None,
        }
    }

    /// Rebuilds an instance from its file form, keeping the stored frames.
    pub fn from_file(file: &SkeletonFile) -> Result<Self> {
        let spec = file.spec.clone();
        spec.validate()?;
        if !file.missing.is_empty() || file.positions.iter().any(Option::is_none) {
            return Err(Error::InvalidInput(format!(
                "skeleton has missing keypoints: {}",
                file.missing.join(", ")
            )));
        }
        if file.positions.len() != spec.keypoints.len() || file.link_frames.len() != spec.links.len() {
            return Err(Error::InvalidInput(
                "skeleton file needs one position per keypoint and one frame per link".into(),
            ));
        }
        let positions: Vec<Point3<f64>> = file.positions.iter().flatten().map(|p| Point3::from(*p)).collect();
        let mut link_lengths = Vec::with_capacity(spec.links.len());
        let mut link_frames = Vec::with_capacity(spec.links.len());
        for (l, (link, rule)) in spec.links.iter().zip(&spec.frame_rules).enumerate() {
            let r = rule.reference;
            let o = if link[0] == r { link[1] } else { link[0] };
            let dir = positions[o] - positions[r];
            let len = dir.norm();
            if !(len > 0.0) {
                return Err(Error::DegenerateGeometry(format!("link {l} has zero length")));
            }
            let m = matrix3_from_row_major(&file.link_frames[l]);
            validate_rotation(&m)?;
            if (m.column(0) - dir / len).norm() > 1e-6 {
                return Err(Error::InvalidInput(format!("frame of link {l} is not aligned with the link")));
            }
            link_lengths.push(len);
            link_frames.push(m);
        }
        Ok(Self::assemble(spec, positions, link_lengths, link_frames))
    }
}

/// On-disk skeleton instance. Keypoints that could not be placed are `null`
/// and listed by name in `missing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonFile {
    pub spec: SkeletonSpec,
    pub positions: Vec<Option<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals: Option<Vec<Option<f64>>>,
    #[serde(default)]
    pub link_lengths: Vec<f64>,
    /// 3x3 row-major, columns are the frame axes
    #[serde(default)]
    pub link_frames: Vec<[f64; 9]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<String>,
    /// run seed, recorded for provenance only
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Frame with x along `r -> o` and z normal to the plane through `r, o, t`.
/// `None` when `t` is (nearly) collinear with the link.
fn plane_frame(r: &Point3<f64>, o: &Point3<f64>, t: &Point3<f64>) -> Option<Matrix3<f64>> {
    let a = o - r;
    let b = t - r;
    let n = a.cross(&b);
    let denom = a.norm() * b.norm();
    if !(denom > 0.0) || n.norm() / denom < MIN_PLANE_SINE {
        return None;
    }
    let x = a.normalize();
    let z = n.normalize();
    let y = z.cross(&x);
    Some(Matrix3::from_columns(&[x, y, z]))
}

/// Fallback frame: y and z are the principal directions of the cloud
/// projected onto the plane orthogonal to `x`, z flipped toward world +z.
fn eigen_frame(x: &Vector3<f64>, cloud: &[Point3<f64>]) -> Result<Matrix3<f64>> {
    if cloud.len() < 3 {
        return Err(Error::FrameUndefined(format!("cloud of {} points", cloud.len())));
    }
    let n = cloud.len() as f64;
    let proj: Vec<Vector3<f64>> = cloud.iter().map(|p| p.coords - x * x.dot(&p.coords)).collect();
    let mean = proj.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for q in &proj {
        let d = q - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0, 1, 2];
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    if !(eig.eigenvalues[order[0]] > 1e-12) {
        return Err(Error::FrameUndefined("cloud has no extent orthogonal to the link".into()));
    }
    // the largest spread orthogonal to x is y; z completes the frame
    let mut y: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
    y -= x * x.dot(&y);
    let y = y.normalize();
    let mut z = x.cross(&y);
    let up = if z.z.abs() > 1e-9 {
        z.z
    } else if z.y.abs() > 1e-9 {
        z.y
    } else {
        z.x
    };
    if up < 0.0 {
        z = -z;
    }
    let y = z.cross(x);
    Ok(Matrix3::from_columns(&[*x, y, z]))
}

/// Direction from `origin` to `p` in the frame `axes`, scaled to radius
/// `scale`, as `(θ, φ)` with θ in (−π, π] and φ in [0, π]. On the pole θ = 0.
pub fn to_spherical(axes: &Matrix3<f64>, origin: &Point3<f64>, scale: f64, p: &Point3<f64>) -> Result<(f64, f64)> {
    let d = axes.transpose() * (p - origin);
    let len = d.norm();
    if !(len > 0.0) || !len.is_finite() {
        return Err(Error::UndefinedDirection);
    }
    let v = d * (scale / len);
    let theta = if v.x == 0.0 && v.y == 0.0 {
        0.0
    } else {
        let t = v.y.atan2(v.x);
        if t <= -std::f64::consts::PI {
            std::f64::consts::PI
        } else {
            t
        }
    };
    let phi = (v.z / scale).clamp(-1.0, 1.0).acos();
    Ok((theta, phi))
}

/// Euclidean distance from `p` to the segment `a`–`b`.
pub fn segment_distance(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm()
}
