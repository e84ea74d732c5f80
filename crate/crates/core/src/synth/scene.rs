use nalgebra::{Isometry3, Point3, Vector3};
use rand::{seq::index, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::shapes::{Geometry, ShapeSpec};
use crate::error::{Error, Result};
use crate::fusion::{surface_variation, DepthFrame, SurfaceCloud, DEFAULT_NEIGHBORHOOD_K};
use crate::grasp::TablePlane;
use crate::pose::{look_at, pose_from_row_major, pose_to_row_major, Pose};
use crate::sensor::{CameraIntrinsics, IntrinsicsFile, SensorModel};
use crate::skeleton::Skeleton;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraRing {
    pub count: usize,
    /// distance from the target, mm
    pub radius: f64,
    /// above the table plane, degrees
    pub elevation_deg: f64,
    /// azimuth of the first camera, degrees
    pub azimuth_deg: f64,
    /// look-at point in world coordinates; the object's bounding-box centre
    /// when absent
    pub target: Option<[f64; 3]>,
    pub intrinsics: IntrinsicsFile,
}

impl Default for CameraRing {
    fn default() -> Self {
        Self {
            count: 4,
            radius: 400.0,
            elevation_deg: 30.0,
            azimuth_deg: 45.0,
            target: None,
            intrinsics: IntrinsicsFile {
                x_res: 320,
                y_res: 240,
                hfov_deg: 58.0,
                cx: 160.0,
                cy: 120.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub enabled: bool,
    /// multiplies the sensor-model standard deviation
    pub factor: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            enabled: false,
            factor: 1.0,
        }
    }
}

/// A single object on a table seen by a ring of cameras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub object: ShapeSpec,
    /// world <- object, 4x4 row-major; identity when absent
    #[serde(default)]
    pub pose: Option<Vec<f64>>,
    #[serde(default)]
    pub cameras: CameraRing,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub table: TablePlane,
    #[serde(default)]
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(object: ShapeSpec) -> Self {
        Self {
            object,
            pose: None,
            cameras: CameraRing::default(),
            noise: NoiseSpec::default(),
            table: TablePlane::default(),
            seed: 0,
        }
    }

    pub fn object_pose(&self) -> Result<Pose> {
        match &self.pose {
            None => Ok(Pose::identity()),
            Some(m) => pose_from_row_major(m),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.object.validate()?;
        self.object_pose()?;
        self.table.validate()?;
        let c = &self.cameras;
        if c.count == 0 {
            return Err(Error::InvalidConfig("camera count must be >= 1".into()));
        }
        if !(c.radius > 0.0) || !c.elevation_deg.is_finite() || !c.azimuth_deg.is_finite() {
            return Err(Error::InvalidConfig("camera ring radius must be positive".into()));
        }
        CameraIntrinsics::try_from(c.intrinsics)?;
        if !(self.noise.factor >= 0.0) || !self.noise.factor.is_finite() {
            return Err(Error::InvalidConfig("noise factor must be >= 0".into()));
        }
        Ok(())
    }
}

/// Geometry and cameras of a scene, ready to render.
#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    pub geometry: Geometry,
    /// world <- object
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
    /// world <- camera
    pub cameras: Vec<Pose>,
}

impl Scene {
    pub fn build(spec: &SceneSpec) -> Result<Self> {
        spec.validate()?;
        let geometry = spec.object.build()?;
        let pose = spec.object_pose()?;
        let intrinsics = CameraIntrinsics::try_from(spec.cameras.intrinsics)?;
        let ring = &spec.cameras;
        let target = match ring.target {
            Some(t) => Vector3::from(t),
            None => {
                let (lo, hi) = geometry.bounds();
                (pose * nalgebra::center(&lo, &hi)).coords
            }
        };
        let up = spec.table.normal;
        // any direction in the table plane serves as azimuth zero
        let e1 = if up.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = (e1 - up * up.dot(&e1)).normalize();
        let e2 = up.cross(&e1);
        let el = ring.elevation_deg.to_radians();
        let cameras = (0..ring.count)
            .map(|i| {
                let az = ring.azimuth_deg.to_radians() + 2.0 * std::f64::consts::PI * i as f64 / ring.count as f64;
                let dir = (e1 * az.cos() + e2 * az.sin()) * el.cos() + up * el.sin();
                look_at(target + dir * ring.radius, target, up)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: spec.clone(),
            geometry,
            pose,
            intrinsics,
            cameras,
        })
    }

    /// Renders the masked depth image of one camera.
    pub fn render(&self, view: usize) -> Result<DepthFrame> {
        self.render_from(view, self.cameras.get(view).copied().ok_or_else(|| {
            Error::InvalidInput(format!("view {view} of {} cameras", self.cameras.len()))
        })?)
    }

    /// Renders from an arbitrary camera pose; `view` selects the noise stream.
    pub fn render_from(&self, view: usize, camera: Pose) -> Result<DepthFrame> {
        let to_object = self.pose.inverse() * camera;
        let eye = Point3::from(to_object.translation.vector);
        if self.geometry.contains(&eye) {
            return Err(Error::DegenerateView(format!("camera {view} is inside the object")));
        }
        let intr = self.intrinsics;
        let (w, h) = (intr.x_res() as usize, intr.y_res() as usize);
        let hits: Vec<Option<(f64, f64)>> = (0..w * h)
            .into_par_iter()
            .map(|i| {
                let ray = intr.ray((i % w) as f64, (i / w) as f64);
                let d = to_object.rotation * ray;
                self.geometry.raycast(&eye, &d).map(|(t, n)| {
                    // t is z-depth since the camera ray has unit z
                    let cos = (-d.normalize()).dot(&n).clamp(-1.0, 1.0);
                    (t, cos.abs().acos())
                })
            })
            .collect();
        let mut depth = vec![0.0; w * h];
        let mut mask = vec![false; w * h];
        let noise = self.spec.noise;
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        rng.set_stream(view as u64);
        let sensor = SensorModel::default();
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        for (i, hit) in hits.into_iter().enumerate() {
            let Some((t, theta)) = hit else { continue };
            mask[i] = true;
            depth[i] = t;
            if noise.enabled && noise.factor > 0.0 {
                // grazing hits get the noise of the cutoff angle
                let theta = theta.min(sensor.max_incidence * (1.0 - 1e-9));
                let var = sensor.measurement_variance(t, theta, &intr)?;
                depth[i] = (t + noise.factor * var.sqrt() * unit.sample(&mut rng)).max(0.0);
            }
        }
        DepthFrame::new(depth, mask, camera, intr)
    }

    /// Every view, rendered in parallel.
    pub fn render_all(&self) -> Result<Vec<DepthFrame>> {
        (0..self.cameras.len()).into_par_iter().map(|v| self.render(v)).collect()
    }

    /// Standard deviation the noise model assigns to a hit at `depth` and
    /// incidence `theta`, before the noise factor.
    pub fn noise_sigma(&self, depth: f64, theta: f64) -> Result<f64> {
        Ok(SensorModel::default().measurement_variance(depth, theta, &self.intrinsics)?.sqrt())
    }

    /// Ground-truth skeleton placed in the world. Shapes whose frames fall
    /// back to the cloud need `cloud`.
    pub fn skeleton(&self, cloud: Option<&[Point3<f64>]>) -> Result<Skeleton> {
        ground_truth_skeleton(&self.spec.object, &self.pose, cloud)
    }

    /// `n` exact surface points in world coordinates with normals, zero
    /// uncertainty and surface variation from `k` neighbours.
    pub fn sample_surface(&self, n: usize, seed: u64) -> Result<SurfaceCloud> {
        sample_surface(&self.geometry, &self.pose, n, seed)
    }
}

pub fn ground_truth_skeleton(shape: &ShapeSpec, pose: &Isometry3<f64>, cloud: Option<&[Point3<f64>]>) -> Result<Skeleton> {
    let (spec, kp) = shape.skeleton()?;
    Skeleton::new(spec, kp.iter().map(|p| pose * p).collect(), cloud)
}

/// Area-uniform samples of the object surface.
pub fn sample_surface(geometry: &Geometry, pose: &Isometry3<f64>, n: usize, seed: u64) -> Result<SurfaceCloud> {
    let k = DEFAULT_NEIGHBORHOOD_K;
    if n < k {
        return Err(Error::InvalidInput(format!("need at least {k} surface points, asked for {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = match geometry {
        Geometry::Mesh(m) => m.sample(n, &mut rng),
        Geometry::Solid(s) => {
            let total = s.leaf_area();
            let mut density = 1.2 * n as f64 / total;
            loop {
                let got = s.sample_boundary(density, &mut rng);
                if got.len() >= n {
                    let mut keep = index::sample(&mut rng, got.len(), n).into_vec();
                    keep.sort_unstable();
                    break keep.into_iter().map(|i| got[i]).collect::<Vec<_>>();
                }
                density *= 1.5 * n as f64 / got.len().max(1) as f64;
            }
        }
    };
    let positions: Vec<Point3<f64>> = pts.iter().map(|(p, _)| pose * p).collect();
    let normals: Vec<Vector3<f64>> = pts.iter().map(|(_, nrm)| pose * nrm).collect();
    let variation = surface_variation(&positions, k)?.values;
    Ok(SurfaceCloud {
        uncertainty: vec![0.0; positions.len()],
        positions,
        normals,
        variation,
    })
}

/// Convenience for tests and examples: the scene's pose as row-major.
pub fn pose_record(pose: &Pose) -> Vec<f64> {
    pose_to_row_major(pose).to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::shapes::{Hammer, Screwdriver};

    fn sphere_scene() -> Scene {
        let mut spec = SceneSpec::new(ShapeSpec::Sphere { radius: 50.0 });
        spec.cameras.intrinsics = IntrinsicsFile {
            x_res: 64,
            y_res: 48,
            hfov_deg: 58.0,
            cx: 32.0,
            cy: 24.0,
        };
        Scene::build(&spec).unwrap()
    }

    #[test]
    fn sphere_centre_pixel_depth() {
        let s = sphere_scene();
        for v in 0..4 {
            let f = s.render(v).unwrap();
            let i = 24 * 64 + 32;
            assert!(f.mask()[i]);
            assert!((f.depth()[i] - 350.0).abs() < 1e-9, "{}", f.depth()[i]);
        }
    }

    #[test]
    fn noise_free_points_lie_on_the_sphere() {
        let s = sphere_scene();
        let f = s.render(1).unwrap();
        let c = Point3::new(0.0, 0.0, 50.0);
        let pts = f.world_points();
        assert!(pts.len() > 100);
        for p in pts {
            assert!(((p - c).norm() - 50.0).abs() < 1e-6);
        }
    }

    #[test]
    fn renders_are_deterministic() {
        let mut spec = sphere_scene().spec;
        spec.noise.enabled = true;
        spec.seed = 3;
        let s = Scene::build(&spec).unwrap();
        assert_eq!(s.render(2).unwrap(), s.render(2).unwrap());
        assert_ne!(s.render(2).unwrap().depth(), s.render(1).unwrap().depth());
    }

    #[test]
    fn noise_matches_the_sensor_model() {
        // one pixel looking straight at a box face, many seeds
        let mut spec = SceneSpec::new(ShapeSpec::Box { size: [100.0, 100.0, 100.0] });
        spec.cameras = CameraRing {
            count: 1,
            radius: 500.0,
            elevation_deg: 89.0,
            azimuth_deg: 0.0,
            target: None,
            intrinsics: IntrinsicsFile {
                x_res: 1,
                y_res: 1,
                hfov_deg: 10.0,
                cx: 0.0,
                cy: 0.0,
            },
        };
        spec.noise = NoiseSpec {
            enabled: true,
            factor: 2.0,
        };
        let n = 10_000;
        let mut xs = Vec::with_capacity(n);
        for seed in 0..n as u64 {
            spec.seed = seed;
            xs.push(Scene::build(&spec).unwrap().render(0).unwrap().depth()[0]);
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        spec.noise.enabled = false;
        let s = Scene::build(&spec).unwrap();
        let clean = s.render(0).unwrap().depth()[0];
        let sigma = 2.0 * s.noise_sigma(clean, 1f64.to_radians()).unwrap();
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.2, "{var} vs {}", sigma * sigma);
    }

    #[test]
    fn camera_inside_is_rejected() {
        let mut spec = SceneSpec::new(ShapeSpec::Sphere { radius: 50.0 });
        spec.cameras.radius = 10.0;
        let s = Scene::build(&spec).unwrap();
        assert!(matches!(s.render(0), Err(Error::DegenerateView(_))));
        assert!(s.render(9).is_err());
    }

    #[test]
    fn surface_samples_have_requested_count() {
        let mut spec = SceneSpec::new(ShapeSpec::Screwdriver(Screwdriver::default()));
        spec.pose = Some(pose_record(&Isometry3::new(Vector3::new(10.0, 0.0, 0.0), Vector3::z() * 0.3)));
        let s = Scene::build(&spec).unwrap();
        let c = s.sample_surface(3000, 1).unwrap();
        assert_eq!(c.len(), 3000);
        c.validate().unwrap();
        assert_eq!(c, s.sample_surface(3000, 1).unwrap());
    }

    #[test]
    fn placed_hammer_skeleton() {
        let mut spec = SceneSpec::new(ShapeSpec::Hammer(Hammer::default()));
        let pose = Isometry3::new(Vector3::new(5.0, -3.0, 0.0), Vector3::z() * 1.1);
        spec.pose = Some(pose_record(&pose));
        let s = Scene::build(&spec).unwrap();
        let sk = s.skeleton(None).unwrap();
        assert!((sk.link_lengths()[0] - 200.0).abs() < 1e-9);
        assert!(s.render(0).unwrap().mask().iter().any(|m| *m));
    }
}
