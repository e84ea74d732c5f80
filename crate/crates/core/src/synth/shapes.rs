//! Parametric test objects. Every shape rests on the table plane z = 0 of
//! its object frame; elongated ones lie along +x starting at the origin.

use std::path::PathBuf;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::geometry::{Primitive, Solid};
use super::mesh::{load_obj, TriMesh};
use crate::error::{Error, Result};
use crate::skeleton::{FrameRule, SkeletonSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hammer {
    pub handle_length: f64,
    pub handle_radius: f64,
    /// along y
    pub head_length: f64,
    /// square cross-section of the head
    pub head_width: f64,
}

impl Default for Hammer {
    fn default() -> Self {
        Self {
            handle_length: 200.0,
            handle_radius: 12.0,
            head_length: 100.0,
            head_width: 25.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Screwdriver {
    pub handle_length: f64,
    pub handle_radius: f64,
    pub shaft_length: f64,
    pub shaft_radius: f64,
}

impl Default for Screwdriver {
    fn default() -> Self {
        Self {
            handle_length: 100.0,
            handle_radius: 15.0,
            shaft_length: 100.0,
            shaft_radius: 2.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Brush {
    pub handle_length: f64,
    pub handle_radius: f64,
    /// bristle block, x y z
    pub head_size: [f64; 3],
}

impl Default for Brush {
    fn default() -> Self {
        Self {
            handle_length: 150.0,
            handle_radius: 10.0,
            head_size: [60.0, 40.0, 30.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Cup {
    pub radius: f64,
    pub height: f64,
    pub wall: f64,
    /// how far the handle sticks out past the wall
    pub handle_reach: f64,
}

impl Default for Cup {
    fn default() -> Self {
        Self {
            radius: 40.0,
            height: 100.0,
            wall: 4.0,
            handle_reach: 25.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Wrench {
    pub handle_length: f64,
    pub handle_width: f64,
    pub thickness: f64,
    pub head_radius: f64,
    /// direction of the jaw opening from the link, rad
    pub jaw_angle: f64,
}

impl Default for Wrench {
    fn default() -> Self {
        Self {
            handle_length: 150.0,
            handle_width: 20.0,
            thickness: 8.0,
            head_radius: 22.0,
            jaw_angle: std::f64::consts::FRAC_PI_4,
        }
    }
}

/// Object geometry in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Sphere { radius: f64 },
    Box { size: [f64; 3] },
    /// standing on its base
    Cylinder { radius: f64, height: f64 },
    Hammer(Hammer),
    Screwdriver(Screwdriver),
    Brush(Brush),
    Cup(Cup),
    Wrench(Wrench),
    /// OBJ file, vertices scaled by `scale`
    Mesh {
        path: PathBuf,
        #[serde(default = "unit")]
        scale: f64,
    },
}

fn unit() -> f64 {
    1.0
}

/// Built geometry in the object frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Solid(Solid),
    Mesh(TriMesh),
}

impl Geometry {
    pub fn raycast(&self, o: &Point3<f64>, d: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        match self {
            Geometry::Solid(s) => s.raycast(o, d),
            Geometry::Mesh(m) => m.raycast(o, d),
        }
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        match self {
            Geometry::Solid(s) => s.sdf(p) < 0.0,
            Geometry::Mesh(m) => m.contains(p),
        }
    }

    pub fn bounds(&self) -> (Point3<f64>, Point3<f64>) {
        match self {
            Geometry::Solid(s) => s.bounds(),
            Geometry::Mesh(m) => m.bounds(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} = {v} must be positive")))
    }
}

fn cyl_x(start: f64, length: f64, radius: f64, z: f64) -> Solid {
    let rot = nalgebra::UnitQuaternion::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_2);
    Solid::Leaf(
        nalgebra::Isometry3::from_parts(nalgebra::Translation3::new(start + length / 2.0, 0.0, z), rot),
        Primitive::Cylinder {
            radius,
            half_height: length / 2.0,
        },
    )
}

fn cuboid(center: [f64; 3], size: [f64; 3]) -> Solid {
    Solid::leaf(
        Vector3::from(center),
        Primitive::Cuboid {
            half: Vector3::from(size) / 2.0,
        },
    )
}

impl ShapeSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ShapeSpec::Sphere { .. } => "sphere",
            ShapeSpec::Box { .. } => "box",
            ShapeSpec::Cylinder { .. } => "cylinder",
            ShapeSpec::Hammer(_) => "hammer",
            ShapeSpec::Screwdriver(_) => "screwdriver",
            ShapeSpec::Brush(_) => "brush",
            ShapeSpec::Cup(_) => "cup",
            ShapeSpec::Wrench(_) => "wrench",
            ShapeSpec::Mesh { .. } => "mesh",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ShapeSpec::Sphere { radius } => positive("radius", *radius),
            ShapeSpec::Box { size } => size.iter().try_for_each(|s| positive("box size", *s)),
            ShapeSpec::Cylinder { radius, height } => {
                positive("radius", *radius)?;
                positive("height", *height)
            }
            ShapeSpec::Hammer(h) => {
                for (n, v) in [
                    ("handle_length", h.handle_length),
                    ("handle_radius", h.handle_radius),
                    ("head_length", h.head_length),
                    ("head_width", h.head_width),
                ] {
                    positive(n, v)?;
                }
                if 2.0 * h.handle_radius > h.head_width {
                    return Err(Error::InvalidInput("hammer handle is thicker than its head".into()));
                }
                Ok(())
            }
            ShapeSpec::Screwdriver(s) => {
                for (n, v) in [
                    ("handle_length", s.handle_length),
                    ("handle_radius", s.handle_radius),
                    ("shaft_length", s.shaft_length),
                    ("shaft_radius", s.shaft_radius),
                ] {
                    positive(n, v)?;
                }
                Ok(())
            }
            ShapeSpec::Brush(b) => {
                positive("handle_length", b.handle_length)?;
                positive("handle_radius", b.handle_radius)?;
                b.head_size.iter().try_for_each(|s| positive("head_size", *s))?;
                if 2.0 * b.handle_radius > b.head_size[2] {
                    return Err(Error::InvalidInput("brush handle is thicker than its head".into()));
                }
                Ok(())
            }
            ShapeSpec::Cup(c) => {
                for (n, v) in [
                    ("radius", c.radius),
                    ("height", c.height),
                    ("wall", c.wall),
                    ("handle_reach", c.handle_reach),
                ] {
                    positive(n, v)?;
                }
                if c.wall >= c.radius || c.wall >= c.height {
                    return Err(Error::InvalidInput("cup wall too thick".into()));
                }
                Ok(())
            }
            ShapeSpec::Wrench(w) => {
                for (n, v) in [
                    ("handle_length", w.handle_length),
                    ("handle_width", w.handle_width),
                    ("thickness", w.thickness),
                    ("head_radius", w.head_radius),
                ] {
                    positive(n, v)?;
                }
                if !w.jaw_angle.is_finite() || w.jaw_angle.sin().abs() < 0.1 {
                    return Err(Error::InvalidInput("wrench jaw must point away from the handle axis".into()));
                }
                Ok(())
            }
            ShapeSpec::Mesh { scale, .. } => positive("scale", *scale),
        }
    }

    pub fn build(&self) -> Result<Geometry> {
        self.validate()?;
        let solid = match *self {
            ShapeSpec::Sphere { radius } => Solid::leaf(Vector3::new(0.0, 0.0, radius), Primitive::Sphere { radius }),
            ShapeSpec::Box { size } => cuboid([0.0, 0.0, size[2] / 2.0], size),
            ShapeSpec::Cylinder { radius, height } => Solid::leaf(
                Vector3::new(0.0, 0.0, height / 2.0),
                Primitive::Cylinder {
                    radius,
                    half_height: height / 2.0,
                },
            ),
            ShapeSpec::Hammer(h) => {
                let z = h.head_width / 2.0;
                Solid::Union(vec![
                    cyl_x(0.0, h.handle_length, h.handle_radius, z),
                    cuboid([h.handle_length, 0.0, z], [h.head_width, h.head_length, h.head_width]),
                ])
            }
            ShapeSpec::Screwdriver(s) => {
                let z = s.handle_radius;
                Solid::Union(vec![
                    cyl_x(0.0, s.handle_length, s.handle_radius, z),
                    cyl_x(s.handle_length, s.shaft_length, s.shaft_radius, z),
                ])
            }
            ShapeSpec::Brush(b) => {
                let [hx, hy, hz] = b.head_size;
                Solid::Union(vec![
                    cyl_x(0.0, b.handle_length, b.handle_radius, hz / 2.0),
                    cuboid([b.handle_length + hx / 2.0, 0.0, hz / 2.0], [hx, hy, hz]),
                ])
            }
            ShapeSpec::Cup(c) => {
                let body = Solid::Difference(
                    Box::new(Solid::leaf(
                        Vector3::new(0.0, 0.0, c.height / 2.0),
                        Primitive::Cylinder {
                            radius: c.radius,
                            half_height: c.height / 2.0,
                        },
                    )),
                    Box::new(Solid::leaf(
                        Vector3::new(0.0, 0.0, c.wall + c.height / 2.0),
                        Primitive::Cylinder {
                            radius: c.radius - c.wall,
                            half_height: c.height / 2.0,
                        },
                    )),
                );
                // the handle starts inside the wall so the union is connected
                let x0 = c.radius - c.wall / 2.0;
                let x1 = c.radius + c.handle_reach;
                let handle = cuboid(
                    [(x0 + x1) / 2.0, 0.0, c.height / 2.0],
                    [x1 - x0, c.wall.max(8.0), c.height * 0.6],
                );
                Solid::Union(vec![body, handle])
            }
            ShapeSpec::Wrench(w) => {
                let z = w.thickness / 2.0;
                Solid::Union(vec![
                    cuboid([w.handle_length / 2.0, 0.0, z], [w.handle_length, w.handle_width, w.thickness]),
                    Solid::leaf(
                        Vector3::new(w.handle_length, 0.0, z),
                        Primitive::Cylinder {
                            radius: w.head_radius,
                            half_height: z,
                        },
                    ),
                ])
            }
            ShapeSpec::Mesh { ref path, scale } => {
                let mut m = load_obj(path)?;
                if scale != 1.0 {
                    m = TriMesh::new(m.vertices.iter().map(|v| v * scale).collect(), m.triangles.clone())?;
                }
                return Ok(Geometry::Mesh(m));
            }
        };
        Ok(Geometry::Solid(solid))
    }

    /// Class topology and object-frame keypoints of the shape. Screwdriver
    /// and brush share one link spanning the handle.
    pub fn skeleton(&self) -> Result<(SkeletonSpec, Vec<Point3<f64>>)> {
        self.validate()?;
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let two = |class: &str, a: &str, b: &str| {
            SkeletonSpec::new(
                class,
                names(&[a, b]),
                vec![[0, 1]],
                vec![FrameRule {
                    reference: 0,
                    third: None,
                }],
            )
        };
        let three = |class: &str, kp: [&str; 3]| {
            SkeletonSpec::new(
                class,
                names(&kp),
                vec![[0, 1], [1, 2]],
                vec![
                    FrameRule {
                        reference: 0,
                        third: Some(2),
                    },
                    FrameRule {
                        reference: 1,
                        third: Some(0),
                    },
                ],
            )
        };
        match *self {
            ShapeSpec::Box { size } => Ok((
                two("box", "face_a", "face_b")?,
                vec![Point3::new(-size[0] / 2.0, 0.0, size[2] / 2.0), Point3::new(size[0] / 2.0, 0.0, size[2] / 2.0)],
            )),
            ShapeSpec::Cylinder { height, .. } => Ok((
                two("cylinder", "base", "top")?,
                vec![Point3::origin(), Point3::new(0.0, 0.0, height)],
            )),
            ShapeSpec::Hammer(h) => {
                let z = h.head_width / 2.0;
                Ok((
                    three("hammer", ["handle_end", "head_junction", "head_tip"])?,
                    vec![
                        Point3::new(0.0, 0.0, z),
                        Point3::new(h.handle_length, 0.0, z),
                        Point3::new(h.handle_length, h.head_length / 2.0, z),
                    ],
                ))
            }
            ShapeSpec::Screwdriver(s) => Ok((
                two("screwdriver", "handle_start", "handle_end")?,
                vec![Point3::new(0.0, 0.0, s.handle_radius), Point3::new(s.handle_length, 0.0, s.handle_radius)],
            )),
            ShapeSpec::Brush(b) => {
                let z = b.head_size[2] / 2.0;
                Ok((
                    two("brush", "handle_start", "handle_end")?,
                    vec![Point3::new(0.0, 0.0, z), Point3::new(b.handle_length, 0.0, z)],
                ))
            }
            ShapeSpec::Cup(c) => Ok((
                three("cup", ["base", "rim", "handle"])?,
                vec![
                    Point3::origin(),
                    Point3::new(0.0, 0.0, c.height),
                    Point3::new(c.radius + c.handle_reach, 0.0, c.height / 2.0),
                ],
            )),
            ShapeSpec::Wrench(w) => {
                let z = w.thickness / 2.0;
                Ok((
                    three("wrench", ["handle_end", "head_center", "jaw"])?,
                    vec![
                        Point3::new(0.0, 0.0, z),
                        Point3::new(w.handle_length, 0.0, z),
                        Point3::new(
                            w.handle_length + w.head_radius * w.jaw_angle.cos(),
                            w.head_radius * w.jaw_angle.sin(),
                            z,
                        ),
                    ],
                ))
            }
            ShapeSpec::Sphere { .. } | ShapeSpec::Mesh { .. } => {
                Err(Error::UnsupportedShape(format!("{} has no keypoint skeleton", self.name())))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hammer_handle_keypoints_are_handle_length_apart() {
        let (spec, kp) = ShapeSpec::Hammer(Hammer::default()).skeleton().unwrap();
        assert_eq!(spec.keypoints[0], "handle_end");
        assert!(((kp[1] - kp[0]).norm() - 200.0).abs() < 1e-9);
    }

    #[test]
    fn box_keypoints_sit_on_opposite_faces() {
        let shape = ShapeSpec::Box { size: [60.0, 40.0, 30.0] };
        let (_, kp) = shape.skeleton().unwrap();
        let Geometry::Solid(s) = shape.build().unwrap() else { panic!() };
        for p in &kp {
            assert!(s.sdf(p).abs() < 1e-12);
        }
        assert!(((kp[1] - kp[0]).norm() - 60.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_has_no_skeleton() {
        assert!(matches!(ShapeSpec::Sphere { radius: 50.0 }.skeleton(), Err(Error::UnsupportedShape(_))));
    }

    #[test]
    fn shapes_rest_on_the_table() {
        for s in [
            ShapeSpec::Sphere { radius: 30.0 },
            ShapeSpec::Box { size: [10.0, 20.0, 30.0] },
            ShapeSpec::Cylinder { radius: 10.0, height: 40.0 },
            ShapeSpec::Hammer(Hammer::default()),
            ShapeSpec::Screwdriver(Screwdriver::default()),
            ShapeSpec::Brush(Brush::default()),
            ShapeSpec::Cup(Cup::default()),
            ShapeSpec::Wrench(Wrench::default()),
        ] {
            let (lo, _) = s.build().unwrap().bounds();
            assert!(lo.z.abs() < 1e-9, "{} {lo}", s.name());
        }
    }

    #[test]
    fn json_names_the_type() {
        let s: ShapeSpec = serde_json::from_str(r#"{"type":"hammer","handle_length":150}"#).unwrap();
        let ShapeSpec::Hammer(h) = s else { panic!() };
        assert_eq!(h.handle_length, 150.0);
        assert_eq!(h.head_width, 25.0);
        assert!(serde_json::from_str::<ShapeSpec>(r#"{"type":"teapot"}"#).is_err());
        assert!(ShapeSpec::Box { size: [1.0, -1.0, 1.0] }.validate().is_err());
    }
}
