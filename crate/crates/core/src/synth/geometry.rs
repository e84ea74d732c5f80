//! Analytic solids: primitives, unions and differences with exact ray
//! intervals, signed distances and area-uniform surface samples.

use std::f64::consts::PI;

use nalgebra::{Isometry3, Point3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Span of a ray inside a solid with the outward normals at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub t0: f64,
    pub n0: Vector3<f64>,
    pub t1: f64,
    pub n1: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Sphere { radius: f64 },
    /// axis-aligned in its local frame
    Cuboid { half: Vector3<f64> },
    /// local z axis, centred on the origin
    Cylinder { radius: f64, half_height: f64 },
}

impl Primitive {
    pub fn sdf(&self, p: &Point3<f64>) -> f64 {
        match *self {
            Primitive::Sphere { radius } => p.coords.norm() - radius,
            Primitive::Cuboid { half } => {
                let q = p.coords.abs() - half;
                q.sup(&Vector3::zeros()).norm() + q.max().min(0.0)
            }
            Primitive::Cylinder { radius, half_height } => {
                let d = [p.xy().coords.norm() - radius, p.z.abs() - half_height];
                d[0].max(d[1]).min(0.0) + (d[0].max(0.0).powi(2) + d[1].max(0.0).powi(2)).sqrt()
            }
        }
    }

    /// Entry and exit of the ray `o + t d` in the local frame.
    pub fn interval(&self, o: &Point3<f64>, d: &Vector3<f64>) -> Option<Interval> {
        match *self {
            Primitive::Sphere { radius } => {
                let a = d.norm_squared();
                let b = o.coords.dot(d);
                let c = o.coords.norm_squared() - radius * radius;
                let disc = b * b - a * c;
                if !(disc > 0.0) {
                    return None;
                }
                let s = disc.sqrt();
                // stable roots
                let q = -(b + b.signum() * s);
                let (mut t0, mut t1) = if q != 0.0 { (q / a, c / q) } else { (-s / a, s / a) };
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                Some(Interval {
                    t0,
                    n0: (o + d * t0).coords / radius,
                    t1,
                    n1: (o + d * t1).coords / radius,
                })
            }
            Primitive::Cuboid { half } => {
                let mut iv = Interval {
                    t0: f64::NEG_INFINITY,
                    n0: Vector3::zeros(),
                    t1: f64::INFINITY,
                    n1: Vector3::zeros(),
                };
                for a in 0..3 {
                    if !clip_slab(&mut iv, o[a], d[a], -half[a], half[a], &Vector3::ith(a, 1.0)) {
                        return None;
                    }
                }
                Some(iv)
            }
            Primitive::Cylinder { radius, half_height } => {
                let mut iv = Interval {
                    t0: f64::NEG_INFINITY,
                    n0: Vector3::zeros(),
                    t1: f64::INFINITY,
                    n1: Vector3::zeros(),
                };
                let a = d.x * d.x + d.y * d.y;
                let c = o.x * o.x + o.y * o.y - radius * radius;
                if a == 0.0 {
                    if c >= 0.0 {
                        return None;
                    }
                } else {
                    let b = o.x * d.x + o.y * d.y;
                    let disc = b * b - a * c;
                    if !(disc > 0.0) {
                        return None;
                    }
                    let s = disc.sqrt();
                    let q = -(b + b.signum() * s);
                    let (mut t0, mut t1) = if q != 0.0 { (q / a, c / q) } else { (-s / a, s / a) };
                    if t0 > t1 {
                        std::mem::swap(&mut t0, &mut t1);
                    }
                    let radial = |t: f64| {
                        let p = o + d * t;
                        Vector3::new(p.x, p.y, 0.0) / radius
                    };
                    iv = Interval {
                        t0,
                        n0: radial(t0),
                        t1,
                        n1: radial(t1),
                    };
                }
                if !clip_slab(&mut iv, o.z, d.z, -half_height, half_height, &Vector3::z()) {
                    return None;
                }
                Some(iv)
            }
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Primitive::Sphere { radius } => 4.0 * PI * radius * radius,
            Primitive::Cuboid { half } => 8.0 * (half.x * half.y + half.y * half.z + half.x * half.z),
            Primitive::Cylinder { radius, half_height } => 2.0 * PI * radius * (2.0 * half_height + radius),
        }
    }

    /// Local corner bounds.
    pub fn half_extent(&self) -> Vector3<f64> {
        match *self {
            Primitive::Sphere { radius } => Vector3::repeat(radius),
            Primitive::Cuboid { half } => half,
            Primitive::Cylinder { radius, half_height } => Vector3::new(radius, radius, half_height),
        }
    }

    /// One area-uniform point with its outward normal.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> (Point3<f64>, Vector3<f64>) {
        match *self {
            Primitive::Sphere { radius } => {
                let z: f64 = rng.random_range(-1.0..1.0);
                let a: f64 = rng.random_range(0.0..2.0 * PI);
                let r = (1.0 - z * z).sqrt();
                let n = Vector3::new(r * a.cos(), r * a.sin(), z);
                (Point3::from(n * radius), n)
            }
            Primitive::Cuboid { half } => {
                let faces = [half.y * half.z, half.x * half.z, half.x * half.y];
                let total = 2.0 * (faces[0] + faces[1] + faces[2]);
                let mut pick = rng.random_range(0.0..total);
                let mut axis = 2;
                for (a, f) in faces.iter().enumerate() {
                    if pick < 2.0 * f {
                        axis = a;
                        break;
                    }
                    pick -= 2.0 * f;
                }
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let mut p = Vector3::zeros();
                for a in 0..3 {
                    p[a] = if a == axis { sign * half[a] } else { rng.random_range(-half[a]..half[a]) };
                }
                (Point3::from(p), Vector3::ith(axis, sign))
            }
            Primitive::Cylinder { radius, half_height } => {
                let side = 2.0 * half_height;
                let pick = rng.random_range(0.0..side + radius);
                let a: f64 = rng.random_range(0.0..2.0 * PI);
                if pick < side {
                    let n = Vector3::new(a.cos(), a.sin(), 0.0);
                    let z = rng.random_range(-half_height..half_height);
                    (Point3::new(radius * n.x, radius * n.y, z), n)
                } else {
                    let r = radius * rng.random::<f64>().sqrt();
                    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    (Point3::new(r * a.cos(), r * a.sin(), sign * half_height), Vector3::z() * sign)
                }
            }
        }
    }
}

fn clip_slab(iv: &mut Interval, o: f64, d: f64, lo: f64, hi: f64, axis: &Vector3<f64>) -> bool {
    if d == 0.0 {
        return o > lo && o < hi;
    }
    let (mut ta, mut tb) = ((lo - o) / d, (hi - o) / d);
    let (mut na, mut nb) = (-axis, *axis);
    if ta > tb {
        std::mem::swap(&mut ta, &mut tb);
        std::mem::swap(&mut na, &mut nb);
    }
    if ta > iv.t0 {
        iv.t0 = ta;
        iv.n0 = na;
    }
    if tb < iv.t1 {
        iv.t1 = tb;
        iv.n1 = nb;
    }
    iv.t0 < iv.t1
}

/// Constructive solid: placed primitives combined by union and difference.
#[derive(Debug, Clone, PartialEq)]
pub enum Solid {
    /// primitive with its local -> object placement
    Leaf(Isometry3<f64>, Primitive),
    Union(Vec<Solid>),
    Difference(Box<Solid>, Box<Solid>),
}

impl Solid {
    pub fn leaf(at: Vector3<f64>, prim: Primitive) -> Self {
        Solid::Leaf(Isometry3::translation(at.x, at.y, at.z), prim)
    }

    /// Signed distance; exact outside, a bound inside composites.
    pub fn sdf(&self, p: &Point3<f64>) -> f64 {
        match self {
            Solid::Leaf(iso, prim) => prim.sdf(&iso.inverse_transform_point(p)),
            Solid::Union(parts) => parts.iter().map(|s| s.sdf(p)).fold(f64::INFINITY, f64::min),
            Solid::Difference(a, b) => a.sdf(p).max(-b.sdf(p)),
        }
    }

    /// Sorted disjoint spans of the ray inside the solid.
    pub fn intervals(&self, o: &Point3<f64>, d: &Vector3<f64>) -> Vec<Interval> {
        match self {
            Solid::Leaf(iso, prim) => {
                let lo = iso.inverse_transform_point(o);
                let ld = iso.inverse_transform_vector(d);
                prim.interval(&lo, &ld)
                    .map(|iv| Interval {
                        n0: iso.transform_vector(&iv.n0),
                        n1: iso.transform_vector(&iv.n1),
                        ..iv
                    })
                    .into_iter()
                    .collect()
            }
            Solid::Union(parts) => {
                let mut all: Vec<Interval> = parts.iter().flat_map(|s| s.intervals(o, d)).collect();
                all.sort_by(|a, b| a.t0.total_cmp(&b.t0));
                let mut out: Vec<Interval> = Vec::with_capacity(all.len());
                for iv in all {
                    match out.last_mut() {
                        Some(last) if iv.t0 <= last.t1 => {
                            if iv.t1 > last.t1 {
                                last.t1 = iv.t1;
                                last.n1 = iv.n1;
                            }
                        }
                        _ => out.push(iv),
                    }
                }
                out
            }
            Solid::Difference(a, b) => {
                let cut = b.intervals(o, d);
                let mut out = Vec::new();
                for mut iv in a.intervals(o, d) {
                    for c in &cut {
                        if c.t1 <= iv.t0 || c.t0 >= iv.t1 {
                            continue;
                        }
                        if c.t0 > iv.t0 {
                            out.push(Interval {
                                t1: c.t0,
                                n1: -c.n0,
                                ..iv
                            });
                        }
                        if c.t1 >= iv.t1 {
                            iv.t0 = f64::INFINITY;
                            break;
                        }
                        iv.t0 = c.t1;
                        iv.n0 = -c.n1;
                    }
                    if iv.t0 < iv.t1 {
                        out.push(iv);
                    }
                }
                out
            }
        }
    }

    /// First surface hit in front of the ray origin with its outward normal.
    pub fn raycast(&self, o: &Point3<f64>, d: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        self.intervals(o, d).into_iter().find(|iv| iv.t0 > 0.0).map(|iv| (iv.t0, iv.n0))
    }

    /// Object-frame bounding box.
    pub fn bounds(&self) -> (Point3<f64>, Point3<f64>) {
        match self {
            Solid::Leaf(iso, prim) => {
                let h = prim.half_extent();
                let mut lo = Vector3::repeat(f64::INFINITY);
                let mut hi = Vector3::repeat(f64::NEG_INFINITY);
                for i in 0..8 {
                    let c = Vector3::new(
                        if i & 1 == 0 { -h.x } else { h.x },
                        if i & 2 == 0 { -h.y } else { h.y },
                        if i & 4 == 0 { -h.z } else { h.z },
                    );
                    let w = iso * Point3::from(c);
                    lo = lo.inf(&w.coords);
                    hi = hi.sup(&w.coords);
                }
                (lo.into(), hi.into())
            }
            Solid::Union(parts) => parts.iter().map(Solid::bounds).fold(
                (Point3::from(Vector3::repeat(f64::INFINITY)), Point3::from(Vector3::repeat(f64::NEG_INFINITY))),
                |(a, b), (c, d)| (a.coords.inf(&c.coords).into(), b.coords.sup(&d.coords).into()),
            ),
            Solid::Difference(a, _) => a.bounds(),
        }
    }

    fn leaves<'a>(&'a self, out: &mut Vec<(&'a Isometry3<f64>, &'a Primitive)>) {
        match self {
            Solid::Leaf(iso, p) => out.push((iso, p)),
            Solid::Union(parts) => parts.iter().for_each(|s| s.leaves(out)),
            Solid::Difference(a, b) => {
                a.leaves(out);
                b.leaves(out);
            }
        }
    }

    /// Total primitive surface area, an upper bound on the solid's.
    pub fn leaf_area(&self) -> f64 {
        let mut l = Vec::new();
        self.leaves(&mut l);
        l.iter().map(|(_, p)| p.area()).sum()
    }

    /// Points on the solid's boundary drawn at `density` per mm² of primitive
    /// surface; samples hidden inside other parts are dropped and faces
    /// exposed by a difference get flipped normals.
    pub fn sample_boundary(&self, density: f64, rng: &mut ChaCha8Rng) -> Vec<(Point3<f64>, Vector3<f64>)> {
        const EPS: f64 = 1e-9;
        match self {
            Solid::Leaf(iso, prim) => {
                let expect = prim.area() * density;
                let mut n = expect.floor() as usize;
                if rng.random::<f64>() < expect - n as f64 {
                    n += 1;
                }
                (0..n)
                    .map(|_| {
                        let (p, nrm) = prim.sample(rng);
                        (iso * p, iso * nrm)
                    })
                    .collect()
            }
            Solid::Union(parts) => {
                let mut out = Vec::new();
                for (i, s) in parts.iter().enumerate() {
                    for (p, n) in s.sample_boundary(density, rng) {
                        let hidden = parts.iter().enumerate().any(|(j, o)| j != i && o.sdf(&p) < -EPS);
                        if !hidden {
                            out.push((p, n));
                        }
                    }
                }
                out
            }
            Solid::Difference(a, b) => {
                let mut out: Vec<_> = a.sample_boundary(density, rng).into_iter().filter(|(p, _)| b.sdf(p) > EPS).collect();
                out.extend(
                    b.sample_boundary(density, rng)
                        .into_iter()
                        .filter(|(p, _)| a.sdf(p) < -EPS)
                        .map(|(p, n)| (p, -n)),
                );
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn cup() -> Solid {
        Solid::Difference(
            Box::new(Solid::leaf(Vector3::new(0.0, 0.0, 50.0), Primitive::Cylinder { radius: 40.0, half_height: 50.0 })),
            Box::new(Solid::leaf(Vector3::new(0.0, 0.0, 55.0), Primitive::Cylinder { radius: 36.0, half_height: 50.0 })),
        )
    }

    #[test]
    fn sphere_ray_depth_is_exact() {
        let s = Solid::leaf(Vector3::zeros(), Primitive::Sphere { radius: 50.0 });
        let (t, n) = s.raycast(&Point3::new(0.0, 0.0, -400.0), &Vector3::z()).unwrap();
        assert_eq!(t, 350.0);
        assert!((n + Vector3::z()).norm() < 1e-15);
    }

    #[test]
    fn box_and_cylinder_hits() {
        let b = Solid::leaf(Vector3::zeros(), Primitive::Cuboid { half: Vector3::new(10.0, 20.0, 30.0) });
        let (t, n) = b.raycast(&Point3::new(-100.0, 1.0, 2.0), &Vector3::x()).unwrap();
        assert_eq!((t, n), (90.0, -Vector3::x()));
        assert!(b.raycast(&Point3::new(-100.0, 25.0, 0.0), &Vector3::x()).is_none());
        let c = Solid::leaf(Vector3::zeros(), Primitive::Cylinder { radius: 5.0, half_height: 10.0 });
        let (t, _) = c.raycast(&Point3::new(0.0, 0.0, 50.0), &-Vector3::z()).unwrap();
        assert_eq!(t, 40.0);
        let (t, n) = c.raycast(&Point3::new(50.0, 0.0, 3.0), &-Vector3::x()).unwrap();
        assert!((t - 45.0).abs() < 1e-12 && (n - Vector3::x()).norm() < 1e-12);
    }

    #[test]
    fn difference_exposes_inner_wall() {
        let c = cup();
        // looking straight down into the cup hits the inside floor
        let (t, n) = c.raycast(&Point3::new(0.0, 0.0, 300.0), &-Vector3::z()).unwrap();
        assert!((t - 295.0).abs() < 1e-12);
        assert!((n - Vector3::z()).norm() < 1e-12);
        // horizontally through the wall at mid height
        let iv = c.intervals(&Point3::new(-100.0, 0.0, 50.0), &Vector3::x());
        assert_eq!(iv.len(), 2);
        assert!((iv[0].t0 - 60.0).abs() < 1e-12 && (iv[0].t1 - 64.0).abs() < 1e-12);
        assert!((iv[0].n1 - Vector3::x()).norm() < 1e-12);
    }

    #[test]
    fn sdf_matches_ray_hits() {
        let c = cup();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let o = Point3::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0), 250.0);
            let d = (Point3::new(0.0, 0.0, 50.0) - o + Vector3::new(rng.random_range(-30.0..30.0), 0.0, 0.0)).normalize();
            if let Some((t, _)) = c.raycast(&o, &d) {
                assert!(c.sdf(&(o + d * t)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn boundary_samples_lie_on_surface() {
        let s = Solid::Union(vec![
            cup(),
            Solid::leaf(Vector3::new(45.0, 0.0, 50.0), Primitive::Cuboid { half: Vector3::new(10.0, 4.0, 20.0) }),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = s.sample_boundary(0.05, &mut rng);
        assert!(pts.len() > 1000);
        for (p, n) in &pts {
            assert!(s.sdf(p).abs() < 1e-6, "{p}");
            // stepping along the normal leaves the solid
            assert!(s.sdf(&(p + n * 0.5)) > 0.0, "{p} {n}");
        }
    }
}
