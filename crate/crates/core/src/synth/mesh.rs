//! Triangle meshes from OBJ files, with a bounding-volume hierarchy for ray
//! queries.

use std::io::BufRead;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[usize; 3]>,
    nodes: Vec<Node>,
    /// triangle indices in leaf order
    order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    /// leaf: start..end in `order`; inner: children at `start` and `end`
    start: usize,
    end: usize,
    leaf: bool,
}

const LEAF_SIZE: usize = 4;

impl TriMesh {
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidInput("mesh has no faces".into()));
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= vertices.len())) {
            return Err(Error::InvalidInput(format!("face {t:?} refers to a missing vertex")));
        }
        if vertices.iter().any(|v| !v.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput("non-finite mesh vertex".into()));
        }
        let mut m = Self {
            vertices,
            triangles,
            nodes: Vec::new(),
            order: Vec::new(),
        };
        m.order = (0..m.triangles.len()).collect();
        let n = m.order.len();
        m.build(0, n);
        Ok(m)
    }

    fn centroid(&self, t: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangles[t];
        (self.vertices[a].coords + self.vertices[b].coords + self.vertices[c].coords) / 3.0
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &t in &self.order[start..end] {
            for &v in &self.triangles[t] {
                lo = lo.inf(&self.vertices[v].coords);
                hi = hi.sup(&self.vertices[v].coords);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            start,
            end,
            leaf: true,
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let axis = (hi - lo).imax();
        let mid = (start + end) / 2;
        let mut part = self.order[start..end].to_vec();
        part.sort_by(|a, b| self.centroid(*a)[axis].total_cmp(&self.centroid(*b)[axis]).then(a.cmp(b)));
        self.order[start..end].copy_from_slice(&part);
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node {
            lo,
            hi,
            start: left,
            end: right,
            leaf: false,
        };
        id
    }

    pub fn bounds(&self) -> (Point3<f64>, Point3<f64>) {
        (self.nodes[0].lo.into(), self.nodes[0].hi.into())
    }

    fn normal(&self, t: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        (b - a).cross(&(c - a))
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.normal(t).norm() / 2.0).sum()
    }

    /// Every crossing of the ray `o + t d` with the surface, sorted.
    fn crossings(&self, o: &Point3<f64>, d: &Vector3<f64>) -> Vec<(f64, usize)> {
        let inv = d.map(|v| 1.0 / v);
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let n = &self.nodes[i];
            if !slab_hit(o, &inv, &n.lo, &n.hi) {
                continue;
            }
            if n.leaf {
                for &t in &self.order[n.start..n.end] {
                    if let Some(s) = self.hit_triangle(t, o, d) {
                        out.push((s, t));
                    }
                }
            } else {
                stack.push(n.start);
                stack.push(n.end);
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    /// Möller-Trumbore.
    fn hit_triangle(&self, t: usize, o: &Point3<f64>, d: &Vector3<f64>) -> Option<f64> {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        let e1 = b - a;
        let e2 = c - a;
        let p = d.cross(&e2);
        let det = e1.dot(&p);
        if det.abs() < 1e-14 {
            return None;
        }
        let s = o - a;
        let u = s.dot(&p) / det;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let q = s.cross(&e1);
        let v = d.dot(&q) / det;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        Some(e2.dot(&q) / det)
    }

    /// Nearest hit in front of the origin with the face normal turned toward
    /// the ray origin.
    pub fn raycast(&self, o: &Point3<f64>, d: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        self.crossings(o, d).into_iter().find(|(t, _)| *t > 0.0).map(|(t, tri)| {
            let n = self.normal(tri).normalize();
            (t, if n.dot(d) > 0.0 { -n } else { n })
        })
    }

    /// Parity test along a fixed skew direction; meant for closed meshes.
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let d = Vector3::new(0.5773, 0.5774, 0.5775);
        self.crossings(p, &d).iter().filter(|(t, _)| *t > 0.0).count() % 2 == 1
    }

    /// Area-uniform samples with face normals as wound.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<(Point3<f64>, Vector3<f64>)> {
        let mut cum = Vec::with_capacity(self.triangles.len());
        let mut total = 0.0;
        for t in 0..self.triangles.len() {
            total += self.normal(t).norm();
            cum.push(total);
        }
        (0..n)
            .map(|_| {
                let r = rng.random::<f64>() * total;
                let t = cum.partition_point(|c| *c <= r).min(cum.len() - 1);
                let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
                let (mut u, mut v) = (rng.random::<f64>(), rng.random::<f64>());
                if u + v > 1.0 {
                    u = 1.0 - u;
                    v = 1.0 - v;
                }
                let p = a + (b - a) * u + (c - a) * v;
                let nrm = self.normal(t).try_normalize(0.0).unwrap_or_else(Vector3::z);
                (p, nrm)
            })
            .collect()
    }
}

fn slab_hit(o: &Point3<f64>, inv: &Vector3<f64>, lo: &Vector3<f64>, hi: &Vector3<f64>) -> bool {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        let (mut ta, mut tb) = ((lo[a] - o[a]) * inv[a], (hi[a] - o[a]) * inv[a]);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        // NaN from 0 * inf means the origin sits on the slab plane
        if ta.is_nan() || tb.is_nan() {
            continue;
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
    }
    t0 <= t1 && t1 >= 0.0
}

/// Reads `v` and `f` records; polygons are fanned into triangles, texture and
/// normal indices ignored, negative indices count from the end.
pub fn read_obj<R: BufRead>(reader: R, what: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(what, e))?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse(what, format!("line {}: {e}", no + 1)))?;
                if c.len() != 3 {
                    return Err(Error::parse(what, format!("line {}: vertex needs 3 coordinates", no + 1)));
                }
                vertices.push(Point3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|s| {
                        let head = s.split('/').next().unwrap_or("");
                        let i: i64 = head.parse().map_err(|e| Error::parse(what, format!("line {}: {e}", no + 1)))?;
                        let n = vertices.len() as i64;
                        let k = if i < 0 { n + i } else { i - 1 };
                        if k < 0 || k >= n {
                            return Err(Error::parse(what, format!("line {}: index {i} out of range", no + 1)));
                        }
                        Ok(k as usize)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(Error::parse(what, format!("line {}: face needs 3 vertices", no + 1)));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, triangles)
}

pub fn load_obj(path: &Path) -> Result<TriMesh> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_obj(std::io::BufReader::new(f), &path.display().to_string())
}
