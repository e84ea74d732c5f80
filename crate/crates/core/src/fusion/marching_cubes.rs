//! Zero-level isosurface of the fused mean distance.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::tables::{EDGE_TABLE, TRI_TABLE};
use super::volume::FusedVolume;

/// Corner offsets in table order.
const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Triangle mesh with the surface standard deviation at every vertex.
#[derive(Debug, Clone, Default)]
pub struct SurfaceMesh {
    pub vertices: Vec<Point3<f64>>,
    /// mm, interpolated along the crossing edge
    pub sigma: Vec<f64>,
    pub triangles: Vec<[u32; 3]>,
    /// Grid coordinates of the lower corner of the cell each triangle came from.
    pub triangle_cells: Vec<[usize; 3]>,
}

impl SurfaceMesh {
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i as usize]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }
}

/// Runs marching cubes over every cell whose eight corners are observed.
/// Corners are voxel centres; a corner is "inside" when its mean is >= 0.
pub fn extract_mesh(volume: &FusedVolume) -> SurfaceMesh {
    let [nx, ny, nz] = volume.dims();
    let mut mesh = SurfaceMesh::default();
    let mut edge_vertex: HashMap<(usize, usize), u32> = HashMap::new();

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let mut vals = [0.0; 8];
                let mut sig = [0.0; 8];
                let mut complete = true;
                for (c, off) in CORNERS.iter().enumerate() {
                    match volume.get(i + off[0], j + off[1], k + off[2]) {
                        Some(g) => {
                            vals[c] = g.mean;
                            sig[c] = g.var.sqrt();
                        }
                        None => {
                            complete = false;
                            break;
                        }
                    }
                }
                if !complete {
                    continue;
                }
                let mut case = 0usize;
                for (c, v) in vals.iter().enumerate() {
                    if *v < 0.0 {
                        case |= 1 << c;
                    }
                }
                let edges = EDGE_TABLE[case];
                if edges == 0 {
                    continue;
                }
                let mut ids = [u32::MAX; 12];
                for (e, [a, b]) in EDGES.iter().enumerate() {
                    if edges & (1 << e) == 0 {
                        continue;
                    }
                    let ca = [i + CORNERS[*a][0], j + CORNERS[*a][1], k + CORNERS[*a][2]];
                    let cb = [i + CORNERS[*b][0], j + CORNERS[*b][1], k + CORNERS[*b][2]];
                    let (lo, axis) = edge_key(ca, cb);
                    let key = (volume.index(lo[0], lo[1], lo[2]), axis);
                    let id = *edge_vertex.entry(key).or_insert_with(|| {
                        let t = vals[*a] / (vals[*a] - vals[*b]);
                        let pa = volume.voxel_center(ca[0], ca[1], ca[2]);
                        let pb = volume.voxel_center(cb[0], cb[1], cb[2]);
                        mesh.vertices.push(pa + (pb - pa) * t);
                        mesh.sigma.push(sig[*a] + (sig[*b] - sig[*a]) * t);
                        (mesh.vertices.len() - 1) as u32
                    });
                    ids[e] = id;
                }
                for tri in TRI_TABLE[case].chunks(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    let t = [ids[tri[0] as usize], ids[tri[1] as usize], ids[tri[2] as usize]];
                    if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                        continue;
                    }
                    mesh.triangles.push(t);
                    mesh.triangle_cells.push([i, j, k]);
                }
            }
        }
    }
    mesh
}

fn edge_key(a: [usize; 3], b: [usize; 3]) -> ([usize; 3], usize) {
    let axis = (0..3).find(|&ax| a[ax] != b[ax]).expect("edge endpoints differ");
    if a[axis] < b[axis] {
        (a, axis)
    } else {
        (b, axis)
    }
}

/// Gradient of the trilinear interpolant of cell `cell` at world point `p`.
pub(crate) fn cell_gradient(volume: &FusedVolume, cell: [usize; 3], p: &Point3<f64>) -> Option<Vector3<f64>> {
    let h = volume.voxel_size();
    let base = volume.voxel_center(cell[0], cell[1], cell[2]);
    let t = ((p - base) / h).map(|v| v.clamp(0.0, 1.0));
    let mut v = [[[0.0; 2]; 2]; 2];
    for (dz, plane) in v.iter_mut().enumerate() {
        for (dy, row) in plane.iter_mut().enumerate() {
            for (dx, val) in row.iter_mut().enumerate() {
                *val = volume.get(cell[0] + dx, cell[1] + dy, cell[2] + dz)?.mean;
            }
        }
    }
    let lerp = |a: f64, b: f64, s: f64| a + (b - a) * s;
    let gx = lerp(
        lerp(v[0][0][1] - v[0][0][0], v[0][1][1] - v[0][1][0], t.y),
        lerp(v[1][0][1] - v[1][0][0], v[1][1][1] - v[1][1][0], t.y),
        t.z,
    );
    let gy = lerp(
        lerp(v[0][1][0] - v[0][0][0], v[0][1][1] - v[0][0][1], t.x),
        lerp(v[1][1][0] - v[1][0][0], v[1][1][1] - v[1][0][1], t.x),
        t.z,
    );
    let gz = lerp(
        lerp(v[1][0][0] - v[0][0][0], v[1][0][1] - v[0][0][1], t.x),
        lerp(v[1][1][0] - v[0][1][0], v[1][1][1] - v[0][1][1], t.x),
        t.y,
    );
    Some(Vector3::new(gx, gy, gz) / h)
}

/// Central-difference gradient at a voxel, falling back to one-sided
/// differences at the edge of the observed band.
fn voxel_gradient(volume: &FusedVolume, c: [usize; 3]) -> Option<Vector3<f64>> {
    let dims = volume.dims();
    let h = volume.voxel_size();
    let at = |q: [usize; 3]| volume.get(q[0], q[1], q[2]).map(|g| g.mean);
    let here = at(c)?;
    let mut g = Vector3::zeros();
    for a in 0..3 {
        let mut lo = c;
        let mut hi = c;
        let minus = if c[a] > 0 {
            lo[a] -= 1;
            at(lo)
        } else {
            None
        };
        let plus = if c[a] + 1 < dims[a] {
            hi[a] += 1;
            at(hi)
        } else {
            None
        };
        g[a] = match (minus, plus) {
            (Some(m), Some(p)) => (p - m) / (2.0 * h),
            (None, Some(p)) => (p - here) / h,
            (Some(m), None) => (here - m) / h,
            (None, None) => return None,
        };
    }
    Some(g)
}

/// Smoothed field gradient at `p` inside cell `cell`: trilinear blend of the
/// corner voxel gradients, or the raw cell gradient where those are missing
/// or disagree with it.
pub(crate) fn field_gradient(volume: &FusedVolume, cell: [usize; 3], p: &Point3<f64>) -> Option<Vector3<f64>> {
    let raw = cell_gradient(volume, cell, p)?;
    let h = volume.voxel_size();
    let base = volume.voxel_center(cell[0], cell[1], cell[2]);
    let t = ((p - base) / h).map(|v| v.clamp(0.0, 1.0));
    let mut acc = Vector3::zeros();
    for off in CORNERS {
        let Some(g) = voxel_gradient(volume, [cell[0] + off[0], cell[1] + off[1], cell[2] + off[2]]) else {
            return Some(raw);
        };
        let w = (0..3)
            .map(|a| if off[a] == 1 { t[a] } else { 1.0 - t[a] })
            .product::<f64>();
        acc += g * w;
    }
    if acc.dot(&raw) > 0.0 {
        Some(acc)
    } else {
        Some(raw)
    }
}
