//! Uniform-grid point index for radius and k-nearest-neighbour queries.

use nalgebra::Point3;

#[derive(Debug, Clone)]
pub struct PointGrid {
    cell: f64,
    min: Point3<f64>,
    dims: [usize; 3],
    starts: Vec<u32>,
    entries: Vec<u32>,
    points: Vec<Point3<f64>>,
}

impl PointGrid {
    /// Builds an index with the given cell edge length. The cell is enlarged if
    /// the grid would otherwise have far more cells than points.
    pub fn new(points: &[Point3<f64>], cell: f64) -> Self {
        let mut min = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut max = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        if points.is_empty() {
            min = Point3::origin();
            max = Point3::origin();
        }
        let extent = max - min;
        let mut cell = if cell.is_finite() && cell > 0.0 {
            cell
        } else {
            extent.max().max(1.0)
        };
        let cap = (8 * points.len()).max(64) as f64;
        loop {
            let n: f64 = (0..3).map(|a| (extent[a] / cell).floor() + 1.0).product();
            if n <= cap {
                break;
            }
            cell *= 1.5;
        }
        let dims = [0, 1, 2].map(|a| (extent[a] / cell).floor() as usize + 1);
        let ncell = dims[0] * dims[1] * dims[2];

        let mut grid = PointGrid {
            cell,
            min,
            dims,
            starts: vec![0; ncell + 1],
            entries: vec![0; points.len()],
            points: points.to_vec(),
        };
        let keys: Vec<usize> = points.iter().map(|p| grid.cell_index(p)).collect();
        for &k in &keys {
            grid.starts[k + 1] += 1;
        }
        for i in 0..ncell {
            grid.starts[i + 1] += grid.starts[i];
        }
        let mut fill = grid.starts.clone();
        for (i, &k) in keys.iter().enumerate() {
            grid.entries[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        grid
    }

    /// Picks a cell size so that roughly `per_cell` points of a surface-like
    /// cloud share a cell.
    pub fn for_surface(points: &[Point3<f64>], per_cell: usize) -> Self {
        if points.len() < 2 {
            return Self::new(points, 1.0);
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let e = hi - lo;
        let area = 2.0 * (e.x * e.y + e.y * e.z + e.z * e.x);
        let cell = (area.max(1e-12) * per_cell as f64 / points.len() as f64).sqrt();
        Self::new(points, cell)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn cell_coords(&self, p: &Point3<f64>) -> [i64; 3] {
        [0, 1, 2].map(|a| ((p[a] - self.min[a]) / self.cell).floor() as i64)
    }

    fn cell_index(&self, p: &Point3<f64>) -> usize {
        let c = self.cell_coords(p);
        let c = [0, 1, 2].map(|a| c[a].clamp(0, self.dims[a] as i64 - 1) as usize);
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn cell_slice(&self, c: [i64; 3]) -> &[u32] {
        if c.iter().zip(self.dims).any(|(&v, d)| v < 0 || v >= d as i64) {
            return &[];
        }
        let i = (c[2] as usize * self.dims[1] + c[1] as usize) * self.dims[0] + c[0] as usize;
        &self.entries[self.starts[i] as usize..self.starts[i + 1] as usize]
    }

    /// Indices of all points within `radius` of `q`, in ascending index order.
    pub fn within_radius(&self, q: &Point3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let lo = self.cell_coords(&(q - nalgebra::Vector3::repeat(radius)));
        let hi = self.cell_coords(&(q + nalgebra::Vector3::repeat(radius)));
        let r2 = radius * radius;
        for z in lo[2].max(0)..=hi[2].min(self.dims[2] as i64 - 1) {
            for y in lo[1].max(0)..=hi[1].min(self.dims[1] as i64 - 1) {
                for x in lo[0].max(0)..=hi[0].min(self.dims[0] as i64 - 1) {
                    for &i in self.cell_slice([x, y, z]) {
                        if (self.points[i as usize] - q).norm_squared() <= r2 {
                            out.push(i as usize);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Whether any point lies within `radius` of `q`.
    pub fn any_within(&self, q: &Point3<f64>, radius: f64) -> bool {
        let lo = self.cell_coords(&(q - nalgebra::Vector3::repeat(radius)));
        let hi = self.cell_coords(&(q + nalgebra::Vector3::repeat(radius)));
        let r2 = radius * radius;
        for z in lo[2].max(0)..=hi[2].min(self.dims[2] as i64 - 1) {
            for y in lo[1].max(0)..=hi[1].min(self.dims[1] as i64 - 1) {
                for x in lo[0].max(0)..=hi[0].min(self.dims[0] as i64 - 1) {
                    if self
                        .cell_slice([x, y, z])
                        .iter()
                        .any(|&i| (self.points[i as usize] - q).norm_squared() <= r2)
                    {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// The `k` nearest points to `q` as `(index, squared distance)`, sorted by
    /// distance then index. Returns fewer when the index holds fewer points.
    pub fn nearest_k(&self, q: &Point3<f64>, k: usize) -> Vec<(usize, f64)> {
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        if k == 0 || self.points.is_empty() {
            return best;
        }
        let c = self.cell_coords(q);
        let max_ring = self.dims.iter().copied().max().unwrap_or(1) as i64
            + c.iter().map(|v| v.abs()).max().unwrap_or(0);
        for ring in 0..=max_ring {
            let lo = [0, 1, 2].map(|a| (c[a] - ring).max(0));
            let hi = [0, 1, 2].map(|a| (c[a] + ring).min(self.dims[a] as i64 - 1));
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    for x in lo[0]..=hi[0] {
                        let on_shell = (x - c[0]).abs() == ring
                            || (y - c[1]).abs() == ring
                            || (z - c[2]).abs() == ring;
                        if !on_shell {
                            continue;
                        }
                        for &i in self.cell_slice([x, y, z]) {
                            let d2 = (self.points[i as usize] - q).norm_squared();
                            insert_sorted(&mut best, (i as usize, d2), k);
                        }
                    }
                }
            }
            if best.len() == k {
                let bound = ring as f64 * self.cell;
                if best[k - 1].1 <= bound * bound {
                    break;
                }
            }
        }
        best
    }
}

fn insert_sorted(best: &mut Vec<(usize, f64)>, item: (usize, f64), k: usize) {
    let key = |e: &(usize, f64)| (e.1, e.0);
    if best.len() == k && key(&item) >= key(&best[k - 1]) {
        return;
    }
    let pos = best
        .binary_search_by(|e| key(e).partial_cmp(&key(&item)).unwrap())
        .unwrap_or_else(|p| p);
    best.insert(pos, item);
    best.truncate(k);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, seed: u64) -> Vec<Point3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-20.0..20.0),
                    rng.random_range(0.0..5.0),
                )
            })
            .collect()
    }

    #[test]
    fn knn_matches_brute_force() {
        let pts = random_points(2000, 3);
        let grid = PointGrid::for_surface(&pts, 8);
        for q in random_points(50, 9) {
            let got = grid.nearest_k(&q, 16);
            let mut all: Vec<(usize, f64)> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p - q).norm_squared()))
                .collect();
            all.sort_by(|a, b| (a.1, a.0).partial_cmp(&(b.1, b.0)).unwrap());
            assert_eq!(got, all[..16].to_vec());
        }
    }

    #[test]
    fn radius_matches_brute_force() {
        let pts = random_points(1000, 5);
        let grid = PointGrid::new(&pts, 4.0);
        for q in random_points(30, 11) {
            let got = grid.within_radius(&q, 6.0);
            let want: Vec<usize> = (0..pts.len())
                .filter(|&i| (pts[i] - q).norm() <= 6.0)
                .collect();
            assert_eq!(got, want);
            assert_eq!(grid.any_within(&q, 6.0), !want.is_empty());
        }
    }

    #[test]
    fn knn_with_query_far_outside() {
        let pts = random_points(100, 1);
        let grid = PointGrid::new(&pts, 2.0);
        let got = grid.nearest_k(&Point3::new(1000.0, 0.0, 0.0), 3);
        assert_eq!(got.len(), 3);
    }
}
