//! Gaussian mixtures over (θ, φ) with θ periodic.
//!
//! Each component sees a point on whichever θ branch (θ, θ ± 2π) gives it the
//! highest density. EM treats that branch as part of the latent assignment,
//! which keeps the log-likelihood nondecreasing.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest allowed covariance eigenvalue, rad².
pub const COVARIANCE_FLOOR: f64 = 1e-6;
pub const DEFAULT_MAX_COMPONENTS: usize = 4;
pub const MAX_ITERATIONS: usize = 200;
pub const CONVERGENCE_TOL: f64 = 1e-6;
const RESTARTS: u64 = 4;
const SHIFTS: [f64; 3] = [0.0, -TAU, TAU];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    #[serde(rename = "w")]
    pub weight: f64,
    /// (θ, φ), θ in (−π, π]
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl Component {
    fn cov_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.cov[0][0], self.cov[0][1], self.cov[1][0], self.cov[1][1])
    }

    /// Log density on the best θ branch, and the shift that achieved it.
    fn log_density(&self, x: [f64; 2]) -> (f64, f64) {
        let g = Gauss::new(self);
        g.best(x)
    }
}

/// Precomputed inverse and log normaliser of one component.
struct Gauss {
    mean: Vector2<f64>,
    inv: Matrix2<f64>,
    log_norm: f64,
}

impl Gauss {
    fn new(c: &Component) -> Self {
        let cov = c.cov_matrix();
        let det = cov.determinant();
        Self {
            mean: Vector2::new(c.mean[0], c.mean[1]),
            inv: cov.try_inverse().unwrap_or_else(Matrix2::identity),
            log_norm: -(TAU.ln()) - 0.5 * det.ln(),
        }
    }

    fn best(&self, x: [f64; 2]) -> (f64, f64) {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for s in SHIFTS {
            let d = Vector2::new(x[0] + s, x[1]) - self.mean;
            let ld = self.log_norm - 0.5 * (d.transpose() * self.inv * d)[0];
            if ld > best.0 {
                best = (ld, s);
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm {
    pub components: Vec<Component>,
}

impl Gmm {
    /// Checks weights, means and covariances.
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidInput("mixture has no components".into()));
        }
        let sum: f64 = self.components.iter().map(|c| c.weight).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("mixture weights sum to {sum}")));
        }
        for c in &self.components {
            if !(c.weight > 0.0) {
                return Err(Error::InvalidInput(format!("component weight {}", c.weight)));
            }
            if !c.mean.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidInput("non-finite component mean".into()));
            }
            let m = c.cov_matrix();
            if (m[(0, 1)] - m[(1, 0)]).abs() > 1e-12 * m.abs().max().max(1.0) {
                return Err(Error::InvalidInput("component covariance not symmetric".into()));
            }
            let ev = SymmetricEigen::new(m).eigenvalues;
            if !(ev.min() >= COVARIANCE_FLOOR * (1.0 - 1e-9)) {
                return Err(Error::InvalidInput(format!("covariance eigenvalue {} below floor", ev.min())));
            }
        }
        Ok(())
    }

    /// Mixture density with each component on its best θ branch.
    pub fn density(&self, x: [f64; 2]) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * c.log_density(x).0.exp())
            .sum()
    }

    /// Highest mixture density over the component means.
    pub fn peak_density(&self) -> f64 {
        self.components
            .iter()
            .map(|c| self.density(c.mean))
            .fold(0.0, f64::max)
    }

    pub fn log_likelihood(&self, data: &[[f64; 2]]) -> f64 {
        let gs: Vec<Gauss> = self.components.iter().map(Gauss::new).collect();
        data.iter()
            .map(|x| {
                let terms: Vec<f64> = gs
                    .iter()
                    .zip(&self.components)
                    .map(|(g, c)| c.weight.ln() + g.best(*x).0)
                    .collect();
                log_sum_exp(&terms)
            })
            .sum()
    }

    /// Free parameters: weights (k − 1), means (2k), covariances (3k).
    pub fn parameter_count(&self) -> usize {
        6 * self.components.len() - 1
    }

    pub fn bic(&self, data: &[[f64; 2]]) -> f64 {
        -2.0 * self.log_likelihood(data) + self.parameter_count() as f64 * (data.len() as f64).ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub gmm: Gmm,
    pub log_likelihood: f64,
    /// log-likelihood before every M-step and after the last one
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// One EM run for `k` components from a k-means++ start drawn with `rng`.
pub fn fit_em(data: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> Result<EmFit> {
    if k == 0 || data.len() < k {
        return Err(Error::InvalidInput(format!("{} points cannot support {k} components", data.len())));
    }
    if data.iter().any(|x| !x[0].is_finite() || !x[1].is_finite()) {
        return Err(Error::InvalidInput("non-finite training direction".into()));
    }
    let n = data.len();
    let centers = kmeans_pp(data, k, rng);
    let spread = clamp_cov(global_cov(data));
    let mut comps: Vec<Component> = centers
        .iter()
        .map(|c| Component {
            weight: 1.0 / k as f64,
            mean: *c,
            cov: to_array(&spread),
        })
        .collect();

    let mut trace = Vec::new();
    let mut resp = vec![0.0; n * k];
    let mut shift = vec![0.0; n * k];
    let mut converged = false;
    let mut iterations = 0;
    loop {
        // E-step
        let gs: Vec<Gauss> = comps.iter().map(Gauss::new).collect();
        let mut ll = 0.0;
        let mut terms = vec![0.0; k];
        for (i, x) in data.iter().enumerate() {
            for j in 0..k {
                let (ld, s) = gs[j].best(*x);
                terms[j] = if comps[j].weight > 0.0 { comps[j].weight.ln() + ld } else { f64::NEG_INFINITY };
                shift[i * k + j] = s;
            }
            let lse = log_sum_exp(&terms);
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = (terms[j] - lse).exp();
            }
        }
        if !ll.is_finite() {
            return Err(Error::Numerical(format!("EM log-likelihood {ll}")));
        }
        if let Some(prev) = trace.last() {
            if ll - prev < CONVERGENCE_TOL {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        if iterations == MAX_ITERATIONS {
            break;
        }
        iterations += 1;

        // M-step on the unwrapped points
        for (j, comp) in comps.iter_mut().enumerate() {
            let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if !(nk > 1e-300) {
                comp.weight = 0.0;
                continue;
            }
            let mut mean = Vector2::zeros();
            for (i, x) in data.iter().enumerate() {
                mean += Vector2::new(x[0] + shift[i * k + j], x[1]) * resp[i * k + j];
            }
            mean /= nk;
            let mut cov = Matrix2::zeros();
            for (i, x) in data.iter().enumerate() {
                let d = Vector2::new(x[0] + shift[i * k + j], x[1]) - mean;
                cov += d * d.transpose() * resp[i * k + j];
            }
            cov /= nk;
            comp.weight = nk / n as f64;
            comp.mean = [wrap_angle(mean.x), mean.y];
            comp.cov = to_array(&clamp_cov(cov));
        }
    }
    comps.retain(|c| c.weight > 0.0);
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    for c in &mut comps {
        c.weight /= total;
    }
    let gmm = Gmm { components: comps };
    let log_likelihood = *trace.last().expect("at least one E-step");
    Ok(EmFit {
        gmm,
        log_likelihood,
        trace,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub best: EmFit,
    /// (component count, BIC) for every count tried
    pub bic: Vec<(usize, f64)>,
    /// every EM run, for diagnostics
    pub runs: Vec<EmFit>,
}

/// Fits 1..=`max_components` (capped by the number of points) with a few
/// seeded restarts each and keeps the count with the lowest BIC.
pub fn select_by_bic(data: &[[f64; 2]], max_components: usize, seed: u64) -> Result<Selection> {
    if max_components == 0 {
        return Err(Error::InvalidConfig("max_components must be >= 1".into()));
    }
    if data.is_empty() {
        return Err(Error::InvalidInput("no training directions".into()));
    }
    let mut bic = Vec::new();
    let mut runs = Vec::new();
    let mut best: Option<(f64, EmFit)> = None;
    for k in 1..=max_components.min(data.len()) {
        let restarts = if k == 1 { 1 } else { RESTARTS };
        let mut best_k: Option<EmFit> = None;
        for r in 0..restarts {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((k as u64) << 32) ^ r);
            let fit = fit_em(data, k, &mut rng)?;
            if best_k.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
                best_k = Some(fit.clone());
            }
            runs.push(fit);
        }
        let fit = best_k.expect("at least one restart");
        let b = fit.gmm.bic(data);
        bic.push((k, b));
        if best.as_ref().is_none_or(|(bb, _)| b < *bb) {
            best = Some((b, fit));
        }
    }
    let (_, best) = best.expect("at least one component count");
    Ok(Selection { best, bic, runs })
}

/// Maps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut t = a.rem_euclid(TAU);
    if t > PI {
        t -= TAU;
    }
    if t <= -PI {
        t += TAU;
    }
    t
}

fn wrapped_sq_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dt = wrap_angle(a[0] - b[0]);
    dt * dt + (a[1] - b[1]).powi(2)
}

fn kmeans_pp(data: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let mut centers = vec![data[rng.random_range(0..data.len())]];
    let mut d2: Vec<f64> = data.iter().map(|x| wrapped_sq_dist(*x, centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut pick = data.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if t < *d {
                    pick = i;
                    break;
                }
                t -= d;
            }
            pick
        } else {
            rng.random_range(0..data.len())
        };
        let c = data[idx];
        for (d, x) in d2.iter_mut().zip(data) {
            *d = d.min(wrapped_sq_dist(*x, c));
        }
        centers.push(c);
    }
    centers
}

/// Covariance about the circular mean of θ and the plain mean of φ.
fn global_cov(data: &[[f64; 2]]) -> Matrix2<f64> {
    let n = data.len() as f64;
    let (s, c) = data.iter().fold((0.0, 0.0), |(s, c), x| (s + x[0].sin(), c + x[0].cos()));
    let theta0 = s.atan2(c);
    let phi0 = data.iter().map(|x| x[1]).sum::<f64>() / n;
    let mut cov = Matrix2::zeros();
    for x in data {
        let d = Vector2::new(wrap_angle(x[0] - theta0), x[1] - phi0);
        cov += d * d.transpose();
    }
    cov / n
}

/// Raises eigenvalues below the floor to it.
pub fn clamp_cov(m: Matrix2<f64>) -> Matrix2<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|v| v.max(COVARIANCE_FLOOR));
    let out = eig.eigenvectors * Matrix2::from_diagonal(&vals) * eig.eigenvectors.transpose();
    (out + out.transpose()) * 0.5
}

fn to_array(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn cluster(rng: &mut ChaCha8Rng, mean: [f64; 2], sd: f64, n: usize) -> Vec<[f64; 2]> {
        let nd = Normal::new(0.0, sd).unwrap();
        (0..n)
            .map(|_| [wrap_angle(mean[0] + nd.sample(rng)), mean[1] + nd.sample(rng)])
            .collect()
    }

    fn assert_monotone(trace: &[f64]) {
        for w in trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn single_tight_cluster_selects_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<_> = (0..30)
            .map(|_| [0.4 + (rng.random::<f64>() - 0.5) * 1e-3, 1.1 + (rng.random::<f64>() - 0.5) * 1e-3])
            .collect();
        let sel = select_by_bic(&data, 4, 3).unwrap();
        assert_eq!(sel.best.gmm.components.len(), 1);
        let m = sel.best.gmm.components[0].mean;
        assert!((m[0] - 0.4).abs() < 0.01 && (m[1] - 1.1).abs() < 0.01);
        sel.best.gmm.validate().unwrap();
    }

    #[test]
    fn two_clusters_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut data = cluster(&mut rng, [-0.75, 1.3], 0.1, 60);
        data.extend(cluster(&mut rng, [0.75, 1.3], 0.1, 60));
        let sel = select_by_bic(&data, 4, 9).unwrap();
        let comps = &sel.best.gmm.components;
        assert_eq!(comps.len(), 2);
        let mut means: Vec<_> = comps.iter().map(|c| c.mean).collect();
        means.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!((means[0][0] + 0.75).abs() < 0.05 && (means[0][1] - 1.3).abs() < 0.05);
        assert!((means[1][0] - 0.75).abs() < 0.05 && (means[1][1] - 1.3).abs() < 0.05);
        for r in &sel.runs {
            assert_monotone(&r.trace);
        }
    }

    #[test]
    fn cluster_across_seam_stays_whole() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = cluster(&mut rng, [PI, 0.8], 0.1, 80);
        assert!(data.iter().any(|x| x[0] < 0.0) && data.iter().any(|x| x[0] > 0.0));
        let sel = select_by_bic(&data, 4, 1).unwrap();
        assert_eq!(sel.best.gmm.components.len(), 1);
        let c = &sel.best.gmm.components[0];
        assert!(wrap_angle(c.mean[0] - PI).abs() < 0.05);
        assert!(c.cov[0][0] < 0.02, "{:?}", c.cov);
        // density is continuous through the seam
        let g = &sel.best.gmm;
        let a = g.density([PI, 0.8]);
        let b = g.density([-PI + 1e-12, 0.8]);
        assert!((a - b).abs() < 1e-6 * a);
    }

    #[test]
    fn floor_holds_for_duplicates() {
        let data = vec![[0.1, 0.2]; 5];
        let sel = select_by_bic(&data, 3, 0).unwrap();
        sel.best.gmm.validate().unwrap();
        let c = &sel.best.gmm.components[0];
        assert!((c.cov[0][0] - COVARIANCE_FLOOR).abs() < 1e-15);
        assert!((sel.best.gmm.density(c.mean) / sel.best.gmm.peak_density() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_for_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data = cluster(&mut rng, [1.0, 2.0], 0.3, 40);
        let a = select_by_bic(&data, 4, 77).unwrap();
        let b = select_by_bic(&data, 4, 77).unwrap();
        assert_eq!(a.best.gmm, b.best.gmm);
        assert_eq!(a.bic, b.bic);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(select_by_bic(&[], 2, 0).is_err());
        assert!(select_by_bic(&[[0.0, 0.0]], 0, 0).is_err());
        assert!(select_by_bic(&[[f64::NAN, 0.0]], 1, 0).is_err());
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!((wrap_angle(-7.0) - (-7.0 + TAU)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn em_log_likelihood_never_decreases(
            seed in 0u64..1000,
            pts in proptest::collection::vec((-PI..PI, 0.0..PI), 4..40),
            k in 1usize..4,
        ) {
            let data: Vec<[f64; 2]> = pts.into_iter().map(|(a, b)| [a, b]).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fit = fit_em(&data, k.min(data.len()), &mut rng).unwrap();
            assert_monotone(&fit.trace);
            fit.gmm.validate().unwrap();
        }

        #[test]
        fn clamp_cov_floors_and_keeps_large(a in 0.0..1.0f64, b in -1.0..1.0f64, c in 0.0..1.0f64) {
            let m = clamp_cov(Matrix2::new(a, b, b, c));
            let ev = SymmetricEigen::new(m).eigenvalues;
            prop_assert!(ev.min() >= COVARIANCE_FLOOR * (1.0 - 1e-9));
            prop_assert!((m[(0, 1)] - m[(1, 0)]).abs() < 1e-15);
        }
    }
}
