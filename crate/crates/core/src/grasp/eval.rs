//! Grasp quality: contact angles, surface quality, and their weighted sum
//! with the task term.

use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WEIGHTS: [f64; 3] = [0.4, 0.3, 0.3];
pub const DEFAULT_FRICTION_CONE: f64 = 0.8;
pub const DEFAULT_C_MAX: f64 = 3.0;

const UNIT_TOL: f64 = 1e-6;

/// One finger-surface contact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub position: Point3<f64>,
    /// outward surface normal
    pub normal: Vector3<f64>,
    /// direction the finger presses in
    pub closing: Vector3<f64>,
    /// surface standard deviation, mm
    pub uncertainty: f64,
    pub variation: f64,
}

impl Contact {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("normal", &self.normal), ("closing direction", &self.closing)] {
            let n = v.norm();
            if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidContact(format!("{name} has length {n}")));
            }
        }
        if !(self.uncertainty >= 0.0) || !(self.variation >= 0.0) {
            return Err(Error::InvalidContact(format!(
                "c = {}, u = {} must be non-negative",
                self.uncertainty, self.variation
            )));
        }
        Ok(())
    }

    /// Angle between the closing direction and the surface normal.
    pub fn angle(&self) -> f64 {
        self.closing.dot(&self.normal).clamp(-1.0, 1.0).acos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreConfig {
    pub weights: [f64; 3],
    /// friction cone opening angle, rad
    pub friction_cone: f64,
    /// mm
    pub c_max: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            weights: DEFAULT_WEIGHTS,
            friction_cone: DEFAULT_FRICTION_CONE,
            c_max: DEFAULT_C_MAX,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidConfig(format!("weights {:?} must be non-negative", self.weights)));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("weights sum to {sum}, not 1")));
        }
        if !(self.friction_cone > 0.0 && self.friction_cone < PI) {
            return Err(Error::InvalidConfig(format!("friction cone {} outside (0, π)", self.friction_cone)));
        }
        if !(self.c_max > 0.0) {
            return Err(Error::InvalidConfig(format!("c_max {} must be positive", self.c_max)));
        }
        Ok(())
    }

    /// Weights for planning without a task: w3 is shared out to w1 and w2 in
    /// proportion.
    pub fn baseline(&self) -> Result<Self> {
        self.validate()?;
        let [w1, w2, _] = self.weights;
        let s = w1 + w2;
        if !(s > 0.0) {
            return Err(Error::InvalidConfig("baseline needs w1 + w2 > 0".into()));
        }
        Ok(Self {
            weights: [w1 / s, w2 / s, 0.0],
            ..*self
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspScore {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub total: f64,
}

/// Contact-angle quality from the angles α between closing directions and
/// outward normals. Zero if any contact leaves the friction cone.
pub fn contact_angle_score_from_angles(alphas: &[f64], friction_cone: f64) -> f64 {
    if alphas.is_empty() {
        return 0.0;
    }
    let half = friction_cone / 2.0;
    let mut sum = 0.0;
    for a in alphas {
        let dev = (PI - a).abs();
        if !(dev < half) {
            return 0.0;
        }
        sum += 1.0 - dev / half;
    }
    sum / alphas.len() as f64
}

pub fn contact_angle_score(contacts: &[Contact], friction_cone: f64) -> Result<f64> {
    for c in contacts {
        c.validate()?;
    }
    let alphas: Vec<f64> = contacts.iter().map(Contact::angle).collect();
    Ok(contact_angle_score_from_angles(&alphas, friction_cone))
}

/// Surface quality from per-contact uncertainty `c` and variation `u`.
pub fn surface_quality_from_values(values: &[(f64, f64)], c_max: f64) -> f64 {
    let mut p = 1.0;
    for &(c, u) in values {
        if !(c < c_max) {
            return 0.0;
        }
        p *= (1.0 - c / c_max) * (1.0 - 3.0 * u).max(0.0);
    }
    p
}

pub fn surface_quality_score(contacts: &[Contact], c_max: f64) -> Result<f64> {
    for c in contacts {
        c.validate()?;
    }
    let values: Vec<(f64, f64)> = contacts.iter().map(|c| (c.uncertainty, c.variation)).collect();
    Ok(surface_quality_from_values(&values, c_max))
}

pub fn combined_score(p1: f64, p2: f64, p3: f64, cfg: &ScoreConfig) -> Result<GraspScore> {
    cfg.validate()?;
    for p in [p1, p2, p3] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidScore(p));
        }
    }
    let [w1, w2, w3] = cfg.weights;
    Ok(GraspScore {
        p1,
        p2,
        p3,
        total: w1 * p1 + w2 * p2 + w3 * p3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1e-300)
    }

    fn contact(alpha: f64, c: f64, u: f64) -> Contact {
        Contact {
            position: Point3::origin(),
            normal: Vector3::x(),
            closing: Vector3::new(alpha.cos(), alpha.sin(), 0.0),
            uncertainty: c,
            variation: u,
        }
    }

    #[test]
    fn contact_angle_examples() {
        assert_eq!(contact_angle_score_from_angles(&[PI, PI], 0.8), 1.0);
        assert!(rel(contact_angle_score_from_angles(&[PI, PI - 0.2], 0.8), 0.75));
        assert_eq!(contact_angle_score_from_angles(&[PI, PI - 0.5], 0.8), 0.0);
        // gate is strict at the cone boundary
        let a = PI - 0.4;
        assert_eq!(contact_angle_score_from_angles(&[PI, a], 2.0 * (PI - a)), 0.0);
        let cs = [contact(PI, 0.0, 0.0), contact(PI - 0.2, 0.0, 0.0)];
        assert!((contact_angle_score(&cs, 0.8).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn surface_quality_examples() {
        assert_eq!(surface_quality_from_values(&[(0.0, 0.0), (0.0, 0.0)], 3.0), 1.0);
        assert_eq!(surface_quality_from_values(&[(0.0, 0.0), (3.0, 0.0)], 3.0), 0.0);
        assert!(rel(surface_quality_from_values(&[(1.5, 1.0 / 6.0)], 3.0), 0.25));
        assert_eq!(surface_quality_from_values(&[(0.0, 0.4)], 3.0), 0.0);
    }

    #[test]
    fn combined_examples() {
        let cfg = ScoreConfig {
            weights: [0.5, 0.5, 0.0],
            ..Default::default()
        };
        assert!(rel(combined_score(0.4, 0.8, 0.3, &cfg).unwrap().total, 0.6));
        assert!(rel(combined_score(1.0, 1.0, 1.0, &ScoreConfig::default()).unwrap().total, 1.0));
        assert!(rel(combined_score(0.5, 0.2, 0.9, &ScoreConfig::default()).unwrap().total, 0.53));
        let bad = ScoreConfig {
            weights: [0.5, 0.5, 0.5],
            ..Default::default()
        };
        assert!(matches!(combined_score(0.1, 0.1, 0.1, &bad), Err(Error::InvalidConfig(_))));
        assert!(matches!(combined_score(1.1, 0.1, 0.1, &cfg), Err(Error::InvalidScore(_))));
    }

    #[test]
    fn baseline_redistributes() {
        let b = ScoreConfig::default().baseline().unwrap();
        assert!((b.weights[0] - 4.0 / 7.0).abs() < 1e-15);
        assert!((b.weights[1] - 3.0 / 7.0).abs() < 1e-15);
        assert_eq!(b.weights[2], 0.0);
        b.validate().unwrap();
    }

    #[test]
    fn zero_vectors_are_invalid() {
        let mut c = contact(PI, 0.0, 0.0);
        c.normal = Vector3::zeros();
        assert!(matches!(contact_angle_score(&[c], 0.8), Err(Error::InvalidContact(_))));
    }

    proptest! {
        #[test]
        fn scores_stay_in_unit_interval(
            a in proptest::collection::vec(0.0..PI, 1..5),
            cu in proptest::collection::vec((0.0..5.0f64, 0.0..0.4f64), 1..5),
            p3 in 0.0..=1.0f64, w in (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64),
        ) {
            let p1 = contact_angle_score_from_angles(&a, 0.8);
            let p2 = surface_quality_from_values(&cu, 3.0);
            prop_assert!((0.0..=1.0).contains(&p1) && (0.0..=1.0).contains(&p2));
            let s = w.0 + w.1 + w.2;
            prop_assume!(s > 1e-3);
            let cfg = ScoreConfig { weights: [w.0 / s, w.1 / s, 1.0 - w.0 / s - w.1 / s], ..Default::default() };
            prop_assume!(cfg.weights[2] >= 0.0);
            let g = combined_score(p1, p2, p3, &cfg).unwrap();
            prop_assert!(g.total >= -1e-12 && g.total <= 1.0 + 1e-12);
            let [w1, w2, w3] = cfg.weights;
            prop_assert!((g.total - (w1 * p1 + w2 * p2 + w3 * p3)).abs() < 1e-12);
        }

        #[test]
        fn surface_quality_is_monotone(c in 0.0..3.0f64, u in 0.0..0.33f64, dc in 0.0..1.0f64, du in 0.0..0.1f64) {
            let base = surface_quality_from_values(&[(c, u), (0.5, 0.1)], 3.0);
            prop_assert!(surface_quality_from_values(&[(c + dc, u), (0.5, 0.1)], 3.0) <= base + 1e-15);
            prop_assert!(surface_quality_from_values(&[(c, u + du), (0.5, 0.1)], 3.0) <= base + 1e-15);
        }

        #[test]
        fn any_contact_outside_cone_zeroes_p1(good in proptest::collection::vec(PI - 0.39..=PI, 1..4), bad in 0.0..(PI - 0.4)) {
            let mut a = good.clone();
            a.push(bad);
            prop_assert_eq!(contact_angle_score_from_angles(&a, 0.8), 0.0);
        }
    }
}
