use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the frame of a link is oriented. `third` names the keypoint spanning
/// the frame plane with the link; without it the frame comes from the object
/// cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRule {
    /// Link endpoint the frame sits at; x points from here to the other end.
    pub reference: usize,
    #[serde(default)]
    pub third: Option<usize>,
}

/// Keypoint topology of an object class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonSpec {
    pub class: String,
    pub keypoints: Vec<String>,
    pub links: Vec<[usize; 2]>,
    pub frame_rules: Vec<FrameRule>,
}

impl SkeletonSpec {
    pub fn new(
        class: impl Into<String>,
        keypoints: Vec<String>,
        links: Vec<[usize; 2]>,
        frame_rules: Vec<FrameRule>,
    ) -> Result<Self> {
        let spec = Self {
            class: class.into(),
            keypoints,
            links,
            frame_rules,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("skeleton spec `{}`: {m}", self.class)));
        let n = self.keypoints.len();
        if n < 2 {
            return bad("needs at least two keypoints".into());
        }
        for (i, name) in self.keypoints.iter().enumerate() {
            if name.is_empty() {
                return bad(format!("keypoint {i} has an empty name"));
            }
            if self.keypoints[..i].contains(name) {
                return bad(format!("duplicate keypoint name `{name}`"));
            }
        }
        if self.links.is_empty() {
            return bad("needs at least one link".into());
        }
        if self.frame_rules.len() != self.links.len() {
            return bad(format!(
                "{} links but {} frame rules",
                self.links.len(),
                self.frame_rules.len()
            ));
        }
        for (l, ([a, b], rule)) in self.links.iter().zip(&self.frame_rules).enumerate() {
            if *a >= n || *b >= n {
                return bad(format!("link {l} refers to a missing keypoint"));
            }
            if a == b {
                return bad(format!("link {l} joins keypoint {a} to itself"));
            }
            if self.links[..l]
                .iter()
                .any(|[c, d]| (c == a && d == b) || (c == b && d == a))
            {
                return bad(format!("link {l} is a duplicate"));
            }
            if rule.reference != *a && rule.reference != *b {
                return bad(format!("frame rule {l} reference is not a link endpoint"));
            }
            if let Some(t) = rule.third {
                if t >= n || t == *a || t == *b {
                    return bad(format!("frame rule {l} third keypoint {t} invalid"));
                }
            }
        }
        Ok(())
    }

    pub fn keypoint_index(&self, name: &str) -> Option<usize> {
        self.keypoints.iter().position(|k| k == name)
    }

    /// Keypoints that are an endpoint of some link, ascending.
    pub fn linked_keypoints(&self) -> Vec<usize> {
        (0..self.keypoints.len())
            .filter(|k| self.links.iter().any(|l| l.contains(k)))
            .collect()
    }

    /// Links touching keypoint `k`.
    pub fn links_of(&self, k: usize) -> Vec<usize> {
        (0..self.links.len()).filter(|l| self.links[*l].contains(&k)).collect()
    }

    /// The link whose frame keypoint `k` uses, and whether `k` is that
    /// link's reference end. A keypoint takes the first link it is the
    /// reference of, else the first link containing it.
    pub fn frame_owner(&self, k: usize) -> Option<(usize, bool)> {
        if let Some(l) = self.frame_rules.iter().position(|r| r.reference == k) {
            return Some((l, true));
        }
        self.links.iter().position(|l| l.contains(&k)).map(|l| (l, false))
    }

    /// Same topology up to keypoint naming and class, so a model for one can
    /// be applied to the other.
    pub fn is_compatible(&self, other: &SkeletonSpec) -> bool {
        self.keypoints.len() == other.keypoints.len()
            && self.links == other.links
            && self.frame_rules == other.frame_rules
    }
}
