//! Merging the output of two face detectors, and per-face age and gender
//! aggregation.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{intersection_area, AgeCategory, BoundingBox, Gender};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    #[default]
    PrimaryDetector,
    SecondaryDetector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedFace {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    /// Set from the bundle list the face came from, not stored in sidecars.
    #[serde(default, skip_serializing)]
    pub detector: Detector,
    #[serde(default)]
    pub embedding: Option<Vec<f64>>,
    #[serde(default)]
    pub age_estimates: Vec<f64>,
    #[serde(default, rename = "gender")]
    pub gender_estimate: Option<Gender>,
}

impl DetectedFace {
    pub fn new(bbox: BoundingBox, detector: Detector) -> Self {
        DetectedFace {
            bbox,
            detector,
            embedding: None,
            age_estimates: Vec::new(),
            gender_estimate: None,
        }
    }
}

/// One face after fusion. Age and gender evidence from every contributing
/// detection is pooled; the embedding comes from the primary detection when
/// it has one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedFace {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub contributing: BTreeSet<Detector>,
    pub age_estimates: Vec<f64>,
    pub gender_estimates: Vec<Gender>,
    pub embedding: Option<Vec<f64>>,
}

impl FusedFace {
    fn from_detection(face: &DetectedFace) -> Self {
        FusedFace {
            bbox: face.bbox,
            contributing: BTreeSet::from([face.detector]),
            age_estimates: face.age_estimates.clone(),
            gender_estimates: face.gender_estimate.into_iter().collect(),
            embedding: face.embedding.clone(),
        }
    }

    fn absorb(&mut self, face: &DetectedFace) {
        self.contributing.insert(face.detector);
        self.age_estimates.extend_from_slice(&face.age_estimates);
        self.gender_estimates.extend(face.gender_estimate);
        if self.embedding.is_none() {
            self.embedding = face.embedding.clone();
        }
    }

    fn canonicalize(&mut self) {
        self.age_estimates.sort_by(f64::total_cmp);
        self.gender_estimates.sort();
    }

    pub fn age(&self) -> Result<Option<f64>> {
        aggregate_age(&self.age_estimates)
    }

    pub fn gender(&self) -> Option<Gender> {
        resolve_gender(&self.gender_estimates)
    }
}

/// Total order on detections, used to make fusion independent of the order
/// in which the secondary detector reported its faces.
fn cmp_detection(a: &DetectedFace, b: &DetectedFace) -> Ordering {
    fn cmp_f64s(a: &[f64], b: &[f64]) -> Ordering {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or_else(|| a.len().cmp(&b.len()))
    }
    a.bbox
        .cmp_position(&b.bbox)
        .then_with(|| cmp_f64s(&a.age_estimates, &b.age_estimates))
        .then_with(|| a.gender_estimate.cmp(&b.gender_estimate))
        .then_with(|| match (&a.embedding, &b.embedding) {
            (Some(x), Some(y)) => cmp_f64s(x, y),
            (x, y) => x.is_some().cmp(&y.is_some()),
        })
}

/// Index of the primary face a secondary face merges into: the one with the
/// largest positive intersection area, lowest index on ties.
fn best_primary(primary: &[DetectedFace], face: &DetectedFace) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in primary.iter().enumerate() {
        let area = intersection_area(&p.bbox, &face.bbox);
        if area > 0.0 && best.is_none_or(|(_, a)| area > a) {
            best = Some((i, area));
        }
    }
    best.map(|(i, _)| i)
}

/// Fuses two detectors' faces for one image.
///
/// Every primary face is kept with its box unchanged. A secondary face that
/// intersects a primary face is merged into the primary face it overlaps
/// most; a secondary face that intersects none is kept as its own face.
/// Secondary-only faces follow the primary faces, ordered by position.
pub fn fuse_face_detections(primary: &[DetectedFace], secondary: &[DetectedFace]) -> Vec<FusedFace> {
    let mut sorted_secondary: Vec<&DetectedFace> = secondary.iter().collect();
    sorted_secondary.sort_by(|a, b| cmp_detection(a, b));

    let mut fused: Vec<FusedFace> = primary.iter().map(FusedFace::from_detection).collect();
    let mut unmatched = Vec::new();
    for face in sorted_secondary {
        match best_primary(primary, face) {
            Some(i) => fused[i].absorb(face),
            None => unmatched.push(FusedFace::from_detection(face)),
        }
    }
    fused.extend(unmatched);
    for f in &mut fused {
        f.canonicalize();
    }
    fused
}

/// Mean of the available age estimates; `None` when there are none.
pub fn aggregate_age(estimates: &[f64]) -> Result<Option<f64>> {
    if let Some(&bad) = estimates.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
        return Err(Error::InvalidAge(bad));
    }
    if estimates.is_empty() {
        return Ok(None);
    }
    Ok(Some(estimates.iter().sum::<f64>() / estimates.len() as f64))
}

/// Piecewise age categories: `x <= 12` child, `12 < x <= 17` adolescent,
/// `17 < x < 65` adult, older adult otherwise.
pub fn bin_age(x: f64) -> Result<AgeCategory> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidAge(x));
    }
    Ok(if x <= 12.0 {
        AgeCategory::Child
    } else if x <= 17.0 {
        AgeCategory::Adolescent
    } else if x < 65.0 {
        AgeCategory::Adult
    } else {
        AgeCategory::OlderAdult
    })
}

/// The agreed gender, or `None` when there is no estimate or the sources
/// disagree.
pub fn resolve_gender(estimates: &[Gender]) -> Option<Gender> {
    let first = *estimates.first()?;
    estimates.iter().all(|g| *g == first).then_some(first)
}
