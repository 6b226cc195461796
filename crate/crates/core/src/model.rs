//! Domain types shared by every stage, plus the small amount of exact 2-D
//! geometry the fusion and username stages need.
//!
//! Coordinates are real-valued pixels in the original image. A box is stored
//! as its left-top corner plus width and height.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

/// Length of a face embedding vector.
pub const EMBEDDING_DIM: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Axis-aligned box: left `x`, top `y`, width `w`, height `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    /// Builds a box, returning `None` unless `w > 0`, `h > 0`, `x >= 0` and
    /// `y >= 0` (all finite).
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Option<Self> {
        let b = BoundingBox { x, y, w, h };
        b.is_valid().then_some(b)
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite())
            && self.w > 0.0
            && self.h > 0.0
            && self.x >= 0.0
            && self.y >= 0.0
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn top_left(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn top_right(&self) -> Point {
        Point::new(self.right(), self.y)
    }

    pub fn center(&self) -> Point {
        Point::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        BoundingBox {
            x,
            y,
            w: self.right().max(other.right()) - x,
            h: self.bottom().max(other.bottom()) - y,
        }
    }

    /// True when the overlap has positive area. Boxes that only share an
    /// edge or a corner do not intersect.
    pub fn intersects(&self, other: &BoundingBox) -> bool {
        intersection_area(self, other) > 0.0
    }

    pub fn fits_within(&self, width: f64, height: f64) -> bool {
        self.right() <= width && self.bottom() <= height
    }

    /// Total order used wherever a deterministic tie-break between boxes is
    /// needed: left, then top, then width, then height.
    pub fn cmp_position(&self, other: &BoundingBox) -> std::cmp::Ordering {
        self.x
            .total_cmp(&other.x)
            .then(self.y.total_cmp(&other.y))
            .then(self.w.total_cmp(&other.w))
            .then(self.h.total_cmp(&other.h))
    }
}

/// Area of the overlap of two boxes; zero when they are disjoint or touch.
pub fn intersection_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    axis_overlap(a.x, a.w, b.x, b.w) * axis_overlap(a.y, a.h, b.y, b.h)
}

// When one interval contains the other the overlap is the inner length,
// returned as stored rather than recomputed as `(x + w) - x`.
fn axis_overlap(a0: f64, a_len: f64, b0: f64, b_len: f64) -> f64 {
    if a0 == b0 {
        return a_len.min(b_len);
    }
    let ((s0, s_len), (o0, o_len)) = if a0 > b0 {
        ((a0, a_len), (b0, b_len))
    } else {
        ((b0, b_len), (a0, a_len))
    };
    if s0 + s_len <= o0 + o_len {
        s_len
    } else {
        (o0 + o_len - s0).max(0.0)
    }
}

pub fn point_distance(p: Point, q: Point) -> f64 {
    (p.x - q.x).hypot(p.y - q.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Twitter,
    Instagram,
    Other,
}

/// One ingested social-media post and the image it carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub post_id: String,
    pub source: Source,
    pub image_path: PathBuf,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollageImage {
    pub image_id: String,
    pub post: PostRecord,
    pub width: u32,
    pub height: u32,
    pub dhash: crate::dedup::Hash64,
    pub classifier_score: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeCategory {
    Child,
    Adolescent,
    Adult,
    OlderAdult,
}

impl AgeCategory {
    pub const ALL: [AgeCategory; 4] = [
        AgeCategory::Child,
        AgeCategory::Adolescent,
        AgeCategory::Adult,
        AgeCategory::OlderAdult,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AgeCategory::Child => "child",
            AgeCategory::Adolescent => "adolescent",
            AgeCategory::Adult => "adult",
            AgeCategory::OlderAdult => "older_adult",
        }
    }
}

impl fmt::Display for AgeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn as_str(&self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }
}

/// A fused face inside one meeting (collage), with everything extracted
/// about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub participant_id: String,
    pub meeting_id: String,
    pub face_box: BoundingBox,
    pub embedding: Option<Vec<f64>>,
    pub age_years: Option<f64>,
    pub age_category: Option<AgeCategory>,
    pub gender: Option<Gender>,
    pub username: Option<String>,
    #[serde(default)]
    pub username_generic: bool,
}

impl Participant {
    /// A participant with only a face box; the remaining fields are filled
    /// in by the later stages.
    pub fn bare(participant_id: impl Into<String>, meeting_id: impl Into<String>, face_box: BoundingBox) -> Self {
        Participant {
            participant_id: participant_id.into(),
            meeting_id: meeting_id.into(),
            face_box,
            embedding: None,
            age_years: None,
            age_category: None,
            gender: None,
            username: None,
            username_generic: false,
        }
    }
}
