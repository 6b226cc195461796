//! Detection providers.
//!
//! A backend turns one image into a [`DetectionBundle`]: faces from two
//! detectors (with per-face embedding, age and gender), single-word text
//! detections, a collage classifier score and an image-level embedding.
//! The rest of the pipeline only ever sees bundles.
//!
//! The built-in [`FixtureBackend`] reads bundles from JSON sidecar files
//! named `<image file name>.bundle.json` next to each image. Sidecar schema,
//! version 1:
//!
//! | field | type | notes |
//! |---|---|---|
//! | `schema_version` | integer | must be `1` |
//! | `image_id` | string | optional; must match the manifest post id when given |
//! | `width`, `height` | integer | image size in pixels; all boxes must fit inside |
//! | `collage_score` | number in `[0, 1]` | optional |
//! | `embedding_model` | string | optional; name of the face embedding model |
//! | `image_embedding` | array of numbers | optional; any length |
//! | `primary_faces`, `secondary_faces` | array of face | optional, default empty |
//! | `word_tokens` | array of word | optional, default empty |
//!
//! A face is `{"box": {"x","y","w","h"}, "embedding": [128 numbers]?,
//! "age_estimates": [0 to 2 numbers]?, "gender": "male" | "female"?}`.
//! A word is `{"text": "single-word", "box": {...}, "confidence": number?}`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{DetectedFace, Detector};
use crate::model::{BoundingBox, EMBEDDING_DIM};
use crate::username::WordToken;

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;
pub const SIDECAR_SUFFIX: &str = ".bundle.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionBundle {
    pub schema_version: u32,
    #[serde(default)]
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub collage_score: Option<f64>,
    #[serde(default)]
    pub embedding_model: Option<String>,
    #[serde(default)]
    pub image_embedding: Option<Vec<f64>>,
    #[serde(default)]
    pub primary_faces: Vec<DetectedFace>,
    #[serde(default)]
    pub secondary_faces: Vec<DetectedFace>,
    #[serde(default)]
    pub word_tokens: Vec<WordToken>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Faces,
    Embeddings,
    Age,
    Gender,
    Words,
    CollageScore,
}

impl Capability {
    pub const ALL: [Capability; 6] = [
        Capability::Faces,
        Capability::Embeddings,
        Capability::Age,
        Capability::Gender,
        Capability::Words,
        Capability::CollageScore,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub capabilities: BTreeSet<Capability>,
    /// False when the backend cannot take concurrent calls; the pipeline
    /// then analyses images one at a time.
    pub concurrent: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRef {
    pub image_id: String,
    pub path: PathBuf,
}

pub trait Backend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    fn analyze_collage(&self, image: &ImageRef) -> Result<DetectionBundle>;
}

impl DetectionBundle {
    pub fn empty(image_id: impl Into<String>, width: u32, height: u32) -> Self {
        DetectionBundle {
            schema_version: BUNDLE_SCHEMA_VERSION,
            image_id: image_id.into(),
            width,
            height,
            collage_score: None,
            embedding_model: None,
            image_embedding: None,
            primary_faces: Vec::new(),
            secondary_faces: Vec::new(),
            word_tokens: Vec::new(),
        }
    }

    /// Parses and validates a sidecar document. Errors name the offending
    /// field by its JSON path.
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut bundle: DetectionBundle = serde_path_to_error::deserialize(de).map_err(|e| Error::BundleParse {
            path: origin.to_path_buf(),
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        for f in &mut bundle.primary_faces {
            f.detector = Detector::PrimaryDetector;
        }
        for f in &mut bundle.secondary_faces {
            f.detector = Detector::SecondaryDetector;
        }
        bundle.validate().map_err(|(field, message)| Error::BundleParse {
            path: origin.to_path_buf(),
            field,
            message,
        })?;
        Ok(bundle)
    }

    fn validate(&self) -> std::result::Result<(), (String, String)> {
        let fail = |field: String, message: &str| Err((field, message.to_owned()));
        if self.schema_version != BUNDLE_SCHEMA_VERSION {
            return fail("schema_version".into(), "unsupported schema version");
        }
        if self.width == 0 || self.height == 0 {
            return fail("width".into(), "image dimensions must be positive");
        }
        if let Some(s) = self.collage_score {
            if !(0.0..=1.0).contains(&s) {
                return fail("collage_score".into(), "score must lie in [0, 1]");
            }
        }
        if let Some(e) = &self.image_embedding {
            if e.iter().any(|v| !v.is_finite()) {
                return fail("image_embedding".into(), "non-finite component");
            }
        }
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        let check_box = |field: String, b: &BoundingBox| {
            if !b.is_valid() {
                return fail(field, "box needs x, y >= 0 and w, h > 0");
            }
            if !b.fits_within(w, h) {
                return fail(field, "box extends past the image");
            }
            Ok(())
        };
        for (list, faces) in [
            ("primary_faces", &self.primary_faces),
            ("secondary_faces", &self.secondary_faces),
        ] {
            for (i, f) in faces.iter().enumerate() {
                check_box(format!("{list}[{i}].box"), &f.bbox)?;
                if let Some(e) = &f.embedding {
                    if e.len() != EMBEDDING_DIM {
                        return fail(format!("{list}[{i}].embedding"), "face embeddings have 128 components");
                    }
                    if e.iter().any(|v| !v.is_finite()) {
                        return fail(format!("{list}[{i}].embedding"), "non-finite component");
                    }
                }
                if f.age_estimates.len() > 2 {
                    return fail(
                        format!("{list}[{i}].age_estimates"),
                        "at most two age estimates per face",
                    );
                }
                if f.age_estimates.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                    return fail(format!("{list}[{i}].age_estimates"), "ages must be non-negative");
                }
            }
        }
        for (i, t) in self.word_tokens.iter().enumerate() {
            if !t.is_single_word() {
                return fail(format!("word_tokens[{i}].text"), "a token is one non-empty word");
            }
            check_box(format!("word_tokens[{i}].box"), &t.bbox)?;
            if let Some(c) = t.confidence {
                if !(0.0..=1.0).contains(&c) {
                    return fail(format!("word_tokens[{i}].confidence"), "confidence must lie in [0, 1]");
                }
            }
        }
        Ok(())
    }

    /// Clears everything the backend did not declare it can produce.
    pub fn restrict_to(&mut self, caps: &BTreeSet<Capability>) {
        if !caps.contains(&Capability::CollageScore) {
            self.collage_score = None;
        }
        if !caps.contains(&Capability::Words) {
            self.word_tokens.clear();
        }
        if !caps.contains(&Capability::Faces) {
            self.primary_faces.clear();
            self.secondary_faces.clear();
        }
        if !caps.contains(&Capability::Embeddings) {
            self.image_embedding = None;
            self.embedding_model = None;
        }
        for f in self.primary_faces.iter_mut().chain(self.secondary_faces.iter_mut()) {
            if !caps.contains(&Capability::Embeddings) {
                f.embedding = None;
            }
            if !caps.contains(&Capability::Age) {
                f.age_estimates.clear();
            }
            if !caps.contains(&Capability::Gender) {
                f.gender_estimate = None;
            }
        }
    }

    pub fn face_count(&self) -> usize {
        self.primary_faces.len() + self.secondary_faces.len()
    }
}

pub fn sidecar_path(image: &Path) -> PathBuf {
    let mut name = image.as_os_str().to_owned();
    name.push(SIDECAR_SUFFIX);
    PathBuf::from(name)
}

/// Serves bundles from sidecar JSON files.
#[derive(Debug, Clone)]
pub struct FixtureBackend {
    descriptor: BackendDescriptor,
}

impl FixtureBackend {
    pub const NAME: &'static str = "fixture";

    pub fn new() -> Self {
        Self::with_capabilities(Capability::ALL.into_iter().collect())
    }

    pub fn with_capabilities(capabilities: BTreeSet<Capability>) -> Self {
        FixtureBackend {
            descriptor: BackendDescriptor {
                name: Self::NAME.into(),
                capabilities,
                concurrent: true,
            },
        }
    }
}

impl Default for FixtureBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl Backend for FixtureBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn analyze_collage(&self, image: &ImageRef) -> Result<DetectionBundle> {
        std::fs::metadata(&image.path).map_err(|e| Error::ImageDecode {
            path: image.path.clone(),
            message: e.to_string(),
        })?;
        let sidecar = sidecar_path(&image.path);
        let text = match std::fs::read_to_string(&sidecar) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingSidecar(sidecar)),
            Err(e) => return Err(Error::read(sidecar, e)),
        };
        let mut bundle = DetectionBundle::from_json(&text, &sidecar)?;
        if bundle.image_id.is_empty() {
            bundle.image_id = image.image_id.clone();
        } else if bundle.image_id != image.image_id {
            return Err(Error::BundleParse {
                path: sidecar,
                field: "image_id".into(),
                message: format!("sidecar is for `{}`, expected `{}`", bundle.image_id, image.image_id),
            });
        }
        bundle.restrict_to(&self.descriptor.capabilities);
        Ok(bundle)
    }
}

/// Looks a backend up by its configured name.
pub fn backend_by_name(name: &str) -> Result<Box<dyn Backend>> {
    match name {
        FixtureBackend::NAME => Ok(Box::new(FixtureBackend::new())),
        other => Err(Error::Config(format!("unknown backend `{other}` (available: fixture)"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollageVerdict {
    Collage,
    NotCollage,
    /// No classifier score; the image is let through.
    Unscored,
}

impl CollageVerdict {
    pub fn is_collage(self) -> bool {
        !matches!(self, CollageVerdict::NotCollage)
    }
}

/// Collage filter: passes when `collage_score >= threshold`, and passes with
/// a warning when the bundle has no score.
pub fn classify_collage(bundle: &DetectionBundle, threshold: f64) -> CollageVerdict {
    match bundle.collage_score {
        Some(s) if s >= threshold => CollageVerdict::Collage,
        Some(_) => CollageVerdict::NotCollage,
        None => {
            log::warn!("{}: no collage score, keeping image", bundle.image_id);
            CollageVerdict::Unscored
        }
    }
}
