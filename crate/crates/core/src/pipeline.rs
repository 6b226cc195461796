//! End-to-end run: manifest ingestion, backend analysis, collage filter,
//! dedup, face fusion, username reconstruction, identity linkage, graph
//! construction and the statistics report.
//!
//! Per-image work (decoding, hashing, analysis, fusion, usernames) runs on a
//! bounded worker pool. Dedup, linkage, graph and report are sequential
//! stages over the collected results. Every stage writes its artifact to the
//! output directory as soon as it finishes.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::{classify_collage, Backend, CollageVerdict, DetectionBundle, ImageRef};
use crate::dedup::{compute_dhash, dedup, DedupCriteria, DedupItem, DedupOutcome, Hash64, LumaImage, RemovalReason};
use crate::error::{Error, Result};
use crate::fusion::{bin_age, fuse_face_detections};
use crate::graph::{build_social_graph, export_edge_list, meetings_from_clusters, SocialGraphData};
use crate::linkage::{cluster_from_evidence, pairwise_face_matches, IdentityCluster, LinkageOptions, MatchPair};
use crate::manifest::ingest_manifest;
use crate::model::{CollageImage, Participant, PostRecord};
use crate::report::{emit_report, ReportInputs, StageCounts, StatisticsReport, UsernameObservation};
use crate::username::{
    assign_usernames, filter_tokens, merge_word_tokens, normalize_username, WordSet, DEFAULT_MERGE_THRESHOLD,
};

pub const REPORT_FILE: &str = "report.json";
pub const EDGES_FILE: &str = "edges.csv";
pub const DEDUP_FILE: &str = "dedup.json";
pub const CLUSTERS_FILE: &str = "clusters.json";
pub const PARTICIPANTS_FILE: &str = "participants.json";
pub const USERNAMES_FILE: &str = "usernames.json";
pub const SKIPPED_FILE: &str = "skipped.json";

pub const DEFAULT_COLLAGE_SCORE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stages {
    pub classify: bool,
    pub dedup: bool,
    pub username_linkage: bool,
    pub face_linkage: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages {
            classify: true,
            dedup: true,
            username_linkage: true,
            face_linkage: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub manifest_path: PathBuf,
    pub backend: String,
    pub dedup: DedupCriteria,
    pub word_merge_threshold: f64,
    pub face_link_threshold: f64,
    pub collage_score_threshold: f64,
    pub stages: Stages,
    pub output_dir: PathBuf,
    pub ui_words: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub generic_names: Option<PathBuf>,
    pub exclude_generic_usernames: bool,
    /// Worker threads for per-image stages; `None` uses all cores.
    pub workers: Option<usize>,
}

impl PipelineConfig {
    pub fn new(manifest_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            manifest_path: manifest_path.into(),
            backend: crate::backends::FixtureBackend::NAME.into(),
            dedup: DedupCriteria::default(),
            word_merge_threshold: DEFAULT_MERGE_THRESHOLD,
            face_link_threshold: crate::linkage::DEFAULT_FACE_THRESHOLD,
            collage_score_threshold: DEFAULT_COLLAGE_SCORE_THRESHOLD,
            stages: Stages::default(),
            output_dir: output_dir.into(),
            ui_words: None,
            dictionary: None,
            generic_names: None,
            exclude_generic_usernames: true,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dedup.validate()?;
        for (name, v) in [
            ("word_merge_threshold", self.word_merge_threshold),
            ("face_link_threshold", self.face_link_threshold),
            ("collage_score_threshold", self.collage_score_threshold),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        if !self.stages.username_linkage && !self.stages.face_linkage {
            return Err(Error::Config(
                "at least one of username or face linkage must be enabled".into(),
            ));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    fn linkage(&self) -> LinkageOptions {
        LinkageOptions {
            face_threshold: self.face_link_threshold,
            use_username: self.stages.username_linkage,
            use_face: self.stages.face_linkage,
            exclude_generic: self.exclude_generic_usernames,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedImage {
    pub image_id: String,
    pub stage: String,
    pub error: String,
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: StatisticsReport,
    pub graph: SocialGraphData,
    pub images: Vec<CollageImage>,
    pub dedup: DedupOutcome,
    pub participants: Vec<Participant>,
    pub usernames: Vec<UsernameObservation>,
    pub clusters: Vec<IdentityCluster>,
    pub face_matches: Vec<MatchPair>,
    pub skipped: Vec<SkippedImage>,
}

struct Analyzed {
    image: CollageImage,
    bundle: DetectionBundle,
}

struct Lexicon {
    ui_words: WordSet,
    dictionary: Option<WordSet>,
    generic_names: WordSet,
}

impl Lexicon {
    fn load(config: &PipelineConfig) -> Result<Self> {
        Ok(Lexicon {
            ui_words: match &config.ui_words {
                Some(p) => WordSet::load(p)?,
                None => WordSet::default_ui_words(),
            },
            dictionary: config.dictionary.as_deref().map(WordSet::load).transpose()?,
            generic_names: match &config.generic_names {
                Some(p) => WordSet::load(p)?,
                None => WordSet::default_generic_names(),
            },
        })
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).expect("artifacts serialize to JSON");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::write(path, e))
}

fn analyze_one(post: &PostRecord, backend: &dyn Backend) -> std::result::Result<Analyzed, SkippedImage> {
    let skip = |stage: &str, e: Error| SkippedImage {
        image_id: post.post_id.clone(),
        stage: stage.into(),
        error: e.to_string(),
    };
    let luma = LumaImage::open(&post.image_path).map_err(|e| skip("decode", e))?;
    let dhash = compute_dhash(&luma);
    let bundle = backend
        .analyze_collage(&ImageRef {
            image_id: post.post_id.clone(),
            path: post.image_path.clone(),
        })
        .map_err(|e| skip("analyze", e))?;
    let (w, h) = (luma.width() as u32, luma.height() as u32);
    if (bundle.width, bundle.height) != (w, h) {
        return Err(skip(
            "analyze",
            Error::BundleParse {
                path: crate::backends::sidecar_path(&post.image_path),
                field: "width".into(),
                message: format!("bundle says {}x{}, image is {w}x{h}", bundle.width, bundle.height),
            },
        ));
    }
    Ok(Analyzed {
        image: CollageImage {
            image_id: post.post_id.clone(),
            post: post.clone(),
            width: w,
            height: h,
            dhash: Hash64(dhash.0),
            classifier_score: bundle.collage_score,
        },
        bundle,
    })
}

/// Fusion and username reconstruction for one kept collage.
fn extract_participants(
    a: &Analyzed,
    lexicon: &Lexicon,
    merge_threshold: f64,
) -> Result<(Vec<Participant>, Vec<UsernameObservation>)> {
    let meeting = &a.image.image_id;
    let faces = fuse_face_detections(&a.bundle.primary_faces, &a.bundle.secondary_faces);

    let tokens = filter_tokens(&a.bundle.word_tokens, &lexicon.ui_words, lexicon.dictionary.as_ref());
    let mut candidates = merge_word_tokens(&tokens, merge_threshold);
    let mut normalized = Vec::with_capacity(candidates.len());
    for c in &mut candidates {
        let (text, generic) = normalize_username(&c.text, &lexicon.generic_names);
        c.generic = generic;
        normalized.push(text);
    }
    let boxes: Vec<_> = faces.iter().map(|f| f.bbox).collect();
    let assignment = assign_usernames(&boxes, &candidates);

    let mut participants = Vec::with_capacity(faces.len());
    let mut owner = vec![None; candidates.len()];
    for (i, (face, name)) in faces.iter().zip(&assignment).enumerate() {
        let id = format!("{meeting}/f{i:03}");
        let age = face.age()?;
        let mut p = Participant::bare(id.clone(), meeting.clone(), face.bbox);
        p.embedding = face.embedding.clone();
        p.age_years = age;
        p.age_category = age.map(bin_age).transpose()?;
        p.gender = face.gender();
        if let Some(n) = *name {
            p.username = Some(normalized[n].clone());
            p.username_generic = candidates[n].generic;
            owner[n] = Some(id);
        }
        participants.push(p);
    }
    let observations = candidates
        .iter()
        .zip(normalized)
        .zip(owner)
        .filter(|((_, text), _)| !text.is_empty())
        .map(|((c, text), participant_id)| UsernameObservation {
            meeting_id: meeting.clone(),
            word_count: text.split(' ').count(),
            username: text,
            generic: c.generic,
            participant_id,
        })
        .collect();
    Ok((participants, observations))
}

fn embedding_models(kept: &[&Analyzed]) -> Result<()> {
    let models: BTreeSet<String> = kept
        .iter()
        .filter(|a| {
            a.bundle
                .primary_faces
                .iter()
                .chain(&a.bundle.secondary_faces)
                .any(|f| f.embedding.is_some())
        })
        .map(|a| {
            a.bundle
                .embedding_model
                .clone()
                .unwrap_or_else(|| "<undeclared>".into())
        })
        .collect();
    if models.len() > 1 {
        return Err(Error::MixedEmbeddingModels(models.into_iter().collect()));
    }
    Ok(())
}

/// Runs every stage with the backend named in the config.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineRun> {
    let backend = crate::backends::backend_by_name(&config.backend)?;
    run_pipeline_with(config, backend.as_ref())
}

pub fn run_pipeline_with(config: &PipelineConfig, backend: &dyn Backend) -> Result<PipelineRun> {
    config.validate()?;
    let lexicon = Lexicon::load(config)?;
    let out = &config.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::write(out, e))?;

    let posts = ingest_manifest(&config.manifest_path)?;
    let mut counts = StageCounts {
        images_ingested: posts.len(),
        ..Default::default()
    };

    let threads = if backend.descriptor().concurrent {
        config.workers.unwrap_or(0)
    } else {
        1
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    // per-image: decode, hash, analyze
    let results: Vec<std::result::Result<Analyzed, SkippedImage>> =
        pool.install(|| posts.par_iter().map(|p| analyze_one(p, backend)).collect());
    let mut skipped = Vec::new();
    let mut analyzed = Vec::new();
    for r in results {
        match r {
            Ok(a) => analyzed.push(a),
            Err(s) => {
                log::warn!("skipping {}: {} ({})", s.image_id, s.error, s.stage);
                skipped.push(s);
            }
        }
    }
    counts.images_skipped = skipped.len();
    write_json(out, SKIPPED_FILE, &skipped)?;

    // collage filter
    let mut collages: Vec<Analyzed> = Vec::with_capacity(analyzed.len());
    for a in analyzed {
        let verdict = if config.stages.classify {
            classify_collage(&a.bundle, config.collage_score_threshold)
        } else {
            CollageVerdict::Collage
        };
        match verdict {
            CollageVerdict::NotCollage => counts.images_not_collage += 1,
            CollageVerdict::Unscored => {
                counts.images_unscored += 1;
                collages.push(a);
            }
            CollageVerdict::Collage => collages.push(a),
        }
    }
    collages.sort_by(|a, b| a.image.image_id.cmp(&b.image.image_id));
    counts.images_classified_collage = collages.len();

    // dedup
    let outcome = if config.stages.dedup {
        let items: Vec<DedupItem> = collages
            .iter()
            .map(|a| DedupItem {
                image_id: a.image.image_id.clone(),
                dhash: a.image.dhash,
                embedding: a.bundle.image_embedding.clone(),
            })
            .collect();
        dedup(&items, &config.dedup)
    } else {
        DedupOutcome {
            kept: collages.iter().map(|a| a.image.image_id.clone()).collect(),
            removed: Vec::new(),
        }
    };
    counts.images_removed_hash = outcome
        .removed
        .iter()
        .filter(|r| r.reason == RemovalReason::Hash)
        .count();
    counts.images_removed_embedding = outcome.removed.len() - counts.images_removed_hash;
    counts.images_kept_after_dedup = outcome.kept.len();
    write_json(out, DEDUP_FILE, &outcome)?;

    let kept_ids: BTreeSet<&str> = outcome.kept.iter().map(String::as_str).collect();
    let kept: Vec<&Analyzed> = collages
        .iter()
        .filter(|a| kept_ids.contains(a.image.image_id.as_str()))
        .collect();

    // per-image: fusion and usernames
    let extracted: Vec<(Vec<Participant>, Vec<UsernameObservation>)> = pool.install(|| {
        kept.par_iter()
            .map(|a| extract_participants(a, &lexicon, config.word_merge_threshold))
            .collect::<Result<_>>()
    })?;
    let mut participants = Vec::new();
    let mut usernames = Vec::new();
    for (p, u) in extracted {
        participants.extend(p);
        usernames.extend(u);
    }
    write_json(out, PARTICIPANTS_FILE, &participants)?;
    write_json(out, USERNAMES_FILE, &usernames)?;

    // linkage
    let opts = config.linkage();
    let face_matches = if opts.use_face {
        embedding_models(&kept)?;
        pool.install(|| pairwise_face_matches(&participants, opts.face_threshold))?
    } else {
        Vec::new()
    };
    let clusters = cluster_from_evidence(&participants, &face_matches, &opts)?;
    let face_clusters = if opts.use_face {
        let face_only = LinkageOptions {
            use_username: false,
            ..opts
        };
        Some(cluster_from_evidence(&participants, &face_matches, &face_only)?)
    } else {
        None
    };
    write_json(out, CLUSTERS_FILE, &clusters)?;

    // graph
    let graph = build_social_graph(&meetings_from_clusters(&clusters));
    export_edge_list(&graph, &out.join(EDGES_FILE))?;

    let report = StatisticsReport::compute(&ReportInputs {
        counts,
        participants: &participants,
        usernames: &usernames,
        clusters: &clusters,
        face_clusters: face_clusters.as_deref(),
        graph: &graph,
    });
    emit_report(&report, &out.join(REPORT_FILE))?;

    Ok(PipelineRun {
        report,
        graph,
        images: collages.into_iter().map(|a| a.image).collect(),
        dedup: outcome,
        participants,
        usernames,
        clusters,
        face_matches,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_carry_published_thresholds() {
        let c = PipelineConfig::new("m.jsonl", "out");
        assert_eq!(c.dedup.hamming_threshold, 1.2);
        assert_eq!(c.word_merge_threshold, 10.0);
        assert_eq!(c.face_link_threshold, 0.3);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn config_validation() {
        let mut c = PipelineConfig::new("m.jsonl", "out");
        c.face_link_threshold = -1.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = PipelineConfig::new("m.jsonl", "out");
        c.stages.username_linkage = false;
        c.stages.face_linkage = false;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn empty_manifest_gives_empty_report() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("m.jsonl");
        std::fs::write(&manifest, "").unwrap();
        let run = run_pipeline(&PipelineConfig::new(&manifest, dir.path().join("out"))).unwrap();
        assert_eq!(run.report.counts.images_ingested, 0);
        assert_eq!(run.report.total_faces, 0);
        assert_eq!(run.graph.node_count(), 0);
        for f in [REPORT_FILE, EDGES_FILE, DEDUP_FILE, CLUSTERS_FILE] {
            assert!(dir.path().join("out").join(f).exists(), "{f}");
        }
    }
}
