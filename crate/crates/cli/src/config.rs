//! Settings for `run`: TOML config file merged under command-line flags.
//!
//! File keys match the long flag names. Stage switches such as `--no-dedup`
//! become booleans (`dedup = false`), and `--link-generic-usernames` becomes
//! `exclude-generic-usernames = false`.
//!
//! ```toml
//! manifest = "posts.jsonl"
//! output-dir = "out"
//! hamming-threshold = 1.2
//! face-link-threshold = 0.3
//! dedup = false
//! ```
//!
//! Relative paths in the file resolve against the file's directory.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use collage_core::dedup::EmbeddingCombine;
use collage_core::PipelineConfig;
use serde::Deserialize;

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Settings {
    /// JSONL post manifest
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory for report.json, edges.csv and the other artifacts
    #[arg(long, short = 'o')]
    pub output_dir: Option<PathBuf>,
    /// Detection backend [default: fixture]
    #[arg(long)]
    pub backend: Option<String>,
    /// Maximum dhash Hamming distance for a duplicate [default: 1.2]
    #[arg(long)]
    pub hamming_threshold: Option<f64>,
    /// Maximum cosine distance between image embeddings [default: 0.0035]
    #[arg(long)]
    pub cosine_threshold: Option<f64>,
    /// Maximum euclidean distance between image embeddings [default: 25]
    #[arg(long)]
    pub euclidean_threshold: Option<f64>,
    /// How the two embedding thresholds combine [default: both-required]
    #[arg(long, value_parser = parse_combine)]
    #[serde(default, deserialize_with = "combine_from_str")]
    pub embedding_combine: Option<EmbeddingCombine>,
    /// Maximum gap in pixels between words of one username [default: 10]
    #[arg(long)]
    pub word_merge_threshold: Option<f64>,
    /// Maximum face-embedding distance for the same person [default: 0.3]
    #[arg(long)]
    pub face_link_threshold: Option<f64>,
    /// Minimum classifier score for a collage [default: 0.5]
    #[arg(long)]
    pub collage_score_threshold: Option<f64>,
    /// UI words to drop, one per line (replaces the built-in list)
    #[arg(long)]
    pub ui_words: Option<PathBuf>,
    /// Dictionary words to drop, one per line
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    /// Device-default names, one per line (replaces the built-in list)
    #[arg(long)]
    pub generic_names: Option<PathBuf>,
    /// Worker threads for image analysis [default: one per core]
    #[arg(long)]
    pub workers: Option<usize>,

    // Stage toggles. On the command line they are the `--no-*` switches of
    // `StageFlags`; in the file they are booleans.
    #[arg(skip)]
    #[serde(default)]
    pub classify: Option<bool>,
    #[arg(skip)]
    #[serde(default)]
    pub dedup: Option<bool>,
    #[arg(skip)]
    #[serde(default)]
    pub username_linkage: Option<bool>,
    #[arg(skip)]
    #[serde(default)]
    pub face_linkage: Option<bool>,
    #[arg(skip)]
    #[serde(default)]
    pub exclude_generic_usernames: Option<bool>,
}

#[derive(Debug, Default, Clone, Copy, Args)]
pub struct StageFlags {
    /// Keep every image regardless of classifier score
    #[arg(long)]
    pub no_classify: bool,
    /// Skip near-duplicate removal
    #[arg(long)]
    pub no_dedup: bool,
    /// Do not link participants by username
    #[arg(long)]
    pub no_username_linkage: bool,
    /// Do not link participants by face embedding
    #[arg(long)]
    pub no_face_linkage: bool,
    /// Let generic names such as "iPhone" link participants
    #[arg(long)]
    pub link_generic_usernames: bool,
}

impl StageFlags {
    /// Writes the switches that were given into `s`.
    pub fn apply(self, s: &mut Settings) {
        let off = |given: bool| given.then_some(false);
        s.classify = off(self.no_classify);
        s.dedup = off(self.no_dedup);
        s.username_linkage = off(self.no_username_linkage);
        s.face_linkage = off(self.no_face_linkage);
        s.exclude_generic_usernames = off(self.link_generic_usernames);
    }
}

fn parse_combine(s: &str) -> Result<EmbeddingCombine, String> {
    match s.replace('_', "-").as_str() {
        "both-required" => Ok(EmbeddingCombine::BothRequired),
        "either-suffices" => Ok(EmbeddingCombine::EitherSuffices),
        _ => Err(format!("expected both-required or either-suffices, got `{s}`")),
    }
}

fn combine_from_str<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<EmbeddingCombine>, D::Error> {
    let s = String::deserialize(d)?;
    parse_combine(&s).map(Some).map_err(serde::de::Error::custom)
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($field:ident),*) => {
        $(if $src.$field.is_some() { $dst.$field = $src.$field.clone(); })*
    };
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut s: Settings = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut s.manifest,
            &mut s.output_dir,
            &mut s.ui_words,
            &mut s.dictionary,
            &mut s.generic_names,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(s)
    }

    /// Fields set in `flags` win over fields set here.
    pub fn overlay(mut self, flags: &Settings) -> Self {
        overlay!(
            self,
            flags,
            manifest,
            output_dir,
            backend,
            hamming_threshold,
            cosine_threshold,
            euclidean_threshold,
            embedding_combine,
            word_merge_threshold,
            face_link_threshold,
            collage_score_threshold,
            ui_words,
            dictionary,
            generic_names,
            workers,
            classify,
            dedup,
            username_linkage,
            face_linkage,
            exclude_generic_usernames
        );
        self
    }

    /// `None` when the manifest or output directory is missing.
    pub fn into_pipeline_config(self) -> Option<PipelineConfig> {
        let mut c = PipelineConfig::new(self.manifest?, self.output_dir?);
        if let Some(v) = self.backend {
            c.backend = v;
        }
        c.dedup.hamming_threshold = self.hamming_threshold.unwrap_or(c.dedup.hamming_threshold);
        c.dedup.cosine_threshold = self.cosine_threshold.unwrap_or(c.dedup.cosine_threshold);
        c.dedup.euclidean_threshold = self.euclidean_threshold.unwrap_or(c.dedup.euclidean_threshold);
        c.dedup.embedding_combine = self.embedding_combine.unwrap_or(c.dedup.embedding_combine);
        c.word_merge_threshold = self.word_merge_threshold.unwrap_or(c.word_merge_threshold);
        c.face_link_threshold = self.face_link_threshold.unwrap_or(c.face_link_threshold);
        c.collage_score_threshold = self.collage_score_threshold.unwrap_or(c.collage_score_threshold);
        c.ui_words = self.ui_words;
        c.dictionary = self.dictionary;
        c.generic_names = self.generic_names;
        c.workers = self.workers;
        c.stages.classify = self.classify.unwrap_or(true);
        c.stages.dedup = self.dedup.unwrap_or(true);
        c.stages.username_linkage = self.username_linkage.unwrap_or(true);
        c.stages.face_linkage = self.face_linkage.unwrap_or(true);
        c.exclude_generic_usernames = self.exclude_generic_usernames.unwrap_or(true);
        Some(c)
    }
}
