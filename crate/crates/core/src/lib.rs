//! Privacy analytics over publicly posted video-conference collage images.
//!
//! The crate turns a manifest of posts, plus per-image detection bundles from
//! a pluggable backend, into a study report:
//!
//! 1. [`dedup`]: drop duplicate and near-duplicate images (difference hash
//!    and image embeddings).
//! 2. [`fusion`]: merge two face detectors' output; average ages, bin them,
//!    resolve gender.
//! 3. [`username`]: filter and merge single-word text detections into
//!    usernames.
//! 4. [`linkage`]: link participants across meetings by username and face
//!    embedding.
//! 5. [`graph`]: build the co-participation graph and its component
//!    statistics.
//! 6. [`report`]: aggregate everything into a canonical JSON report.
//!
//! [`pipeline::run_pipeline`] chains the stages. The guide in `book/`
//! walks through each stage; its code samples are compiled and run as
//! doctests of this crate.

pub mod backends;
pub mod dedup;
pub mod error;
pub mod fusion;
pub mod graph;
pub mod linkage;
pub mod manifest;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod username;

pub use error::{Error, Result};
pub use model::{AgeCategory, BoundingBox, CollageImage, Gender, Participant, Point, PostRecord, Source};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineRun};
pub use report::StatisticsReport;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/dedup.md")]
    mod dedup {}
    #[doc = include_str!("../../../book/src/fusion.md")]
    mod fusion {}
    #[doc = include_str!("../../../book/src/usernames.md")]
    mod usernames {}
    #[doc = include_str!("../../../book/src/linkage.md")]
    mod linkage {}
    #[doc = include_str!("../../../book/src/graph.md")]
    mod graph {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
