//! JSONL post manifests: one `{"post_id", "source", "image_path", "tags"}`
//! object per line. Relative image paths resolve against the manifest's
//! directory. Blank lines are ignored.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{PostRecord, Source};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPost {
    post_id: String,
    source: Source,
    image_path: String,
    #[serde(default)]
    tags: Vec<String>,
}

pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Vec<PostRecord>> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut posts = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawPost = serde_json::from_str(line).map_err(|e| Error::Manifest {
            line: line_no,
            message: e.to_string(),
        })?;
        if raw.post_id.is_empty() || raw.image_path.is_empty() {
            return Err(Error::Manifest {
                line: line_no,
                message: "post_id and image_path must be non-empty".into(),
            });
        }
        if seen.insert(raw.post_id.clone(), line_no).is_some() {
            return Err(Error::DuplicatePost {
                post_id: raw.post_id,
                line: line_no,
            });
        }
        posts.push(PostRecord {
            post_id: raw.post_id,
            source: raw.source,
            image_path: base_dir.join(raw.image_path),
            tags: raw.tags,
        });
    }
    Ok(posts)
}

pub fn ingest_manifest(path: &Path) -> Result<Vec<PostRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}
