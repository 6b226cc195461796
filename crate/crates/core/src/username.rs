//! Username reconstruction from single-word scene-text detections.
//!
//! Text recognisers report one word at a time, but gallery-view name labels
//! are often several words long. Words are first filtered against the
//! meeting-UI vocabulary and an optional dictionary, then merged: each word
//! looks for the word whose top-left corner is nearest to its own top-right
//! corner, and the two are joined when that distance is within the
//! threshold. Passes repeat until one performs no merge.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{point_distance, BoundingBox};

/// Default merge distance, in original-image pixels.
pub const DEFAULT_MERGE_THRESHOLD: f64 = 10.0;

const DEFAULT_UI_WORDS: &str = include_str!("../data/ui_words.txt");
const DEFAULT_GENERIC_NAMES: &str = include_str!("../data/generic_names.txt");

/// A case-folded word list. One entry per line; blank lines are ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordSet(HashSet<String>);

impl WordSet {
    pub fn parse(text: &str) -> Self {
        WordSet(text.lines().map(|l| fold(l.trim())).filter(|l| !l.is_empty()).collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)
            .map(|t| Self::parse(&t))
            .map_err(|e| Error::read(path, e))
    }

    /// Meeting-client UI words that are never part of a username.
    pub fn default_ui_words() -> Self {
        Self::parse(DEFAULT_UI_WORDS)
    }

    /// Device names people leave as their display name.
    pub fn default_generic_names() -> Self {
        Self::parse(DEFAULT_GENERIC_NAMES)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(&fold(word))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: AsRef<str>> FromIterator<S> for WordSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        WordSet(iter.into_iter().map(|s| fold(s.as_ref())).collect())
    }
}

fn fold(s: &str) -> String {
    s.to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordToken {
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    #[serde(default)]
    pub confidence: Option<f64>,
}

impl WordToken {
    pub fn new(text: impl Into<String>, bbox: BoundingBox) -> Self {
        WordToken {
            text: text.into(),
            bbox,
            confidence: None,
        }
    }

    /// A recognised word is non-empty and has no whitespace inside it.
    pub fn is_single_word(&self) -> bool {
        !self.text.is_empty() && !self.text.chars().any(char::is_whitespace)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsernameCandidate {
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub word_count: usize,
    pub generic: bool,
}

impl UsernameCandidate {
    pub fn as_token(&self) -> WordToken {
        WordToken::new(self.text.clone(), self.bbox)
    }
}

/// Drops tokens found (case-insensitively) in the UI word list or the
/// dictionary. Survivors keep their order and text.
pub fn filter_tokens(tokens: &[WordToken], ui_words: &WordSet, dictionary: Option<&WordSet>) -> Vec<WordToken> {
    tokens
        .iter()
        .filter(|t| !ui_words.contains(&t.text) && !dictionary.is_some_and(|d| d.contains(&t.text)))
        .cloned()
        .collect()
}

#[derive(Debug, Clone)]
struct Fragment {
    text: String,
    bbox: BoundingBox,
}

fn reading_order(a: &Fragment, b: &Fragment) -> Ordering {
    a.bbox
        .y
        .total_cmp(&b.bbox.y)
        .then(a.bbox.x.total_cmp(&b.bbox.x))
        .then_with(|| a.text.cmp(&b.text))
        .then(a.bbox.w.total_cmp(&b.bbox.w))
        .then(a.bbox.h.total_cmp(&b.bbox.h))
}

// equidistant candidates: smaller x, then smaller y, then text
fn candidate_order(a: &Fragment, b: &Fragment) -> Ordering {
    a.bbox
        .x
        .total_cmp(&b.bbox.x)
        .then(a.bbox.y.total_cmp(&b.bbox.y))
        .then_with(|| a.text.cmp(&b.text))
        .then(a.bbox.w.total_cmp(&b.bbox.w))
        .then(a.bbox.h.total_cmp(&b.bbox.h))
}

fn join(a: &Fragment, b: &Fragment) -> Fragment {
    let (left, right) = if candidate_order(a, b).is_le() { (a, b) } else { (b, a) };
    Fragment {
        text: format!("{} {}", left.text, right.text),
        bbox: a.bbox.union(&b.bbox),
    }
}

/// One merge pass. Returns the new fragment list and the number of merges.
fn merge_pass(mut frags: Vec<Fragment>, threshold: f64) -> (Vec<Fragment>, usize) {
    frags.sort_by(reading_order);
    let mut consumed = vec![false; frags.len()];
    let mut next = Vec::with_capacity(frags.len());
    let mut merges = 0;
    for i in 0..frags.len() {
        if consumed[i] {
            continue;
        }
        let anchor = frags[i].bbox.top_right();
        let nearest = (0..frags.len())
            .filter(|&j| j != i && !consumed[j])
            .map(|j| (j, point_distance(anchor, frags[j].bbox.top_left())))
            .min_by(|(a, da), (b, db)| da.total_cmp(db).then_with(|| candidate_order(&frags[*a], &frags[*b])));
        if let Some((j, d)) = nearest {
            if d <= threshold {
                consumed[i] = true;
                consumed[j] = true;
                next.push(join(&frags[i], &frags[j]));
                merges += 1;
            }
        }
    }
    next.extend(frags.into_iter().zip(consumed).filter(|(_, c)| !c).map(|(f, _)| f));
    (next, merges)
}

/// Joins nearby words into multi-word usernames.
///
/// Merged text is ordered left to right and the merged box is the union of
/// the parts. Candidates come back in reading order (top to bottom, then
/// left to right).
pub fn merge_word_tokens(tokens: &[WordToken], threshold: f64) -> Vec<UsernameCandidate> {
    let mut frags: Vec<Fragment> = tokens
        .iter()
        .map(|t| Fragment {
            text: t.text.clone(),
            bbox: t.bbox,
        })
        .collect();
    loop {
        let (next, merges) = merge_pass(frags, threshold);
        frags = next;
        if merges == 0 {
            break;
        }
    }
    frags.sort_by(reading_order);
    frags
        .into_iter()
        .map(|f| UsernameCandidate {
            word_count: f.text.split_whitespace().count(),
            text: f.text,
            bbox: f.bbox,
            generic: false,
        })
        .collect()
}

/// Case-folds, trims and collapses whitespace, then flags the result as
/// generic when it exactly matches an entry of `generic_names`.
pub fn normalize_username(raw: &str, generic_names: &WordSet) -> (String, bool) {
    let normalized = raw.split_whitespace().map(fold).collect::<Vec<_>>().join(" ");
    let generic = generic_names.contains(&normalized);
    (normalized, generic)
}

/// Pairs usernames with faces in one collage.
///
/// A username is eligible for a face whose box center lies above the top of
/// the username box. Pairs are taken greedily by ascending distance between
/// the face center and the username box center; each face and each username
/// is used at most once. Returns, per face, the index of its username.
pub fn assign_usernames(faces: &[BoundingBox], names: &[UsernameCandidate]) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (fi, face) in faces.iter().enumerate() {
        let c = face.center();
        for (ni, name) in names.iter().enumerate() {
            if c.y < name.bbox.y {
                pairs.push((point_distance(c, name.bbox.center()), fi, ni));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut by_face = vec![None; faces.len()];
    let mut name_used = vec![false; names.len()];
    for (_, fi, ni) in pairs {
        if by_face[fi].is_none() && !name_used[ni] {
            by_face[fi] = Some(ni);
            name_used[ni] = true;
        }
    }
    by_face
}
