//! Study statistics and their canonical JSON form.
//!
//! `report.json` is written with sorted keys, two-space indentation and every
//! real number printed with exactly four decimals, so identical runs give
//! identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::graph::{component_stats, SocialGraphData};
use crate::linkage::IdentityCluster;
use crate::model::{AgeCategory, Participant};

/// One username seen in one meeting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsernameObservation {
    pub meeting_id: String,
    pub username: String,
    pub word_count: usize,
    pub generic: bool,
    pub participant_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsernameCount {
    pub username: String,
    pub appearances: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GraphSummary {
    pub node_count: usize,
    pub edge_count: usize,
    pub component_count: usize,
    pub mean_nodes: f64,
    pub mean_edges: f64,
    pub largest_nodes: usize,
    pub largest_edges: usize,
}

impl GraphSummary {
    pub fn of(g: &SocialGraphData) -> Self {
        match component_stats(g) {
            Ok(s) => GraphSummary {
                node_count: g.node_count(),
                edge_count: g.edge_count(),
                component_count: s.component_count,
                mean_nodes: s.mean_nodes,
                mean_edges: s.mean_edges,
                largest_nodes: s.largest_nodes,
                largest_edges: s.largest_edges,
            },
            Err(_) => GraphSummary::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageCounts {
    pub images_ingested: usize,
    pub images_skipped: usize,
    pub images_not_collage: usize,
    pub images_unscored: usize,
    pub images_classified_collage: usize,
    pub images_removed_hash: usize,
    pub images_removed_embedding: usize,
    pub images_kept_after_dedup: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticsReport {
    #[serde(flatten)]
    pub counts: StageCounts,
    pub total_faces: usize,
    pub mean_participants_per_collage: f64,
    pub faces_with_age: usize,
    pub age_mean: Option<f64>,
    pub age_median: Option<f64>,
    pub age_category_shares: BTreeMap<String, f64>,
    pub gender_counts: BTreeMap<String, usize>,
    pub username_observations: usize,
    pub distinct_usernames: usize,
    pub multiword_usernames: usize,
    pub reused_usernames: usize,
    pub reused_multiword_usernames: usize,
    pub username_word_count_histogram: BTreeMap<usize, usize>,
    pub most_popular_single_word_username: Option<UsernameCount>,
    pub identity_count: usize,
    pub repeated_face_identities: usize,
    pub graph: GraphSummary,
}

pub struct ReportInputs<'a> {
    pub counts: StageCounts,
    pub participants: &'a [Participant],
    pub usernames: &'a [UsernameObservation],
    pub clusters: &'a [IdentityCluster],
    /// Clusters from face evidence alone; `None` when face linkage is off.
    pub face_clusters: Option<&'a [IdentityCluster]>,
    pub graph: &'a SocialGraphData,
}

fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some((sorted[n / 2 - 1] + sorted[n / 2]) / 2.0),
    }
}

impl StatisticsReport {
    pub fn compute(inputs: &ReportInputs<'_>) -> Self {
        let ps = inputs.participants;
        let total_faces = ps.len();
        let kept = inputs.counts.images_kept_after_dedup;

        let mut ages: Vec<f64> = ps.iter().filter_map(|p| p.age_years).collect();
        ages.sort_by(f64::total_cmp);
        let age_mean = (!ages.is_empty()).then(|| ages.iter().sum::<f64>() / ages.len() as f64);

        let categorized: Vec<AgeCategory> = ps.iter().filter_map(|p| p.age_category).collect();
        let age_category_shares = AgeCategory::ALL
            .iter()
            .map(|c| {
                let n = categorized.iter().filter(|x| *x == c).count();
                let share = if categorized.is_empty() {
                    0.0
                } else {
                    n as f64 / categorized.len() as f64
                };
                (c.as_str().to_owned(), share)
            })
            .collect();

        let mut gender_counts = BTreeMap::new();
        for g in ps.iter().filter_map(|p| p.gender) {
            *gender_counts.entry(g.as_str().to_owned()).or_insert(0) += 1;
        }

        let mut by_name: BTreeMap<&str, (usize, BTreeSet<&str>, usize)> = BTreeMap::new();
        for u in inputs.usernames {
            let e = by_name.entry(&u.username).or_insert((u.word_count, BTreeSet::new(), 0));
            e.1.insert(&u.meeting_id);
            e.2 += 1;
        }
        let mut histogram = BTreeMap::new();
        for (words, _, _) in by_name.values() {
            *histogram.entry(*words).or_insert(0) += 1;
        }
        let reused = |min_words: usize| {
            by_name
                .values()
                .filter(|(w, meetings, _)| *w >= min_words && meetings.len() >= 2)
                .count()
        };
        let most_popular_single_word_username = by_name
            .iter()
            .filter(|(_, (w, _, _))| *w == 1)
            .max_by(|a, b| a.1 .2.cmp(&b.1 .2).then(b.0.cmp(a.0)))
            .map(|(name, (_, _, n))| UsernameCount {
                username: (*name).to_owned(),
                appearances: *n,
            });

        StatisticsReport {
            counts: inputs.counts.clone(),
            total_faces,
            mean_participants_per_collage: if kept == 0 {
                0.0
            } else {
                total_faces as f64 / kept as f64
            },
            faces_with_age: ages.len(),
            age_mean,
            age_median: median(&ages),
            age_category_shares,
            gender_counts,
            username_observations: inputs.usernames.len(),
            distinct_usernames: by_name.len(),
            multiword_usernames: by_name.values().filter(|(w, _, _)| *w > 1).count(),
            reused_usernames: reused(1),
            reused_multiword_usernames: reused(2),
            username_word_count_histogram: histogram,
            most_popular_single_word_username,
            identity_count: inputs.clusters.len(),
            repeated_face_identities: inputs
                .face_clusters
                .map_or(0, |cs| cs.iter().filter(|c| c.meetings.len() >= 2).count()),
            graph: GraphSummary::of(inputs.graph),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed report: {e}")))
    }
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) => write!(out, "{u}").unwrap(),
            (None, Some(i), _) => write!(out, "{i}").unwrap(),
            (None, None, Some(f)) => {
                let s = format!("{f:.4}");
                // avoid "-0.0000"
                out.push_str(if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
                    "0.0000"
                } else {
                    &s
                });
            }
            _ => unreachable!("serde_json numbers are u64, i64 or f64"),
        },
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&"  ".repeat(indent + 1));
                write_value(out, item, indent + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&"  ".repeat(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&"  ".repeat(indent + 1));
                out.push_str(&serde_json::to_string(k).expect("strings serialize"));
                out.push_str(": ");
                write_value(out, &map[*k], indent + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&"  ".repeat(indent));
            out.push('}');
        }
    }
}

/// Canonical JSON text for any serialisable value: sorted keys, fixed
/// four-decimal reals, trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("report types serialize to JSON");
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    out
}

pub fn emit_report(report: &StatisticsReport, path: &Path) -> Result<()> {
    std::fs::write(path, to_canonical_json(report)).map_err(|e| Error::write(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundingBox, Gender};

    fn participant(id: &str, meeting: &str, age: Option<f64>, gender: Option<Gender>) -> Participant {
        let mut p = Participant::bare(id, meeting, BoundingBox::new(0., 0., 1., 1.).unwrap());
        p.age_years = age;
        p.age_category = age.map(|a| crate::fusion::bin_age(a).unwrap());
        p.gender = gender;
        p
    }

    fn obs(meeting: &str, name: &str) -> UsernameObservation {
        UsernameObservation {
            meeting_id: meeting.into(),
            username: name.into(),
            word_count: name.split_whitespace().count(),
            generic: false,
            participant_id: None,
        }
    }

    fn sample() -> StatisticsReport {
        let ps = vec![
            participant("a", "m1", Some(10.0), Some(Gender::Male)),
            participant("b", "m1", Some(30.0), None),
            participant("c", "m2", Some(40.0), Some(Gender::Female)),
            participant("d", "m2", None, Some(Gender::Female)),
        ];
        let us = vec![
            obs("m1", "dana levi"),
            obs("m2", "dana levi"),
            obs("m1", "iphone"),
            obs("m2", "iphone"),
            obs("m2", "iphone"),
        ];
        let g = SocialGraphData::default();
        StatisticsReport::compute(&ReportInputs {
            counts: StageCounts {
                images_ingested: 3,
                images_kept_after_dedup: 2,
                ..Default::default()
            },
            participants: &ps,
            usernames: &us,
            clusters: &[],
            face_clusters: None,
            graph: &g,
        })
    }

    #[test]
    fn statistics() {
        let r = sample();
        assert_eq!(r.total_faces, 4);
        assert_eq!(r.mean_participants_per_collage, 2.0);
        assert_eq!(r.age_mean, Some(80.0 / 3.0));
        assert_eq!(r.age_median, Some(30.0));
        assert_eq!(r.age_category_shares["child"], 1.0 / 3.0);
        assert_eq!(r.age_category_shares["adult"], 2.0 / 3.0);
        assert_eq!(r.age_category_shares["older_adult"], 0.0);
        assert_eq!(r.gender_counts["female"], 2);
        assert_eq!(r.distinct_usernames, 2);
        assert_eq!(r.multiword_usernames, 1);
        assert_eq!(r.reused_usernames, 2);
        assert_eq!(r.reused_multiword_usernames, 1);
        assert_eq!(r.username_word_count_histogram, BTreeMap::from([(1, 1), (2, 1)]));
        assert_eq!(
            r.most_popular_single_word_username,
            Some(UsernameCount {
                username: "iphone".into(),
                appearances: 3
            })
        );
    }

    #[test]
    fn even_median_averages_middle_pair() {
        assert_eq!(median(&[1.0, 2.0, 4.0, 10.0]), Some(3.0));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn canonical_json_is_stable_and_round_trips() {
        let r = sample();
        let a = to_canonical_json(&r);
        assert_eq!(a, to_canonical_json(&r));
        assert!(a.contains("\"age_mean\": 26.6667"), "{a}");
        assert!(a.contains("\"mean_participants_per_collage\": 2.0000"));
        let back = StatisticsReport::from_json(&a).unwrap();
        assert_eq!(to_canonical_json(&back), a);
    }

    #[test]
    fn missing_gender_data_is_an_empty_map() {
        let g = SocialGraphData::default();
        let r = StatisticsReport::compute(&ReportInputs {
            counts: StageCounts::default(),
            participants: &[],
            usernames: &[],
            clusters: &[],
            face_clusters: None,
            graph: &g,
        });
        let json = to_canonical_json(&r);
        assert!(json.contains("\"gender_counts\": {}"), "{json}");
        assert!(json.contains("\"age_mean\": null"));
    }

    #[test]
    fn negative_zero_prints_as_zero() {
        assert_eq!(to_canonical_json(&-0.0f64), "0.0000\n");
        assert_eq!(to_canonical_json(&-0.00001f64), "0.0000\n");
        assert_eq!(to_canonical_json(&-1.5f64), "-1.5000\n");
    }
}
