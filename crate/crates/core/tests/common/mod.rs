//! Shared by the integration test targets: the fixture location and the
//! hand-derived expected report for it.

#![allow(dead_code)]

use std::path::PathBuf;

pub fn fixture_manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/meetings10/manifest.jsonl")
}

/// Expected `report.json` values for `fixtures/meetings10`, worked out by
/// hand from the table in `examples/make_fixture.rs`.
///
/// Posts: c01..c10 plus c11 (byte copy of c03), c12 (image embedding 5 away
/// from c05's, different pixels) and n01 (score 0.1). So 13 ingested, 1 not
/// a collage, 12 collages, c11 removed by hash, c12 by embedding, 10 kept.
///
/// Faces per kept collage: 4,3,3,2,2,3,2,2,2,3 = 26, mean 2.6.
/// Fused ages (mean of the two models where both saw the face):
///   c01 31 42 10 16 | c02 30 12 68 | c03 41 26 17 | c04 12 35 | c05 30 21
///   c06 46 50 8     | c07 26 35    | c08 36 65    | c09 34 64.99
///   c10 22 17.01 28
/// Sum 823, mean 823/26 = 31.6538. Sorted, the 13th and 14th are both 30.
/// Bins: child {8,10,12,12} = 4/26, adolescent {16,17} = 2/26,
/// older_adult {65,68} = 2/26, adult the other 18/26.
/// Gender: 12 male, 10 female, 4 without (two primary-only faces, c03's
/// unlabelled face, and c10's conflicting pair).
///
/// Usernames (24 observations, 17 distinct): single word iphone tal yossi
/// zed noa kid zk ora robin (9); two words dana levi, moshe cohen,
/// old timer, ghost name, grandpa joe, q tip (6); "anne marie cohen" (3);
/// "ana bat ruth levi" (4). Seen in two or more meetings: dana levi,
/// moshe cohen, iphone, anne marie cohen, yossi, noa (6, 3 multi-word).
/// Most popular single word: iphone, yossi and noa at 2, smallest wins.
///
/// Identities: Dana (3 faces), Moshe, Anne, Yossi, Noa (2 each), and the
/// face chain zed/zk/unnamed (offsets 0, 0.25, 0.5) as one; 12 singletons.
/// 18 identities. Face-only clusters over 2+ meetings: Dana, Moshe, Anne,
/// Noa, the chain = 5 (c07's Yossi has no embedding).
///
/// Graph: meetings give 6+3+3+1+1+3+1+1+1+3 = 23 distinct edges over 18
/// nodes. c06's three identities form their own component; the other 15
/// nodes and 20 edges are connected. Means 9.0 nodes, 11.5 edges.
pub const EXPECTED_REPORT: &str = r#"{
  "images_ingested": 13,
  "images_skipped": 0,
  "images_not_collage": 1,
  "images_unscored": 0,
  "images_classified_collage": 12,
  "images_removed_hash": 1,
  "images_removed_embedding": 1,
  "images_kept_after_dedup": 10,
  "total_faces": 26,
  "mean_participants_per_collage": 2.6,
  "faces_with_age": 26,
  "age_mean": 31.6538,
  "age_median": 30.0,
  "age_category_shares": {"child": 0.1538, "adolescent": 0.0769, "adult": 0.6923, "older_adult": 0.0769},
  "gender_counts": {"male": 12, "female": 10},
  "username_observations": 24,
  "distinct_usernames": 17,
  "multiword_usernames": 8,
  "reused_usernames": 6,
  "reused_multiword_usernames": 3,
  "username_word_count_histogram": {"1": 9, "2": 6, "3": 1, "4": 1},
  "most_popular_single_word_username": {"username": "iphone", "appearances": 2},
  "identity_count": 18,
  "repeated_face_identities": 5,
  "graph": {
    "node_count": 18,
    "edge_count": 23,
    "component_count": 2,
    "mean_nodes": 9.0,
    "mean_edges": 11.5,
    "largest_nodes": 15,
    "largest_edges": 20
  }
}"#;

/// Compares `actual` against `expected`, numbers to 4 decimals. Returns the
/// list of mismatching paths.
pub fn diff_json(expected: &serde_json::Value, actual: &serde_json::Value, path: &str, out: &mut Vec<String>) {
    use serde_json::Value;
    match (expected, actual) {
        (Value::Object(e), Value::Object(a)) => {
            for (k, ev) in e {
                let p = format!("{path}.{k}");
                match a.get(k) {
                    Some(av) => diff_json(ev, av, &p, out),
                    None => out.push(format!("{p}: missing")),
                }
            }
            for k in a.keys().filter(|k| !e.contains_key(*k)) {
                out.push(format!("{path}.{k}: unexpected"));
            }
        }
        (Value::Number(e), Value::Number(a)) => {
            let (e, a) = (e.as_f64().unwrap(), a.as_f64().unwrap());
            if (e - a).abs() >= 5e-5 {
                out.push(format!("{path}: expected {e}, got {a}"));
            }
        }
        (e, a) if e == a => {}
        (e, a) => out.push(format!("{path}: expected {e}, got {a}")),
    }
}
