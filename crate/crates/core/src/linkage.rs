//! Cross-meeting identity resolution.
//!
//! Participants are linked by two kinds of evidence: an identical
//! normalised username, or face embeddings within a euclidean distance
//! threshold. Identities are the connected components of the resulting
//! evidence graph (single linkage). Single linkage can chain: `a~b` and
//! `b~c` put `a` and `c` together even when `a` and `c` are far apart. The
//! tight default face threshold keeps such chains short.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dedup::euclidean;
use crate::error::{Error, Result};
use crate::model::{Participant, EMBEDDING_DIM};

pub const DEFAULT_FACE_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Evidence {
    Username,
    Face,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub a: String,
    pub b: String,
    pub evidence: Evidence,
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityCluster {
    pub identity_id: String,
    pub members: BTreeSet<String>,
    pub canonical_username: Option<String>,
    pub meetings: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkageOptions {
    pub face_threshold: f64,
    pub use_username: bool,
    pub use_face: bool,
    pub exclude_generic: bool,
}

impl Default for LinkageOptions {
    fn default() -> Self {
        LinkageOptions {
            face_threshold: DEFAULT_FACE_THRESHOLD,
            use_username: true,
            use_face: true,
            exclude_generic: true,
        }
    }
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Every pair `(i, j)`, `i < j`, with euclidean distance `<= threshold`, by a
/// plain double loop. Kept as the reference for [`face_pairs_pruned`].
pub fn face_pairs_naive(embeddings: &[&[f64]], threshold: f64) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for i in 0..embeddings.len() {
        for j in i + 1..embeddings.len() {
            let d = euclidean(embeddings[i], embeddings[j]);
            if d <= threshold {
                out.push((i, j, d));
            }
        }
    }
    out
}

/// Same pair set as [`face_pairs_naive`], skipping pairs whose vector norms
/// differ by more than the threshold (`|‖a‖ - ‖b‖| <= ‖a - b‖`). Vectors are
/// sorted by norm so each row stops at the first norm beyond reach; rows are
/// scanned in parallel.
pub fn face_pairs_pruned(embeddings: &[&[f64]], threshold: f64) -> Vec<(usize, usize, f64)> {
    let norms: Vec<f64> = embeddings
        .iter()
        .map(|e| e.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut by_norm: Vec<usize> = (0..embeddings.len()).collect();
    by_norm.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));

    let mut out: Vec<(usize, usize, f64)> = by_norm
        .par_iter()
        .enumerate()
        .flat_map_iter(|(rank, &i)| {
            // rounding slack so the bound never drops a pair the exact scan keeps
            let reach = norms[i] + threshold + 1e-9 * (1.0 + norms[i]);
            let norms = &norms;
            by_norm[rank + 1..]
                .iter()
                .take_while(move |&&j| norms[j] <= reach)
                .filter_map(move |&j| {
                    let d = euclidean(embeddings[i], embeddings[j]);
                    (d <= threshold).then_some((i.min(j), i.max(j), d))
                })
        })
        .collect();
    out.sort_by_key(|p| (p.0, p.1));
    out
}

/// Face matches between participants that carry an embedding, ordered by
/// `(a, b)` participant ids with `a < b`.
pub fn pairwise_face_matches(participants: &[Participant], threshold: f64) -> Result<Vec<MatchPair>> {
    let mut with_emb: Vec<(&str, &[f64])> = Vec::new();
    for p in participants {
        if let Some(e) = &p.embedding {
            if e.len() != EMBEDDING_DIM {
                return Err(Error::Dimension {
                    expected: EMBEDDING_DIM,
                    found: e.len(),
                });
            }
            with_emb.push((&p.participant_id, e));
        }
    }
    let embeddings: Vec<&[f64]> = with_emb.iter().map(|(_, e)| *e).collect();
    let mut pairs: Vec<MatchPair> = face_pairs_pruned(&embeddings, threshold)
        .into_iter()
        .map(|(i, j, d)| {
            let (a, b) = if with_emb[i].0 <= with_emb[j].0 { (i, j) } else { (j, i) };
            MatchPair {
                a: with_emb[a].0.to_owned(),
                b: with_emb[b].0.to_owned(),
                evidence: Evidence::Face,
                distance: Some(d),
            }
        })
        .collect();
    pairs.sort_by(|x, y| (&x.a, &x.b).cmp(&(&y.a, &y.b)));
    Ok(pairs)
}

fn username_key<'a>(p: &'a Participant, opts: &LinkageOptions) -> Option<&'a str> {
    let name = p.username.as_deref()?;
    (!(opts.exclude_generic && p.username_generic)).then_some(name)
}

/// Username matches: every pair of participants sharing an identical,
/// non-excluded username. Quadratic in group size; meant for inspection,
/// clustering itself does not need the explicit pairs.
pub fn username_matches(participants: &[Participant], opts: &LinkageOptions) -> Vec<MatchPair> {
    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for p in participants {
        if let Some(name) = username_key(p, opts) {
            groups.entry(name).or_default().push(&p.participant_id);
        }
    }
    let mut out = Vec::new();
    for ids in groups.values_mut() {
        ids.sort_unstable();
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                out.push(MatchPair {
                    a: (*a).to_owned(),
                    b: (*b).to_owned(),
                    evidence: Evidence::Username,
                    distance: None,
                });
            }
        }
    }
    out.sort_by(|x, y| (&x.a, &x.b).cmp(&(&y.a, &y.b)));
    out
}

/// Clusters participants given precomputed face pairs. Face pairs are only
/// used when `opts.use_face` is set, and only those within
/// `opts.face_threshold`.
pub fn cluster_from_evidence(
    participants: &[Participant],
    face_pairs: &[MatchPair],
    opts: &LinkageOptions,
) -> Result<Vec<IdentityCluster>> {
    if !opts.use_username && !opts.use_face {
        return Err(Error::Config(
            "at least one of username or face linkage must be enabled".into(),
        ));
    }
    let index: BTreeMap<&str, usize> = participants
        .iter()
        .enumerate()
        .map(|(i, p)| (p.participant_id.as_str(), i))
        .collect();
    let mut uf = UnionFind::new(participants.len());

    if opts.use_username {
        let mut first_by_name: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, p) in participants.iter().enumerate() {
            if let Some(name) = username_key(p, opts) {
                let root = *first_by_name.entry(name).or_insert(i);
                uf.union(root, i);
            }
        }
    }
    if opts.use_face {
        for pair in face_pairs {
            if pair.distance.is_some_and(|d| d <= opts.face_threshold) {
                if let (Some(&a), Some(&b)) = (index.get(pair.a.as_str()), index.get(pair.b.as_str())) {
                    uf.union(a, b);
                }
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..participants.len() {
        groups.entry(uf.find(i)).or_default().push(i);
    }
    let mut clusters: Vec<IdentityCluster> = groups
        .into_values()
        .map(|members| {
            let mut counts: BTreeMap<(bool, &str), usize> = BTreeMap::new();
            for &m in &members {
                if let Some(u) = &participants[m].username {
                    *counts
                        .entry((participants[m].username_generic, u.as_str()))
                        .or_default() += 1;
                }
            }
            // non-generic names first, then most frequent, then lexicographic
            let canonical_username = counts
                .iter()
                .min_by(|((ga, na), ca), ((gb, nb), cb)| ga.cmp(gb).then(cb.cmp(ca)).then(na.cmp(nb)))
                .map(|((_, n), _)| (*n).to_owned());
            IdentityCluster {
                identity_id: String::new(),
                members: members
                    .iter()
                    .map(|&m| participants[m].participant_id.clone())
                    .collect(),
                canonical_username,
                meetings: members.iter().map(|&m| participants[m].meeting_id.clone()).collect(),
            }
        })
        .collect();
    clusters.sort_by(|a, b| a.members.first().cmp(&b.members.first()));
    for (i, c) in clusters.iter_mut().enumerate() {
        c.identity_id = format!("id{i:05}");
    }
    Ok(clusters)
}

/// Resolves identities from usernames and/or face embeddings.
pub fn link_identities(participants: &[Participant], opts: &LinkageOptions) -> Result<Vec<IdentityCluster>> {
    if !opts.use_username && !opts.use_face {
        return Err(Error::Config(
            "at least one of username or face linkage must be enabled".into(),
        ));
    }
    let face_pairs = if opts.use_face {
        pairwise_face_matches(participants, opts.face_threshold)?
    } else {
        Vec::new()
    };
    cluster_from_evidence(participants, &face_pairs, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BoundingBox;

    fn part(id: &str, meeting: &str) -> Participant {
        Participant::bare(id, meeting, BoundingBox::new(0., 0., 1., 1.).unwrap())
    }

    fn with_name(id: &str, meeting: &str, name: &str, generic: bool) -> Participant {
        let mut p = part(id, meeting);
        p.username = Some(name.into());
        p.username_generic = generic;
        p
    }

    fn with_emb(id: &str, meeting: &str, first: f64) -> Participant {
        let mut p = part(id, meeting);
        let mut e = vec![0.0; EMBEDDING_DIM];
        e[0] = first;
        p.embedding = Some(e);
        p
    }

    #[test]
    fn single_participant_has_no_pairs() {
        assert!(pairwise_face_matches(&[with_emb("a", "m", 0.1)], 0.3)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn identical_embeddings_pair_at_zero() {
        let pairs = pairwise_face_matches(&[with_emb("b", "m1", 0.1), with_emb("a", "m2", 0.1)], 0.0).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].a.as_str(), pairs[0].b.as_str()), ("a", "b"));
        assert_eq!(pairs[0].distance, Some(0.0));
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let mut p = part("a", "m");
        p.embedding = Some(vec![0.0; 64]);
        assert!(matches!(
            pairwise_face_matches(&[p], 0.3),
            Err(Error::Dimension { found: 64, .. })
        ));
    }

    #[test]
    fn shared_username_links_meetings() {
        let ps = [
            with_name("p1", "M1", "dana levi", false),
            with_name("p2", "M2", "dana levi", false),
        ];
        let clusters = link_identities(&ps, &LinkageOptions::default()).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(
            clusters[0].meetings,
            BTreeSet::from(["M1".to_string(), "M2".to_string()])
        );
        assert_eq!(clusters[0].canonical_username.as_deref(), Some("dana levi"));
    }

    #[test]
    fn face_links_are_transitive() {
        // a-b 0.25, b-c 0.25, a-c 0.5
        let ps = [
            with_emb("a", "M1", 0.0),
            with_emb("b", "M2", 0.25),
            with_emb("c", "M3", 0.5),
        ];
        let clusters = link_identities(&ps, &LinkageOptions::default()).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].members.len(), 3);
    }

    #[test]
    fn generic_usernames_do_not_link() {
        let ps = [
            with_name("p1", "M1", "iphone", true),
            with_name("p2", "M2", "iphone", true),
        ];
        assert_eq!(link_identities(&ps, &LinkageOptions::default()).unwrap().len(), 2);
        let opts = LinkageOptions {
            exclude_generic: false,
            ..Default::default()
        };
        assert_eq!(link_identities(&ps, &opts).unwrap().len(), 1);
    }

    #[test]
    fn both_channels_off_is_a_config_error() {
        let opts = LinkageOptions {
            use_username: false,
            use_face: false,
            ..Default::default()
        };
        assert!(matches!(link_identities(&[], &opts), Err(Error::Config(_))));
    }

    #[test]
    fn canonical_username_prefers_frequent_then_smallest() {
        let mut ps = vec![
            with_name("a", "M1", "zed", false),
            with_name("b", "M2", "amy", false),
            with_name("c", "M3", "zed", false),
            with_name("d", "M4", "iphone", true),
        ];
        for p in &mut ps {
            let mut e = vec![0.0; EMBEDDING_DIM];
            e[1] = 1.0;
            p.embedding = Some(e);
        }
        let clusters = link_identities(&ps, &LinkageOptions::default()).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].canonical_username.as_deref(), Some("zed"));
    }

    #[test]
    fn participants_without_evidence_are_singletons() {
        let ps = [part("a", "M1"), part("b", "M1"), with_emb("c", "M2", 0.0)];
        let clusters = link_identities(&ps, &LinkageOptions::default()).unwrap();
        assert_eq!(clusters.len(), 3);
        assert_eq!(clusters[0].identity_id, "id00000");
        assert!(clusters.iter().all(|c| c.members.len() == 1));
    }

    #[test]
    fn username_pairs_listed() {
        let ps = [
            with_name("c", "M1", "x", false),
            with_name("a", "M2", "x", false),
            with_name("b", "M3", "x", false),
        ];
        let pairs = username_matches(&ps, &LinkageOptions::default());
        let ids: Vec<(&str, &str)> = pairs.iter().map(|p| (p.a.as_str(), p.b.as_str())).collect();
        assert_eq!(ids, vec![("a", "b"), ("a", "c"), ("b", "c")]);
    }
}
