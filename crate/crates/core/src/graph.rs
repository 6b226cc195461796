//! Co-participation graph: one node per identity, one edge per pair of
//! identities seen in the same meeting, weighted by the number of meetings
//! they share.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linkage::IdentityCluster;

pub type MeetingIndex = BTreeMap<String, BTreeSet<String>>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocialGraphData {
    pub nodes: BTreeSet<String>,
    /// Keyed by `(smaller id, larger id)`.
    pub edges: BTreeMap<(String, String), u32>,
    pub meeting_index: MeetingIndex,
}

impl SocialGraphData {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    fn adjacency(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut adj: BTreeMap<&str, Vec<&str>> = self.nodes.iter().map(|n| (n.as_str(), Vec::new())).collect();
        for (a, b) in self.edges.keys() {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        adj
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub component_count: usize,
    pub mean_nodes: f64,
    pub mean_edges: f64,
    pub largest_nodes: usize,
    pub largest_edges: usize,
}

/// Which identities took part in each meeting, derived from identity
/// clusters.
pub fn meetings_from_clusters(clusters: &[IdentityCluster]) -> MeetingIndex {
    let mut meetings = MeetingIndex::new();
    for c in clusters {
        for m in &c.meetings {
            meetings.entry(m.clone()).or_default().insert(c.identity_id.clone());
        }
    }
    meetings
}

pub fn build_social_graph(meetings: &MeetingIndex) -> SocialGraphData {
    let mut g = SocialGraphData {
        meeting_index: meetings.clone(),
        ..Default::default()
    };
    for ids in meetings.values() {
        let ids: Vec<&String> = ids.iter().collect();
        g.nodes.extend(ids.iter().map(|s| (*s).clone()));
        // BTreeSet iteration is sorted, so ids[i] < ids[j] for i < j
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                *g.edges.entry(((*a).clone(), (*b).clone())).or_insert(0) += 1;
            }
        }
    }
    g
}

/// Connected components by breadth-first search, ordered by their smallest
/// member id.
pub fn connected_components(g: &SocialGraphData) -> Vec<BTreeSet<String>> {
    let adj = g.adjacency();
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut components = Vec::new();
    // nodes iterate in sorted order, so components come out sorted by minimum
    for start in &g.nodes {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = BTreeSet::from([start.clone()]);
        let mut queue = VecDeque::from([start.as_str()]);
        while let Some(n) = queue.pop_front() {
            for &m in &adj[n] {
                if seen.insert(m) {
                    comp.insert(m.to_owned());
                    queue.push_back(m);
                }
            }
        }
        components.push(comp);
    }
    components
}

pub fn component_stats(g: &SocialGraphData) -> Result<ComponentStats> {
    if g.nodes.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let components = connected_components(g);
    let mut comp_of: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, c) in components.iter().enumerate() {
        for n in c {
            comp_of.insert(n, i);
        }
    }
    let mut edge_counts = vec![0usize; components.len()];
    for (a, _) in g.edges.keys() {
        edge_counts[comp_of[a.as_str()]] += 1;
    }
    // largest by node count, then edge count; components are already in
    // smallest-member order so the first maximum wins remaining ties
    let mut largest = 0;
    for i in 1..components.len() {
        let key = (components[i].len(), edge_counts[i]);
        if key > (components[largest].len(), edge_counts[largest]) {
            largest = i;
        }
    }
    let n = components.len() as f64;
    Ok(ComponentStats {
        component_count: components.len(),
        mean_nodes: g.nodes.len() as f64 / n,
        mean_edges: g.edges.len() as f64 / n,
        largest_nodes: components[largest].len(),
        largest_edges: edge_counts[largest],
    })
}

const EDGE_HEADER: [&str; 3] = ["source", "target", "weight"];

/// Writes `source,target,weight` rows sorted by `(source, target)`.
pub fn write_edge_list<W: std::io::Write>(g: &SocialGraphData, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EDGE_HEADER)?;
    for ((a, b), weight) in &g.edges {
        w.write_record([a.as_str(), b.as_str(), &weight.to_string()])?;
    }
    w.flush()
}

pub fn export_edge_list(g: &SocialGraphData, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::write(path, e))?;
    write_edge_list(g, std::io::BufWriter::new(file)).map_err(|e| Error::write(path, e))
}

/// Reads an edge list back. Nodes are the edge endpoints; isolated nodes
/// and the meeting index are not recoverable from the file.
pub fn import_edge_list(path: &Path) -> Result<SocialGraphData> {
    let bad = |message: String| Error::EdgeList {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().ne(EDGE_HEADER) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut g = SocialGraphData::default();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let (a, b) = (rec[0].to_owned(), rec[1].to_owned());
        let weight: u32 = rec[2]
            .parse()
            .map_err(|_| bad(format!("row {}: bad weight {:?}", i + 2, &rec[2])))?;
        if a == b || weight == 0 {
            return Err(bad(format!("row {}: self-loop or zero weight", i + 2)));
        }
        let key = if a < b { (a, b) } else { (b, a) };
        g.nodes.insert(key.0.clone());
        g.nodes.insert(key.1.clone());
        g.edges.insert(key, weight);
    }
    Ok(g)
}
