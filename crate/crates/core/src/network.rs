//! Thresholded correlation networks over `rho_DCCA` matrices, modularity
//! communities, and era metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dcca::DccaMatrix;
use crate::error::{Error, Result};
use crate::series::RatePanel;

pub const DEFAULT_THRESHOLD: f64 = 0.8;
pub const DEFAULT_RESOLUTION: f64 = 1.0;
/// Scales of the default network snapshots.
pub const DEFAULT_NETWORK_SCALES: [usize; 3] = [50, 150, 250];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// Signed `rho`.
    pub weight: f64,
}

/// Undirected graph on series ids. Edges hold node indices with `a < b`,
/// sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationNetwork {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
    pub scale: usize,
    pub threshold: f64,
}

pub fn validate_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "threshold must lie in (0, 1], got {threshold}"
        )))
    }
}

/// Keeps `i != j` with `|rho_ij| >= threshold`.
pub fn build_network(m: &DccaMatrix, threshold: f64) -> Result<CorrelationNetwork> {
    validate_threshold(threshold)?;
    let n = m.len();
    let edges = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            (i + 1..n).filter_map(move |j| {
                let w = m.get(i, j);
                (w.abs() >= threshold).then_some(Edge {
                    a: i,
                    b: j,
                    weight: w,
                })
            })
        })
        .collect();
    Ok(CorrelationNetwork {
        nodes: m.ids.clone(),
        edges,
        scale: m.scale,
        threshold,
    })
}

impl CorrelationNetwork {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Builds a network directly from weighted edges on named nodes.
    pub fn from_edges(
        nodes: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
        scale: usize,
        threshold: f64,
    ) -> Result<Self> {
        let mut out: Vec<Edge> = Vec::new();
        for (a, b, weight) in edges {
            if a == b || a >= nodes.len() || b >= nodes.len() {
                return Err(Error::InvalidParameter(format!("bad edge ({a}, {b})")));
            }
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            out.push(Edge { a, b, weight });
        }
        out.sort_by_key(|e| (e.a, e.b));
        if out.windows(2).any(|w| (w[0].a, w[0].b) == (w[1].a, w[1].b)) {
            return Err(Error::InvalidParameter("duplicate edge".into()));
        }
        Ok(Self {
            nodes,
            edges: out,
            scale,
            threshold,
        })
    }

    /// `a,b,weight` rows with node ids.
    pub fn edge_table(&self) -> String {
        let mut out = String::from("a,b,weight\n");
        for e in &self.edges {
            let _ = writeln!(out, "{},{},{}", self.nodes[e.a], self.nodes[e.b], e.weight);
        }
        out
    }
}

/// Mean over nodes of the summed absolute incident weight.
pub fn average_weighted_degree(net: &CorrelationNetwork) -> f64 {
    if net.nodes.is_empty() {
        return 0.0;
    }
    let total = net
        .edges
        .iter()
        .fold(0.0, |acc, e| acc + 2.0 * e.weight.abs());
    total / net.nodes.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityPartition {
    /// Community label per node, in node order. Labels are numbered by the
    /// position of each community's first member.
    pub labels: Vec<usize>,
    pub nodes: Vec<String>,
    pub modularity_q: f64,
    pub resolution: f64,
    pub seed: u64,
    pub excluded_negative_edges: usize,
}

impl CommunityPartition {
    pub fn n_communities(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn label_of(&self, id: &str) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n == id)
            .map(|i| self.labels[i])
    }

    /// Member ids grouped by label.
    pub fn communities(&self) -> Vec<Vec<&str>> {
        let mut out = vec![Vec::new(); self.n_communities()];
        for (id, &l) in self.nodes.iter().zip(&self.labels) {
            out[l].push(id.as_str());
        }
        out
    }

    /// `id,community` rows.
    pub fn to_table(&self) -> String {
        let mut out = String::from("id,community\n");
        for (id, l) in self.nodes.iter().zip(&self.labels) {
            let _ = writeln!(out, "{id},{l}");
        }
        out
    }
}

const GAIN_EPS: f64 = 1e-12;

/// Weighted undirected graph in adjacency form; self-loops carry the
/// internal weight of aggregated communities.
#[derive(Debug, Clone)]
struct Graph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
}

impl Graph {
    fn n(&self) -> usize {
        self.adj.len()
    }

    fn degree(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|(_, w)| w).sum::<f64>() + 2.0 * self.self_loops[i]
    }

    fn total_weight(&self) -> f64 {
        (0..self.n()).map(|i| self.degree(i)).sum::<f64>() / 2.0
    }

    /// Positive edges of `net`; negative ones are dropped.
    fn positive(net: &CorrelationNetwork) -> Self {
        let n = net.nodes.len();
        let mut adj = vec![Vec::new(); n];
        for e in net.edges.iter().filter(|e| e.weight > 0.0) {
            adj[e.a].push((e.b, e.weight));
            adj[e.b].push((e.a, e.weight));
        }
        Graph {
            adj,
            self_loops: vec![0.0; n],
        }
    }
}

/// Louvain modularity maximisation on the positive edges (weights `|rho|`).
///
/// Nodes are visited in a seeded permutation of their canonical order, ties
/// in gain go to the smallest community label, and final labels are
/// renumbered by first member, so the result depends only on the network
/// and the seed.
pub fn detect_communities(
    net: &CorrelationNetwork,
    resolution: f64,
    seed: u64,
) -> Result<CommunityPartition> {
    if net.nodes.is_empty() {
        return Err(Error::InvalidParameter("network has no nodes".into()));
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    let n = net.nodes.len();
    let excluded = net.edges.iter().filter(|e| e.weight < 0.0).count();
    if excluded > 0 && excluded == net.edges.len() {
        return Err(Error::NoPositiveEdges);
    }
    let base = Graph::positive(net);
    let mut graph = base.clone();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // membership[original node] -> current super-node
    let mut membership: Vec<usize> = (0..n).collect();
    if graph.total_weight() > 0.0 {
        loop {
            let (moved, community) = one_level(&graph, resolution, &mut rng);
            if !moved {
                break;
            }
            let (renumbered, count) = renumber(&community);
            for m in membership.iter_mut() {
                *m = renumbered[*m];
            }
            if count == graph.n() {
                break;
            }
            graph = aggregate(&graph, &renumbered, count);
        }
    }
    let (labels, _) = renumber(&membership);
    Ok(CommunityPartition {
        modularity_q: modularity_of(&base, &labels, resolution),
        labels,
        nodes: net.nodes.clone(),
        resolution,
        seed,
        excluded_negative_edges: excluded,
    })
}

/// Local-moving phase. Returns whether any node moved and the community of
/// every node.
fn one_level(g: &Graph, resolution: f64, rng: &mut ChaCha8Rng) -> (bool, Vec<usize>) {
    let n = g.n();
    let m2 = 2.0 * g.total_weight();
    let degree: Vec<f64> = (0..n).map(|i| g.degree(i)).collect();
    let mut community: Vec<usize> = (0..n).collect();
    let mut tot = degree.clone();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut links = vec![0.0; n];
    let mut seen = vec![false; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut any_move = false;
    loop {
        let mut moved = false;
        for &i in &order {
            let own = community[i];
            for &(j, w) in &g.adj[i] {
                let c = community[j];
                if !seen[c] {
                    seen[c] = true;
                    touched.push(c);
                }
                links[c] += w;
            }
            tot[own] -= degree[i];
            let gain = |c: usize, links: &[f64]| links[c] - resolution * tot[c] * degree[i] / m2;
            // staying wins ties; otherwise the smallest label among equals
            let mut best = own;
            let mut best_gain = gain(own, &links);
            touched.sort_unstable();
            for &c in &touched {
                let g_c = gain(c, &links);
                if g_c > best_gain + GAIN_EPS {
                    best = c;
                    best_gain = g_c;
                }
            }
            tot[best] += degree[i];
            if best != own {
                community[i] = best;
                moved = true;
                any_move = true;
            }
            for &c in &touched {
                links[c] = 0.0;
                seen[c] = false;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
    }
    (any_move, community)
}

/// Dense labels in order of first appearance.
fn renumber(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

fn aggregate(g: &Graph, community: &[usize], count: usize) -> Graph {
    let mut weights: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); count];
    let mut self_loops = vec![0.0; count];
    for i in 0..g.n() {
        let ci = community[i];
        self_loops[ci] += g.self_loops[i];
        for &(j, w) in &g.adj[i] {
            let cj = community[j];
            if ci == cj {
                // each internal edge is seen from both ends
                self_loops[ci] += w / 2.0;
            } else {
                *weights[ci].entry(cj).or_insert(0.0) += w;
            }
        }
    }
    Graph {
        adj: weights
            .into_iter()
            .map(|m| m.into_iter().collect())
            .collect(),
        self_loops,
    }
}

fn modularity_of(g: &Graph, labels: &[usize], resolution: f64) -> f64 {
    let m = g.total_weight();
    if m <= 0.0 {
        return 0.0;
    }
    let k = labels.iter().max().map_or(0, |x| x + 1);
    let mut internal = vec![0.0; k];
    let mut tot = vec![0.0; k];
    for i in 0..g.n() {
        tot[labels[i]] += g.degree(i);
        internal[labels[i]] += 2.0 * g.self_loops[i];
        for &(j, w) in &g.adj[i] {
            if labels[j] == labels[i] {
                internal[labels[i]] += w;
            }
        }
    }
    internal
        .iter()
        .zip(&tot)
        .map(|(inn, t)| inn / (2.0 * m) - resolution * (t / (2.0 * m)).powi(2))
        .sum()
}

/// Newman modularity of an arbitrary labelling on the positive edges.
pub fn modularity(net: &CorrelationNetwork, labels: &[usize], resolution: f64) -> Result<f64> {
    if labels.len() != net.nodes.len() {
        return Err(Error::LengthMismatch(labels.len(), net.nodes.len()));
    }
    Ok(modularity_of(&Graph::positive(net), labels, resolution))
}

/// One restricted panel per inclusive `(from, to)` window.
pub fn split_periods(
    panel: &RatePanel,
    windows: &[(NaiveDate, NaiveDate)],
) -> Result<Vec<RatePanel>> {
    if windows.is_empty() {
        return Err(Error::InvalidParameter("no period windows".into()));
    }
    windows
        .iter()
        .map(|&(from, to)| {
            if from > to {
                return Err(Error::InvalidParameter(format!(
                    "window {from}..{to} is reversed"
                )));
            }
            let sub = panel.restrict(from, to);
            let count = sub.complete_rows();
            if count < 2 {
                return Err(Error::EmptyWindow { from, to, count });
            }
            Ok(sub)
        })
        .collect()
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// GraphML document; nodes carry a `community` attribute when a partition
/// is supplied, edges a `weight`.
pub fn to_graphml(net: &CorrelationNetwork, partition: Option<&CommunityPartition>) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    out.push_str(
        "  <key id=\"community\" for=\"node\" attr.name=\"community\" attr.type=\"int\"/>\n",
    );
    out.push_str("  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n");
    let _ = writeln!(
        out,
        "  <graph id=\"rho_s{}\" edgedefault=\"undirected\">",
        net.scale
    );
    for (i, id) in net.nodes.iter().enumerate() {
        match partition {
            Some(p) => {
                let _ = writeln!(
                    out,
                    "    <node id=\"{}\"><data key=\"community\">{}</data></node>",
                    xml_escape(id),
                    p.labels[i]
                );
            }
            None => {
                let _ = writeln!(out, "    <node id=\"{}\"/>", xml_escape(id));
            }
        }
    }
    for e in &net.edges {
        let _ = writeln!(
            out,
            "    <edge source=\"{}\" target=\"{}\"><data key=\"weight\">{}</data></edge>",
            xml_escape(&net.nodes[e.a]),
            xml_escape(&net.nodes[e.b]),
            e.weight
        );
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

pub fn to_dot(net: &CorrelationNetwork, partition: Option<&CommunityPartition>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "graph rho_s{} {{", net.scale);
    for (i, id) in net.nodes.iter().enumerate() {
        match partition {
            Some(p) => {
                let _ = writeln!(
                    out,
                    "    \"{}\" [community={}];",
                    dot_escape(id),
                    p.labels[i]
                );
            }
            None => {
                let _ = writeln!(out, "    \"{}\";", dot_escape(id));
            }
        }
    }
    for e in &net.edges {
        let _ = writeln!(
            out,
            "    \"{}\" -- \"{}\" [weight={}];",
            dot_escape(&net.nodes[e.a]),
            dot_escape(&net.nodes[e.b]),
            e.weight
        );
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::DetrendMethod;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i}")).collect()
    }

    fn matrix(rho: Vec<Vec<f64>>) -> DccaMatrix {
        DccaMatrix {
            ids: names(rho.len()),
            scale: 50,
            method: DetrendMethod::DFA1,
            rho,
        }
    }

    fn cliques(sizes: &[usize], w: f64) -> CorrelationNetwork {
        let total: usize = sizes.iter().sum();
        let mut edges = Vec::new();
        let mut start = 0;
        for &s in sizes {
            for i in start..start + s {
                for j in i + 1..start + s {
                    edges.push((i, j, w));
                }
            }
            start += s;
        }
        CorrelationNetwork::from_edges(names(total), edges, 50, 0.8).unwrap()
    }

    #[test]
    fn complete_graph_from_ones() {
        let net = build_network(&matrix(vec![vec![1.0; 4]; 4]), 0.8).unwrap();
        assert_eq!(net.n_edges(), 6);
        assert!(net.edges.iter().all(|e| e.weight == 1.0 && e.a < e.b));
    }

    #[test]
    fn weak_matrix_gives_no_edges() {
        let mut rho = vec![vec![0.5; 5]; 5];
        for (i, row) in rho.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let net = build_network(&matrix(rho), 0.8).unwrap();
        assert_eq!(net.n_edges(), 0);
        assert_eq!(average_weighted_degree(&net), 0.0);
    }

    #[test]
    fn negative_edges_kept_by_magnitude() {
        let rho = vec![
            vec![1.0, -0.9, 0.1],
            vec![-0.9, 1.0, 0.85],
            vec![0.1, 0.85, 1.0],
        ];
        let net = build_network(&matrix(rho), 0.8).unwrap();
        assert_eq!(net.n_edges(), 2);
        assert_eq!(net.edges[0].weight, -0.9);
        let p = detect_communities(&net, 1.0, 0).unwrap();
        assert_eq!(p.excluded_negative_edges, 1);
    }

    #[test]
    fn all_negative_edges_error() {
        let net = CorrelationNetwork::from_edges(names(3), [(0, 1, -0.9)], 50, 0.8).unwrap();
        assert!(matches!(
            detect_communities(&net, 1.0, 0),
            Err(Error::NoPositiveEdges)
        ));
    }

    #[test]
    fn threshold_validation() {
        let m = matrix(vec![vec![1.0; 2]; 2]);
        assert!(build_network(&m, 1.01).is_err());
        assert!(build_network(&m, 0.0).is_err());
        assert!(build_network(&m, 1.0).is_ok());
    }

    #[test]
    fn triangle_degree() {
        let net = CorrelationNetwork::from_edges(
            names(3),
            [(0, 1, 0.9), (1, 2, 0.9), (0, 2, 0.9)],
            50,
            0.8,
        )
        .unwrap();
        assert!((average_weighted_degree(&net) - 1.8).abs() < 1e-12);
        let empty = CorrelationNetwork::from_edges(Vec::new(), [], 50, 0.8).unwrap();
        assert_eq!(average_weighted_degree(&empty), 0.0);
    }

    #[test]
    fn two_cliques_split_for_every_seed() {
        let net = cliques(&[4, 5], 0.9);
        let first = detect_communities(&net, 1.0, 0).unwrap();
        for seed in 0..25 {
            let p = detect_communities(&net, 1.0, seed).unwrap();
            assert_eq!(p.labels, vec![0, 0, 0, 0, 1, 1, 1, 1, 1]);
            assert_eq!(p.labels, first.labels);
            assert!(p.modularity_q > 0.0 && p.modularity_q <= 1.0);
        }
    }

    #[test]
    fn complete_graph_is_one_community() {
        let net = cliques(&[7], 1.0);
        for seed in 0..10 {
            let p = detect_communities(&net, 1.0, seed).unwrap();
            assert_eq!(p.n_communities(), 1);
            assert!(p.modularity_q.abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_nodes_get_their_own_labels() {
        let net = CorrelationNetwork::from_edges(names(4), [(1, 2, 0.9)], 50, 0.8).unwrap();
        let p = detect_communities(&net, 1.0, 3).unwrap();
        assert_eq!(p.labels, vec![0, 1, 1, 2]);
        let empty = CorrelationNetwork::from_edges(names(3), [], 50, 0.8).unwrap();
        let p = detect_communities(&empty, 1.0, 3).unwrap();
        assert_eq!(p.labels, vec![0, 1, 2]);
        assert_eq!(p.modularity_q, 0.0);
    }

    #[test]
    fn modularity_matches_hand_computation() {
        // two triangles joined by one bridge, unit weights: m = 7
        let net = CorrelationNetwork::from_edges(
            names(6),
            [
                (0, 1, 1.0),
                (1, 2, 1.0),
                (0, 2, 1.0),
                (3, 4, 1.0),
                (4, 5, 1.0),
                (3, 5, 1.0),
                (2, 3, 1.0),
            ],
            50,
            0.8,
        )
        .unwrap();
        let q = modularity(&net, &[0, 0, 0, 1, 1, 1], 1.0).unwrap();
        let expected = 2.0 * (6.0 / 14.0 - (7.0f64 / 14.0).powi(2));
        assert!((q - expected).abs() < 1e-12);
        let p = detect_communities(&net, 1.0, 1).unwrap();
        assert_eq!(p.labels, vec![0, 0, 0, 1, 1, 1]);
        assert!((p.modularity_q - expected).abs() < 1e-12);
    }

    #[test]
    fn exports_carry_labels_and_weights() {
        let net = cliques(&[2, 2], 0.9);
        let p = detect_communities(&net, 1.0, 0).unwrap();
        let g = to_graphml(&net, Some(&p));
        assert!(g.contains("<node id=\"n2\"><data key=\"community\">1</data></node>"));
        assert!(
            g.contains("<edge source=\"n0\" target=\"n1\"><data key=\"weight\">0.9</data></edge>")
        );
        let d = to_dot(&net, Some(&p));
        assert!(d.starts_with("graph rho_s50 {\n"));
        assert!(d.contains("\"n3\" [community=1];"));
        assert!(d.contains("\"n2\" -- \"n3\" [weight=0.9];"));
        assert_eq!(p.to_table(), "id,community\nn0,0\nn1,0\nn2,1\nn3,1\n");
        assert_eq!(xml_escape("a<b&\"c\""), "a&lt;b&amp;&quot;c&quot;");
    }
}
