//! Network semantics: reciprocity, assortativity, components, k-cores,
//! degree histograms and the rank-frequency Zipf fit.

use std::collections::{BTreeMap, VecDeque};

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::graph::{Direction, NodeId, TradeGraph, UndirectedGraph};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("zipf fit needs at least 3 positive counts within the cutoff, found {0}")]
    TooFewPoints(usize),
}

/// Fraction of distinct directed links `(u, v)` whose reverse `(v, u)` also
/// exists. Parallel edges are collapsed first.
pub fn reciprocity(graph: &TradeGraph) -> Result<f64, MetricsError> {
    let simple = graph.simple_directed();
    let total = simple.edge_count();
    if total == 0 {
        return Err(MetricsError::EmptyGraph);
    }
    let mutual: usize = (0..simple.node_count())
        .map(|u| simple.out(u).iter().filter(|&&v| simple.has_edge(v as usize, u as u32)).count())
        .sum();
    Ok(mutual as f64 / total as f64)
}

/// Newman degree assortativity of the undirected simplification.
///
/// Returns `None` when the graph has no edges or every edge endpoint has the
/// same degree (zero variance).
pub fn assortativity(graph: &TradeGraph) -> Option<f64> {
    undirected_assortativity(&graph.undirected())
}

fn undirected_assortativity(g: &UndirectedGraph) -> Option<f64> {
    // Sums over both orientations of every edge, in exact integer arithmetic.
    let (mut count, mut s1, mut s2, mut sxy) = (0i128, 0i128, 0i128, 0i128);
    for u in 0..g.node_count() {
        let du = g.degree(u) as i128 - 1;
        for &v in g.neighbors(u) {
            let dv = g.degree(v as usize) as i128 - 1;
            count += 1;
            s1 += du;
            s2 += du * du;
            sxy += du * dv;
        }
    }
    let den = count * s2 - s1 * s1;
    if count == 0 || den == 0 {
        return None;
    }
    let num = count * sxy - s1 * s1;
    Some(num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentMode {
    Strong,
    Weak,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Components {
    pub mode: ComponentMode,
    /// Node sets sorted by size descending, then by smallest node id; members ascending.
    pub components: Vec<Vec<NodeId>>,
    pub giant_nodes: usize,
    /// Parallel edges with both endpoints in the giant component, counted individually.
    pub giant_edges: usize,
}

impl Components {
    pub fn count(&self) -> usize {
        self.components.len()
    }

    pub fn giant(&self) -> &[NodeId] {
        self.components.first().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Component index of every node.
    pub fn membership(&self, node_count: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; node_count];
        for (c, members) in self.components.iter().enumerate() {
            for m in members {
                out[m.index()] = c;
            }
        }
        out
    }
}

pub fn connected_components(graph: &TradeGraph, mode: ComponentMode) -> Components {
    let labels = match mode {
        ComponentMode::Strong => strong_labels(graph),
        ComponentMode::Weak => weak_labels(&graph.undirected()),
    };
    let groups = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut components: Vec<Vec<NodeId>> = vec![Vec::new(); groups];
    for (v, &c) in labels.iter().enumerate() {
        components[c].push(NodeId(v as u32));
    }
    components.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a[0].cmp(&b[0])));
    let giant_nodes = components.first().map_or(0, Vec::len);
    let giant_edges = components.first().map_or(0, |c| graph.induced_edge_count(c));
    Components { mode, components, giant_nodes, giant_edges }
}

fn weak_labels(g: &UndirectedGraph) -> Vec<usize> {
    let n = g.node_count();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = next;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &v in g.neighbors(u) {
                if label[v as usize] == usize::MAX {
                    label[v as usize] = next;
                    queue.push_back(v as usize);
                }
            }
        }
        next += 1;
    }
    label
}

/// Iterative Tarjan over the deduplicated digraph.
fn strong_labels(graph: &TradeGraph) -> Vec<usize> {
    let g = graph.simple_directed();
    let n = g.node_count();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut label = vec![UNSEEN; n];
    let mut next_index = 0;
    let mut next_label = 0;
    // (node, position in its out-list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (u, ref mut pos)) = call.last_mut() {
            if let Some(&w) = g.out(u).get(*pos) {
                *pos += 1;
                let w = w as usize;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[u] = low[u].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[u]);
            }
            if low[u] == index[u] {
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    label[w] = next_label;
                    if w == u {
                        break;
                    }
                }
                next_label += 1;
            }
        }
    }
    label
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KCore {
    pub k: usize,
    pub nodes: Vec<NodeId>,
    /// Original (multi)edges with both endpoints in the core.
    pub edges: usize,
}

/// Maximal subgraph of the undirected simplification in which every node has
/// degree at least `k`.
pub fn k_core(graph: &TradeGraph, k: usize) -> KCore {
    let all: Vec<NodeId> = graph.nodes().collect();
    k_core_within(graph, &all, k)
}

/// k-core of the subgraph induced by `members`.
pub fn k_core_within(graph: &TradeGraph, members: &[NodeId], k: usize) -> KCore {
    let g = graph.undirected();
    let n = g.node_count();
    let mut alive = vec![false; n];
    for m in members {
        alive[m.index()] = true;
    }
    let mut degree: Vec<usize> = (0..n)
        .map(|u| if alive[u] { g.neighbors(u).iter().filter(|&&v| alive[v as usize]).count() } else { 0 })
        .collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&u| alive[u] && degree[u] < k).collect();
    let mut queued: Vec<bool> = (0..n).map(|u| alive[u] && degree[u] < k).collect();
    while let Some(u) = queue.pop_front() {
        alive[u] = false;
        for &v in g.neighbors(u) {
            let v = v as usize;
            if alive[v] && !queued[v] {
                degree[v] -= 1;
                if degree[v] < k {
                    queued[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    let nodes: Vec<NodeId> = (0..n).filter(|&u| alive[u]).map(|u| NodeId(u as u32)).collect();
    let edges = graph.induced_edge_count(&nodes);
    KCore { k, nodes, edges }
}

/// Histogram degree → number of nodes. Parallel edges count individually.
pub fn degree_distribution(graph: &TradeGraph, direction: Direction) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for v in graph.nodes() {
        *hist.entry(graph.degree(v, direction)).or_insert(0) += 1;
    }
    hist
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZipfFit {
    /// Slope of ln(count) against ln(rank).
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub cutoff: u64,
    pub points: usize,
}

/// Rank-frequency pairs used by [`zipf_fit`]: positive counts at or below the
/// cutoff, sorted descending (stable), ranked from 1.
pub fn rank_frequency(counts: &[f64], cutoff: u64) -> Vec<(usize, f64)> {
    let mut kept: Vec<f64> = counts.iter().copied().filter(|&c| c >= 1.0 && c <= cutoff as f64).collect();
    kept.sort_by(|a, b| b.total_cmp(a));
    kept.into_iter().enumerate().map(|(i, c)| (i + 1, c)).collect()
}

/// Ordinary least squares of ln(count) on ln(rank).
pub fn zipf_fit(counts: &[f64], cutoff: u64) -> Result<ZipfFit, MetricsError> {
    let pairs = rank_frequency(counts, cutoff);
    let n = pairs.len();
    if n < 3 {
        return Err(MetricsError::TooFewPoints(n));
    }
    let xs: Vec<f64> = pairs.iter().map(|&(r, _)| (r as f64).ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|&(_, c)| c.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + exponent * x);
            r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(ZipfFit { exponent, intercept, r_squared, cutoff, points: n })
}

/// The aggregate semantics table for one graph snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSemantics {
    pub node_count: usize,
    pub edge_count: usize,
    pub reciprocity: f64,
    pub assortativity: Option<f64>,
    pub scc_count: usize,
    pub max_scc_nodes: usize,
    pub max_scc_edges: usize,
    pub wcc_count: usize,
    pub max_wcc_nodes: usize,
    pub max_wcc_edges: usize,
    pub kcore_k: usize,
    /// k-core of the giant weakly connected component.
    pub kcore_nodes: usize,
    pub kcore_edges: usize,
    /// k-core of the giant strongly connected component.
    pub scc_kcore_nodes: usize,
    pub scc_kcore_edges: usize,
}

impl Serialize for NetworkSemantics {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        // Flat object keyed like the classic transaction-network table rows.
        #[derive(Serialize)]
        struct Row {
            reciprocity: f64,
            assortativity: Option<f64>,
            strong_nodes: usize,
            max_scc_nodes: usize,
            max_scc_edges: usize,
            weak_nodes: usize,
            max_wcc_nodes: usize,
            max_wcc_edges: usize,
            wcc_nodes: usize,
            wcc_edges: usize,
            sc_nodes: usize,
            sc_edges: usize,
            scc_count: usize,
            wcc_count: usize,
            kcore_k: usize,
            node_count: usize,
            edge_count: usize,
        }
        Row {
            reciprocity: self.reciprocity,
            assortativity: self.assortativity,
            strong_nodes: self.scc_count,
            max_scc_nodes: self.max_scc_nodes,
            max_scc_edges: self.max_scc_edges,
            weak_nodes: self.wcc_count,
            max_wcc_nodes: self.max_wcc_nodes,
            max_wcc_edges: self.max_wcc_edges,
            wcc_nodes: self.kcore_nodes,
            wcc_edges: self.kcore_edges,
            sc_nodes: self.scc_kcore_nodes,
            sc_edges: self.scc_kcore_edges,
            scc_count: self.scc_count,
            wcc_count: self.wcc_count,
            kcore_k: self.kcore_k,
            node_count: self.node_count,
            edge_count: self.edge_count,
        }
        .serialize(s)
    }
}

pub fn semantics_bundle(graph: &TradeGraph, kcore_k: usize) -> Result<NetworkSemantics, MetricsError> {
    let reciprocity = reciprocity(graph)?;
    let strong = connected_components(graph, ComponentMode::Strong);
    let weak = connected_components(graph, ComponentMode::Weak);
    let wcc_core = k_core_within(graph, weak.giant(), kcore_k);
    let scc_core = k_core_within(graph, strong.giant(), kcore_k);
    Ok(NetworkSemantics {
        node_count: graph.node_count(),
        edge_count: graph.edge_count(),
        reciprocity,
        assortativity: assortativity(graph),
        scc_count: strong.count(),
        max_scc_nodes: strong.giant_nodes,
        max_scc_edges: strong.giant_edges,
        wcc_count: weak.count(),
        max_wcc_nodes: weak.giant_nodes,
        max_wcc_edges: weak.giant_edges,
        kcore_k,
        kcore_nodes: wcc_core.nodes.len(),
        kcore_edges: wcc_core.edges,
        scc_kcore_nodes: scc_core.nodes.len(),
        scc_kcore_edges: scc_core.edges,
    })
}
