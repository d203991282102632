//! The multi-edge directed trade graph and record-level accounting.
//!
//! Nodes are wallet addresses mapped to dense ids in first-appearance order;
//! every accepted transfer is one edge. The graph is immutable once built.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::ingest::TransferRecord;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph has no edges after filtering")]
    EmptyGraph,
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad snapshot: {0}")]
    Snapshot(String),
}

/// Dense node identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    In,
    Out,
    Total,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeAttrs {
    pub tx_hash: String,
    pub timestamp: DateTime<Utc>,
    pub price_usd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub attrs: EdgeAttrs,
}

/// Compressed adjacency: `targets[offsets[v]..offsets[v + 1]]` belong to node `v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Csr {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Csr {
    fn from_lists(lists: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut targets = Vec::new();
        for list in lists {
            targets.extend(list);
            offsets.push(targets.len());
        }
        Csr { offsets, targets }
    }

    pub(crate) fn row(&self, v: usize) -> &[u32] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    fn nodes(&self) -> usize {
        self.offsets.len() - 1
    }
}

#[derive(Debug, Clone)]
pub struct TradeGraph {
    addresses: Vec<String>,
    index: HashMap<String, NodeId>,
    edges: Vec<Edge>,
    // Edge ids grouped by source / destination, ascending within each node.
    out_edges: Csr,
    in_edges: Csr,
}

impl PartialEq for TradeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.addresses == other.addresses && self.edges == other.edges
    }
}

/// Builds the trade graph: one edge per record. With `include_mint_burn == false`
/// every record touching the zero address is dropped first.
pub fn build_graph(records: &[TransferRecord], include_mint_burn: bool) -> Result<TradeGraph, GraphError> {
    let mut addresses = Vec::new();
    let mut index = HashMap::new();
    let mut edges = Vec::with_capacity(records.len());
    let mut intern = |addr: &str| -> NodeId {
        *index.entry(addr.to_string()).or_insert_with(|| {
            addresses.push(addr.to_string());
            NodeId((addresses.len() - 1) as u32)
        })
    };
    for rec in records {
        if !include_mint_burn && rec.touches_mint_burn() {
            continue;
        }
        let src = intern(&rec.from_address);
        let dst = intern(&rec.to_address);
        edges.push(Edge {
            src,
            dst,
            attrs: EdgeAttrs { tx_hash: rec.tx_hash.clone(), timestamp: rec.timestamp, price_usd: rec.price_usd },
        });
    }
    if edges.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    Ok(TradeGraph::assemble(addresses, index, edges))
}

impl TradeGraph {
    fn assemble(addresses: Vec<String>, index: HashMap<String, NodeId>, edges: Vec<Edge>) -> Self {
        let n = addresses.len();
        let mut outs = vec![Vec::new(); n];
        let mut ins = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            outs[e.src.index()].push(i as u32);
            ins[e.dst.index()].push(i as u32);
        }
        TradeGraph { addresses, index, edges, out_edges: Csr::from_lists(outs), in_edges: Csr::from_lists(ins) }
    }

    /// Builds a graph over `node_count` synthetic nodes named `n0`, `n1`, ...
    /// Edges carry empty attributes. Intended for fixtures and property tests.
    pub fn from_edge_list(node_count: usize, pairs: &[(u32, u32)]) -> Self {
        let addresses: Vec<String> = (0..node_count).map(|i| format!("n{i}")).collect();
        Self::from_named_edges(addresses, pairs)
    }

    /// Like [`TradeGraph::from_edge_list`] with caller-chosen addresses.
    pub fn from_named_edges(addresses: Vec<String>, pairs: &[(u32, u32)]) -> Self {
        let index = addresses.iter().enumerate().map(|(i, a)| (a.clone(), NodeId(i as u32))).collect();
        let epoch = DateTime::<Utc>::UNIX_EPOCH;
        let edges = pairs
            .iter()
            .map(|&(s, d)| {
                assert!((s as usize) < addresses.len() && (d as usize) < addresses.len());
                Edge {
                    src: NodeId(s),
                    dst: NodeId(d),
                    attrs: EdgeAttrs { tx_hash: String::new(), timestamp: epoch, price_usd: None },
                }
            })
            .collect();
        Self::assemble(addresses, index, edges)
    }

    pub fn node_count(&self) -> usize {
        self.addresses.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.addresses.len() as u32).map(NodeId)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn address(&self, node: NodeId) -> &str {
        &self.addresses[node.index()]
    }

    pub fn addresses(&self) -> &[String] {
        &self.addresses
    }

    pub fn node_id(&self, address: &str) -> Option<NodeId> {
        self.index.get(address).copied()
    }

    /// Edges leaving `node`, in edge order.
    pub fn out_edges(&self, node: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        self.out_edges.row(node.index()).iter().map(|&e| &self.edges[e as usize])
    }

    /// Edges entering `node`, in edge order.
    pub fn in_edges(&self, node: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        self.in_edges.row(node.index()).iter().map(|&e| &self.edges[e as usize])
    }

    /// Degree counting parallel edges individually.
    pub fn degree(&self, node: NodeId, direction: Direction) -> usize {
        let v = node.index();
        let out = self.out_edges.row(v).len();
        let inn = self.in_edges.row(v).len();
        match direction {
            Direction::Out => out,
            Direction::In => inn,
            Direction::Total => out + inn,
        }
    }

    /// Degree lookup by address.
    pub fn degree_of(&self, address: &str, direction: Direction) -> Result<usize, GraphError> {
        let node = self.node_id(address).ok_or_else(|| GraphError::UnknownNode(address.to_string()))?;
        Ok(self.degree(node, direction))
    }

    /// The `k` nodes with highest total degree, ties by address ascending.
    pub fn top_degree_nodes(&self, k: usize) -> Vec<(String, usize)> {
        let mut rows: Vec<(&str, usize)> =
            self.nodes().map(|n| (self.address(n), self.degree(n, Direction::Total))).collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        rows.into_iter().take(k).map(|(a, d)| (a.to_string(), d)).collect()
    }

    /// Directed graph with parallel edges collapsed (self-loops dropped).
    pub(crate) fn simple_directed(&self) -> SimpleDigraph {
        let n = self.node_count();
        let mut outs = vec![Vec::new(); n];
        let mut ins = vec![Vec::new(); n];
        for e in &self.edges {
            if e.src != e.dst {
                outs[e.src.index()].push(e.dst.0);
                ins[e.dst.index()].push(e.src.0);
            }
        }
        for list in outs.iter_mut().chain(ins.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        SimpleDigraph { out: Csr::from_lists(outs), inn: Csr::from_lists(ins) }
    }

    /// Undirected graph with parallel and antiparallel edges merged; the weight of
    /// `{u, v}` is the number of original edges between them in either direction.
    pub(crate) fn undirected(&self) -> UndirectedGraph {
        let n = self.node_count();
        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); n];
        for e in &self.edges {
            if e.src != e.dst {
                lists[e.src.index()].push(e.dst.0);
                lists[e.dst.index()].push(e.src.0);
            }
        }
        let mut neighbors = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for mut list in lists {
            list.sort_unstable();
            let mut nb = Vec::new();
            let mut w: Vec<f64> = Vec::new();
            for v in list {
                if nb.last() == Some(&v) {
                    *w.last_mut().unwrap() += 1.0;
                } else {
                    nb.push(v);
                    w.push(1.0);
                }
            }
            neighbors.push(nb);
            weights.push(w);
        }
        UndirectedGraph { adj: Csr::from_lists(neighbors), weights: weights.into_iter().flatten().collect() }
    }

    /// Number of original edges with both endpoints in `members`.
    pub fn induced_edge_count(&self, members: &[NodeId]) -> usize {
        let mut inside = vec![false; self.node_count()];
        for m in members {
            inside[m.index()] = true;
        }
        self.edges.iter().filter(|e| inside[e.src.index()] && inside[e.dst.index()]).count()
    }
}

/// Deduplicated directed adjacency.
#[derive(Debug, Clone)]
pub(crate) struct SimpleDigraph {
    out: Csr,
    inn: Csr,
}

impl SimpleDigraph {
    pub(crate) fn node_count(&self) -> usize {
        self.out.nodes()
    }

    pub(crate) fn out(&self, v: usize) -> &[u32] {
        self.out.row(v)
    }

    pub(crate) fn inn(&self, v: usize) -> &[u32] {
        self.inn.row(v)
    }

    pub(crate) fn edge_count(&self) -> usize {
        self.out.targets.len()
    }

    pub(crate) fn has_edge(&self, u: usize, v: u32) -> bool {
        self.out(u).binary_search(&v).is_ok()
    }
}

/// Simple undirected adjacency with multiplicity weights.
#[derive(Debug, Clone)]
pub(crate) struct UndirectedGraph {
    adj: Csr,
    weights: Vec<f64>,
}

impl UndirectedGraph {
    pub(crate) fn node_count(&self) -> usize {
        self.adj.nodes()
    }

    pub(crate) fn neighbors(&self, v: usize) -> &[u32] {
        self.adj.row(v)
    }

    pub(crate) fn weights(&self, v: usize) -> &[f64] {
        &self.weights[self.adj.offsets[v]..self.adj.offsets[v + 1]]
    }

    pub(crate) fn degree(&self, v: usize) -> usize {
        self.neighbors(v).len()
    }

    #[cfg(test)]
    pub(crate) fn edge_count(&self) -> usize {
        self.adj.targets.len() / 2
    }
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"TNLGRAPH";
const SNAPSHOT_VERSION: u32 = 1;

impl TradeGraph {
    /// Writes the binary snapshot described in the README.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<(), GraphError> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(self.addresses.len() as u64).to_le_bytes())?;
        for a in &self.addresses {
            write_str(&mut w, a)?;
        }
        w.write_all(&(self.edges.len() as u64).to_le_bytes())?;
        for e in &self.edges {
            w.write_all(&e.src.0.to_le_bytes())?;
            w.write_all(&e.dst.0.to_le_bytes())?;
            w.write_all(&e.attrs.timestamp.timestamp().to_le_bytes())?;
            w.write_all(&[e.attrs.price_usd.is_some() as u8])?;
            w.write_all(&e.attrs.price_usd.unwrap_or(0.0).to_le_bytes())?;
            write_str(&mut w, &e.attrs.tx_hash)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self, GraphError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(GraphError::Snapshot("bad magic".into()));
        }
        let version = u32::from_le_bytes(read_array(&mut r)?);
        if version != SNAPSHOT_VERSION {
            return Err(GraphError::Snapshot(format!("unsupported version {version}")));
        }
        let n = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let mut addresses = Vec::with_capacity(n.min(1 << 20));
        let mut index = HashMap::new();
        for i in 0..n {
            let a = read_str(&mut r)?;
            if index.insert(a.clone(), NodeId(i as u32)).is_some() {
                return Err(GraphError::Snapshot(format!("duplicate node `{a}`")));
            }
            addresses.push(a);
        }
        let m = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let mut edges = Vec::with_capacity(m.min(1 << 24));
        for _ in 0..m {
            let src = u32::from_le_bytes(read_array(&mut r)?);
            let dst = u32::from_le_bytes(read_array(&mut r)?);
            if src as usize >= n || dst as usize >= n {
                return Err(GraphError::Snapshot("edge endpoint out of range".into()));
            }
            let secs = i64::from_le_bytes(read_array(&mut r)?);
            let timestamp = DateTime::from_timestamp(secs, 0)
                .ok_or_else(|| GraphError::Snapshot("timestamp out of range".into()))?;
            let [has_price] = read_array::<_, 1>(&mut r)?;
            let price = f64::from_le_bytes(read_array(&mut r)?);
            let tx_hash = read_str(&mut r)?;
            edges.push(Edge {
                src: NodeId(src),
                dst: NodeId(dst),
                attrs: EdgeAttrs { tx_hash, timestamp, price_usd: (has_price != 0).then_some(price) },
            });
        }
        Ok(Self::assemble(addresses, index, edges))
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> std::io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_str<R: Read>(r: &mut R) -> Result<String, GraphError> {
    let len = u32::from_le_bytes(read_array(r)?) as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| GraphError::Snapshot("invalid utf-8 string".into()))
}

/// A transfer that could not be replayed because its sender did not hold the token.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProvenanceConflict {
    pub tx_hash: String,
    pub contract_address: String,
    pub token_id: String,
    pub from_address: String,
    pub holder: Option<String>,
}

/// Token holdings after replaying all transfers.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OwnershipTable {
    /// Holder address → number of tokens held (only non-zero entries).
    pub holdings: BTreeMap<String, u64>,
    pub minted: u64,
    pub burned: u64,
    pub conflicts: Vec<ProvenanceConflict>,
}

impl OwnershipTable {
    pub fn total_held(&self) -> u64 {
        self.holdings.values().sum()
    }

    /// Histogram: tokens held → number of addresses holding that many.
    pub fn holding_histogram(&self) -> BTreeMap<u64, u64> {
        let mut hist = BTreeMap::new();
        for &c in self.holdings.values() {
            *hist.entry(c).or_insert(0) += 1;
        }
        hist
    }
}

/// Replays transfers per `(contract, token_id)` in timestamp order (input order
/// breaks ties). Mints create tokens, burns destroy them, and a transfer whose
/// sender is not the current holder is recorded as a conflict and skipped.
pub fn ownership_table(records: &[TransferRecord]) -> OwnershipTable {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| records[i].timestamp);

    let mut holder: HashMap<(&str, &str), &str> = HashMap::new();
    let mut table = OwnershipTable::default();
    let mut counts: HashMap<&str, u64> = HashMap::new();

    for i in order {
        let rec = &records[i];
        let key = (rec.contract_address.as_str(), rec.token_id.as_str());
        let current = holder.get(&key).copied();
        let valid = match current {
            None => rec.is_mint(),
            Some(h) => h == rec.from_address,
        };
        if !valid {
            table.conflicts.push(ProvenanceConflict {
                tx_hash: rec.tx_hash.clone(),
                contract_address: rec.contract_address.clone(),
                token_id: rec.token_id.clone(),
                from_address: rec.from_address.clone(),
                holder: current.map(str::to_string),
            });
            continue;
        }
        match current {
            None => table.minted += 1,
            Some(h) => {
                let c = counts.get_mut(h).expect("holder has a count");
                *c -= 1;
            }
        }
        if rec.is_burn() {
            holder.remove(&key);
            table.burned += 1;
        } else {
            holder.insert(key, rec.to_address.as_str());
            *counts.entry(rec.to_address.as_str()).or_insert(0) += 1;
        }
    }
    table.holdings = counts.into_iter().filter(|&(_, c)| c > 0).map(|(a, c)| (a.to_string(), c)).collect();
    table
}

/// Per-address buy/sell aggregates. A volume is `None` when none of the
/// contributing edges carried a price.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TraderVolume {
    pub bought_count: u64,
    pub sold_count: u64,
    pub bought_volume_usd: Option<f64>,
    pub sold_volume_usd: Option<f64>,
}

fn add_volume(acc: &mut Option<f64>, price: Option<f64>) {
    if let Some(p) = price {
        *acc = Some(acc.unwrap_or(0.0) + p);
    }
}

/// Sold = out-edge aggregate, bought = in-edge aggregate; indexed by node id.
pub fn trader_volume(graph: &TradeGraph) -> Vec<TraderVolume> {
    let mut out = vec![TraderVolume::default(); graph.node_count()];
    for e in graph.edges() {
        let seller = &mut out[e.src.index()];
        seller.sold_count += 1;
        add_volume(&mut seller.sold_volume_usd, e.attrs.price_usd);
        let buyer = &mut out[e.dst.index()];
        buyer.bought_count += 1;
        add_volume(&mut buyer.bought_volume_usd, e.attrs.price_usd);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearSummary {
    pub year: i32,
    pub transactions: u64,
    pub total_volume_usd: f64,
    /// Mean over priced records only; absent when no record that year had a price.
    pub average_price_usd: Option<f64>,
}

pub fn yearly_summary(records: &[TransferRecord]) -> Vec<YearSummary> {
    let mut years: BTreeMap<i32, (u64, u64, f64)> = BTreeMap::new();
    for r in records {
        let entry = years.entry(r.timestamp.year()).or_insert((0, 0, 0.0));
        entry.0 += 1;
        if let Some(p) = r.price_usd {
            entry.1 += 1;
            entry.2 += p;
        }
    }
    years
        .into_iter()
        .map(|(year, (transactions, priced, total))| YearSummary {
            year,
            transactions,
            total_volume_usd: total,
            average_price_usd: (priced > 0).then(|| total / priced as f64),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailySales {
    pub date: NaiveDate,
    pub sales: u64,
    pub volume_usd: f64,
}

/// Transfers per calendar day, one row for every day between the first and
/// last record (days without transfers have zero sales).
pub fn daily_sales(records: &[TransferRecord]) -> Vec<DailySales> {
    let mut by_day: BTreeMap<NaiveDate, (u64, f64)> = BTreeMap::new();
    for r in records {
        let e = by_day.entry(r.timestamp.date_naive()).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += r.price_usd.unwrap_or(0.0);
    }
    let (Some((&first, _)), Some((&last, _))) = (by_day.first_key_value(), by_day.last_key_value()) else {
        return Vec::new();
    };
    first
        .iter_days()
        .take_while(|d| *d <= last)
        .map(|date| {
            let (sales, volume_usd) = by_day.get(&date).copied().unwrap_or((0, 0.0));
            DailySales { date, sales, volume_usd }
        })
        .collect()
}
