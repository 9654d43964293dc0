//! Hypergraph representation, dual incidence, dense node-edge pair indexing,
//! text-file I/O, and seeded random generation.
//!
//! Text format: UTF-8, one edge per line, whitespace-separated non-negative
//! integer node ids; lines starting with `#` are ignored. Node ids in files
//! may be sparse; the loader densifies them (sorted by original id) and
//! returns the mapping so callers can emit it as a two-column CSV.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HypergraphError {
    #[error("line {line}: edge is empty")]
    EmptyEdge { line: usize },
    #[error("line {line}: duplicate node {node} within one edge")]
    DuplicateNode { line: usize, node: u64 },
    #[error("line {line}: cannot parse {token:?} as a node id")]
    ParseToken { line: usize, token: String },
    #[error("edge {edge}: node id {node} out of range for {n} nodes")]
    NodeOutOfRange { edge: usize, node: usize, n: usize },
    #[error("hypergraph has no edges")]
    NoEdges,
    #[error("requested edge size {size} exceeds node count {n}")]
    EdgeSizeTooLarge { size: usize, n: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Immutable node/edge incidence structure.
///
/// Node ids are dense in `[0, n)` and edge ids in `[0, m)`; member order
/// within an edge is preserved as constructed but carries no meaning (all
/// algorithms are order-insensitive).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypergraph {
    n: usize,
    members: Vec<Vec<usize>>,
    incident: Vec<Vec<usize>>,
}

impl Hypergraph {
    /// Build from per-edge member lists, validating every invariant:
    /// non-empty edges, no duplicate node within an edge, ids in range.
    pub fn new(n: usize, members: Vec<Vec<usize>>) -> Result<Self, HypergraphError> {
        let mut incident = vec![Vec::new(); n];
        for (e, edge) in members.iter().enumerate() {
            if edge.is_empty() {
                return Err(HypergraphError::EmptyEdge { line: e + 1 });
            }
            let mut seen = HashSet::with_capacity(edge.len());
            for &v in edge {
                if v >= n {
                    return Err(HypergraphError::NodeOutOfRange { edge: e, node: v, n });
                }
                if !seen.insert(v) {
                    return Err(HypergraphError::DuplicateNode { line: e + 1, node: v as u64 });
                }
                incident[v].push(e);
            }
        }
        Ok(Self { n, members, incident })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.members.len()
    }

    /// Nodes of edge `e`, in stored order.
    pub fn members(&self, e: usize) -> &[usize] {
        &self.members[e]
    }

    /// Edges containing node `v`, in ascending edge id order.
    pub fn incident(&self, v: usize) -> &[usize] {
        &self.incident[v]
    }

    pub fn node_degree(&self, v: usize) -> usize {
        self.incident[v].len()
    }

    pub fn edge_degree(&self, e: usize) -> usize {
        self.members[e].len()
    }

    /// Total pair count `P = sum_e d_e = sum_v d_v`.
    pub fn pair_count(&self) -> usize {
        self.members.iter().map(Vec::len).sum()
    }

    pub fn edge_lists(&self) -> &[Vec<usize>] {
        &self.members
    }
}

/// Dense indexing of the node-edge pairs `{(v, e) : v in e}`.
///
/// Pair ids are assigned edge by edge (edges in id order, members in stored
/// order), so `edge_slice(e)` is a run of consecutive ids.
#[derive(Debug, Clone)]
pub struct PairIndex {
    pair_nodes: Vec<usize>,
    pair_edges: Vec<usize>,
    pair_to_id: HashMap<(usize, usize), usize>,
    edge_slice: Vec<Vec<usize>>,
    node_slice: Vec<Vec<usize>>,
}

impl PairIndex {
    pub fn pair_count(&self) -> usize {
        self.pair_nodes.len()
    }

    /// Dense id of the pair `(v, e)`, if `v` is a member of `e`.
    pub fn pair_id(&self, v: usize, e: usize) -> Option<usize> {
        self.pair_to_id.get(&(v, e)).copied()
    }

    pub fn node_of(&self, pair: usize) -> usize {
        self.pair_nodes[pair]
    }

    pub fn edge_of(&self, pair: usize) -> usize {
        self.pair_edges[pair]
    }

    /// Pair ids of edge `e`, aligned with `Hypergraph::members(e)`.
    pub fn edge_slice(&self, e: usize) -> &[usize] {
        &self.edge_slice[e]
    }

    /// Pair ids of node `v`, aligned with `Hypergraph::incident(v)`.
    pub fn node_slice(&self, v: usize) -> &[usize] {
        &self.node_slice[v]
    }

    pub fn edge_slices(&self) -> &[Vec<usize>] {
        &self.edge_slice
    }

    pub fn node_slices(&self) -> &[Vec<usize>] {
        &self.node_slice
    }
}

/// Build the pair index for a hypergraph.
pub fn build_pair_index(h: &Hypergraph) -> PairIndex {
    let p = h.pair_count();
    let mut pair_nodes = Vec::with_capacity(p);
    let mut pair_edges = Vec::with_capacity(p);
    let mut pair_to_id = HashMap::with_capacity(p);
    let mut edge_slice = Vec::with_capacity(h.edge_count());
    let mut node_slice = vec![Vec::new(); h.node_count()];
    for e in 0..h.edge_count() {
        let mut slice = Vec::with_capacity(h.edge_degree(e));
        for &v in h.members(e) {
            let id = pair_nodes.len();
            pair_nodes.push(v);
            pair_edges.push(e);
            pair_to_id.insert((v, e), id);
            slice.push(id);
            node_slice[v].push(id);
        }
        edge_slice.push(slice);
    }
    PairIndex { pair_nodes, pair_edges, pair_to_id, edge_slice, node_slice }
}

/// Mapping from original file node ids to the dense ids used in-memory,
/// ascending by original id.
pub type IdRemap = Vec<(u64, usize)>;

/// Load a hypergraph from the text format, densifying node ids.
pub fn load_hypergraph(path: &Path) -> Result<(Hypergraph, IdRemap), HypergraphError> {
    let content = fs::read_to_string(path)?;
    parse_hypergraph(&content)
}

/// Parse the text format from a string. See [`load_hypergraph`].
pub fn parse_hypergraph(content: &str) -> Result<(Hypergraph, IdRemap), HypergraphError> {
    let mut raw_edges: Vec<Vec<u64>> = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim_start().starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            return Err(HypergraphError::EmptyEdge { line: line_no });
        }
        let mut edge = Vec::with_capacity(tokens.len());
        let mut seen = HashSet::new();
        for token in tokens {
            let id: u64 = token
                .parse()
                .map_err(|_| HypergraphError::ParseToken { line: line_no, token: token.to_string() })?;
            if !seen.insert(id) {
                return Err(HypergraphError::DuplicateNode { line: line_no, node: id });
            }
            edge.push(id);
        }
        raw_edges.push(edge);
    }
    if raw_edges.is_empty() {
        return Err(HypergraphError::NoEdges);
    }

    let mut ids: Vec<u64> = raw_edges.iter().flatten().copied().collect();
    ids.sort_unstable();
    ids.dedup();
    let remap: HashMap<u64, usize> = ids.iter().enumerate().map(|(d, &o)| (o, d)).collect();
    let members = raw_edges
        .iter()
        .map(|edge| edge.iter().map(|id| remap[id]).collect())
        .collect();
    let h = Hypergraph::new(ids.len(), members)?;
    Ok((h, ids.into_iter().enumerate().map(|(d, o)| (o, d)).collect()))
}

/// Write a hypergraph in the text format; round-trips with
/// [`load_hypergraph`] whenever every node occurs in some edge.
pub fn write_hypergraph(h: &Hypergraph, path: &Path) -> Result<(), HypergraphError> {
    if h.edge_count() == 0 {
        return Err(HypergraphError::NoEdges);
    }
    let mut out = String::new();
    for e in 0..h.edge_count() {
        let line: Vec<String> = h.members(e).iter().map(usize::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Write the id remap as a two-column CSV `(original_id, dense_id)`.
pub fn write_id_remap(remap: &IdRemap, path: &Path) -> Result<(), HypergraphError> {
    let mut out = String::from("original_id,dense_id\n");
    for (orig, dense) in remap {
        out.push_str(&format!("{orig},{dense}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Edge size distribution for random generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreeLaw {
    /// Sizes drawn uniformly from `lo..=hi`.
    Uniform { lo: usize, hi: usize },
    /// Every edge has exactly this size.
    Fixed(usize),
}

impl DegreeLaw {
    fn bounds(&self) -> (usize, usize) {
        match *self {
            DegreeLaw::Uniform { lo, hi } => (lo, hi),
            DegreeLaw::Fixed(k) => (k, k),
        }
    }

    fn sample(&self, rng: &mut ChaCha12Rng) -> usize {
        match *self {
            DegreeLaw::Uniform { lo, hi } => rng.random_range(lo..=hi),
            DegreeLaw::Fixed(k) => k,
        }
    }
}

/// Generate a random hypergraph with the given edge-size law; reproducible
/// for a fixed seed. Members within each edge are stored ascending.
pub fn random_hypergraph(
    n: usize,
    m: usize,
    degree_law: DegreeLaw,
    seed: u64,
) -> Result<Hypergraph, HypergraphError> {
    if n < 2 {
        return Err(HypergraphError::InvalidParams(format!("need n >= 2, got {n}")));
    }
    if m < 1 {
        return Err(HypergraphError::InvalidParams(format!("need m >= 1, got {m}")));
    }
    let (lo, hi) = degree_law.bounds();
    if lo < 2 || hi < lo {
        return Err(HypergraphError::InvalidParams(format!(
            "edge sizes must satisfy 2 <= lo <= hi, got {lo}..={hi}"
        )));
    }
    if hi > n {
        return Err(HypergraphError::EdgeSizeTooLarge { size: hi, n });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut members = Vec::with_capacity(m);
    for _ in 0..m {
        let size = degree_law.sample(&mut rng);
        let mut edge: HashSet<usize> = HashSet::with_capacity(size);
        while edge.len() < size {
            edge.insert(rng.random_range(0..n));
        }
        let mut edge: Vec<usize> = edge.into_iter().collect();
        edge.sort_unstable();
        members.push(edge);
    }
    Hypergraph::new(n, members)
}
