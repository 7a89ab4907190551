//! Physical network topologies: generators, file loaders and graph metrics.
//!
//! A topology is a simple undirected graph over densely numbered nodes.
//! Grid-generated topologies remember their dimensions so that grid-aware
//! root-placement strategies can be applied to them.

use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::types::{EdgeId, NodeId};

/// Errors raised while building or querying a topology.
#[derive(Debug, Error)]
pub enum TopologyError {
    /// A node id does not exist in this topology.
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    /// An edge references a node outside the declared node range.
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    EdgeOutOfRange(NodeId, NodeId, u32),
    /// An edge connects a node to itself.
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    /// A numeric parameter is outside its valid range.
    #[error("parameter {name} = {value} is out of range ({expected})")]
    ParamOutOfRange {
        /// Name of the offending parameter.
        name: &'static str,
        /// The rejected value.
        value: f64,
        /// Human-readable description of the accepted range.
        expected: &'static str,
    },
    /// The operation requires a connected graph.
    #[error("graph {0:?} is disconnected")]
    Disconnected(String),
    /// More roots were requested than nodes exist.
    #[error("requested {requested} roots but the topology has {nodes} nodes")]
    TooManyRoots {
        /// Number of roots requested.
        requested: usize,
        /// Number of nodes available.
        nodes: u32,
    },
    /// An explicit root list was empty or contained duplicates.
    #[error("invalid explicit root list: {0}")]
    BadRootList(String),
    /// A grid-specific strategy was applied to a non-grid topology.
    #[error("strategy {0} requires a grid-generated topology")]
    NotAGrid(&'static str),
    /// A topology file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse {
        /// 1-based line number of the offending input.
        line: usize,
        /// What went wrong.
        message: String,
    },
    /// A topology file declared an edge over an undeclared node.
    #[error("line {line}: edge references undeclared node {id}")]
    UnknownNodeRef {
        /// 1-based line number of the offending edge.
        line: usize,
        /// The undeclared node id as written in the file.
        id: i64,
    },
    /// The file parsed but contained no nodes.
    #[error("topology file contains no nodes")]
    EmptyGraph,
    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A simple undirected graph with densely numbered nodes.
#[derive(Debug, Clone)]
pub struct PhysicalTopology {
    name: String,
    node_count: u32,
    /// Normalized `(lo, hi)` pairs, sorted; the index of a pair is its
    /// [`EdgeId`].
    edges: Vec<(NodeId, NodeId)>,
    /// Per node: `(neighbor, edge)` sorted by neighbor id.
    adjacency: Vec<Vec<(NodeId, EdgeId)>>,
    /// `(rows, cols)` when generated as a grid.
    grid: Option<(u32, u32)>,
}

impl PhysicalTopology {
    /// Builds a topology from an explicit edge list.
    ///
    /// Edges are normalized and deduplicated; self-loops are rejected.
    pub fn from_edges(
        name: impl Into<String>,
        node_count: u32,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self, TopologyError> {
        let mut normalized: Vec<(NodeId, NodeId)> = Vec::new();
        for (u, v) in edges {
            if u == v {
                return Err(TopologyError::SelfLoop(u));
            }
            if u >= node_count || v >= node_count {
                return Err(TopologyError::EdgeOutOfRange(u, v, node_count));
            }
            normalized.push((u.min(v), u.max(v)));
        }
        normalized.sort_unstable();
        normalized.dedup();

        let mut adjacency = vec![Vec::new(); node_count as usize];
        for (idx, &(u, v)) in normalized.iter().enumerate() {
            let e = EdgeId(idx as u32);
            adjacency[u as usize].push((v, e));
            adjacency[v as usize].push((u, e));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }

        Ok(Self {
            name: name.into(),
            node_count,
            edges: normalized,
            adjacency,
            grid: None,
        })
    }

    /// Generates a `rows x cols` grid. Node `(r, c)` has id `r * cols + c`;
    /// every node is joined to its horizontal and vertical neighbors.
    pub fn gen_grid(rows: u32, cols: u32) -> Result<Self, TopologyError> {
        if rows == 0 || cols == 0 {
            return Err(TopologyError::ParamOutOfRange {
                name: "grid dimensions",
                value: 0.0,
                expected: "rows >= 1 and cols >= 1",
            });
        }
        let id = |r: u32, c: u32| r * cols + c;
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    edges.push((id(r, c), id(r, c + 1)));
                }
                if r + 1 < rows {
                    edges.push((id(r, c), id(r + 1, c)));
                }
            }
        }
        let mut topo = Self::from_edges(format!("grid:{rows}x{cols}"), rows * cols, edges)?;
        topo.grid = Some((rows, cols));
        Ok(topo)
    }

    /// Generates a seeded Erdős–Rényi graph: each unordered node pair is an
    /// edge independently with probability `p_edge`. The same seed always
    /// produces the same graph. The result may be disconnected.
    pub fn gen_erdos_renyi(n: u32, p_edge: f64, seed: u64) -> Result<Self, TopologyError> {
        if n == 0 {
            return Err(TopologyError::ParamOutOfRange {
                name: "n",
                value: 0.0,
                expected: "n >= 1",
            });
        }
        check_probability("p_edge", p_edge)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges = sample_pair_edges(&mut rng, 0, n, p_edge);
        Self::from_edges(format!("er:{n}:{p_edge}"), n, edges)
    }

    /// Generates a barbell: two independently sampled Erdős–Rényi clusters of
    /// `cluster_n` nodes each, bridged by a single edge between the
    /// lowest-numbered node of each cluster (node 0 and node `cluster_n`).
    pub fn gen_barbell(cluster_n: u32, p_edge: f64, seed: u64) -> Result<Self, TopologyError> {
        if cluster_n == 0 {
            return Err(TopologyError::ParamOutOfRange {
                name: "cluster_n",
                value: 0.0,
                expected: "cluster_n >= 1",
            });
        }
        check_probability("p_edge", p_edge)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = sample_pair_edges(&mut rng, 0, cluster_n, p_edge);
        edges.extend(sample_pair_edges(&mut rng, cluster_n, 2 * cluster_n, p_edge));
        edges.push((0, cluster_n));
        Self::from_edges(
            format!("barbell:{cluster_n}:{p_edge}"),
            2 * cluster_n,
            edges,
        )
    }

    /// Loads a topology from a file, accepting either a plain edge list
    /// (`u v` per line, `#` comments) or a GML-style `graph [ ... ]`
    /// document. Node ids found in the file are renumbered densely from 0 in
    /// ascending order of their original value.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TopologyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "file".to_owned());
        let looks_like_gml = path.extension().is_some_and(|e| e == "gml")
            || text
                .lines()
                .map(str::trim)
                .find(|l| !l.is_empty() && !l.starts_with('#'))
                .is_some_and(|l| l.starts_with("graph"));
        let (raw_nodes, raw_edges) = if looks_like_gml {
            parse_gml(&text)?
        } else {
            parse_edge_list(&text)?
        };
        if raw_nodes.is_empty() {
            return Err(TopologyError::EmptyGraph);
        }
        let index: BTreeMap<i64, NodeId> = raw_nodes
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i as NodeId))
            .collect();
        let edges = raw_edges
            .into_iter()
            .filter(|&(u, v, _)| u != v) // drop degenerate self-loops found in real data sets
            .map(|(u, v, _)| (index[&u], index[&v]));
        Self::from_edges(name, raw_nodes.len() as u32, edges.collect::<Vec<_>>())
    }

    /// The topology's display name (used in result records).
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Overrides the display name.
    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    /// Number of nodes.
    pub fn node_count(&self) -> u32 {
        self.node_count
    }

    /// Number of edges.
    pub fn edge_count(&self) -> u32 {
        self.edges.len() as u32
    }

    /// Grid dimensions `(rows, cols)` when this topology was grid-generated.
    pub fn grid_dims(&self) -> Option<(u32, u32)> {
        self.grid
    }

    /// The sorted, normalized edge list; a pair's index is its [`EdgeId`].
    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    /// Endpoints of an edge, as a normalized `(lo, hi)` pair.
    pub fn edge_endpoints(&self, edge: EdgeId) -> (NodeId, NodeId) {
        self.edges[edge.index()]
    }

    /// Looks up the edge joining `u` and `v`, if any.
    pub fn edge_between(&self, u: NodeId, v: NodeId) -> Option<EdgeId> {
        let pair = (u.min(v), u.max(v));
        self.edges
            .binary_search(&pair)
            .ok()
            .map(|i| EdgeId(i as u32))
    }

    /// `(neighbor, edge)` pairs of `v`, sorted by neighbor id.
    pub fn neighbors(&self, v: NodeId) -> &[(NodeId, EdgeId)] {
        &self.adjacency[v as usize]
    }

    /// Number of edges incident to `v`.
    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v as usize].len()
    }

    fn check_node(&self, v: NodeId) -> Result<(), TopologyError> {
        if v < self.node_count {
            Ok(())
        } else {
            Err(TopologyError::UnknownNode(v))
        }
    }

    /// Hop distances from `src` to every node (`None` = unreachable).
    pub fn bfs_distances(&self, src: NodeId) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.node_count as usize];
        dist[src as usize] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(v) = queue.pop_front() {
            let d = dist[v as usize].unwrap();
            for &(nbr, _) in self.neighbors(v) {
                if dist[nbr as usize].is_none() {
                    dist[nbr as usize] = Some(d + 1);
                    queue.push_back(nbr);
                }
            }
        }
        dist
    }

    /// Shortest-path hop count between two nodes; `None` when they are in
    /// different components.
    pub fn graph_distance(&self, u: NodeId, v: NodeId) -> Result<Option<u32>, TopologyError> {
        self.check_node(u)?;
        self.check_node(v)?;
        Ok(self.bfs_distances(u)[v as usize])
    }

    /// Greatest hop distance from `v` to any node. Errors on disconnected
    /// graphs, where the eccentricity is unbounded.
    pub fn eccentricity(&self, v: NodeId) -> Result<u32, TopologyError> {
        self.check_node(v)?;
        let dist = self.bfs_distances(v);
        dist.iter()
            .map(|d| d.ok_or_else(|| TopologyError::Disconnected(self.name.clone())))
            .try_fold(0, |acc, d| d.map(|d| acc.max(d)))
    }

    /// Whether every node can reach every other node.
    pub fn is_connected(&self) -> bool {
        self.node_count > 0 && self.bfs_distances(0).iter().all(Option::is_some)
    }

    /// Selects routing-tree roots according to `strategy`. The returned list
    /// is non-empty, duplicate-free, and deterministic for a given topology.
    pub fn select_roots(&self, strategy: &RootStrategy) -> Result<Vec<NodeId>, TopologyError> {
        match strategy {
            RootStrategy::Explicit(list) => {
                if list.is_empty() {
                    return Err(TopologyError::BadRootList("list is empty".into()));
                }
                let mut seen = std::collections::BTreeSet::new();
                for &r in list {
                    self.check_node(r)?;
                    if !seen.insert(r) {
                        return Err(TopologyError::BadRootList(format!("duplicate root {r}")));
                    }
                }
                Ok(list.clone())
            }
            RootStrategy::GridCenter => {
                let (rows, cols) = self.grid.ok_or(TopologyError::NotAGrid("grid-center"))?;
                Ok(vec![((rows - 1) / 2) * cols + (cols - 1) / 2])
            }
            RootStrategy::GridQuadrants => {
                let (rows, cols) = self
                    .grid
                    .ok_or(TopologyError::NotAGrid("grid-quadrants"))?;
                // Per axis: the centers of the first and second halves.
                let marks = |s: u32| [(s - 1) / 4, (3 * s - 1) / 4];
                let mut roots = Vec::new();
                for r in marks(rows) {
                    for c in marks(cols) {
                        let v = r * cols + c;
                        if !roots.contains(&v) {
                            roots.push(v);
                        }
                    }
                }
                Ok(roots)
            }
            RootStrategy::MinEccentricity(k) => {
                self.check_root_count(*k)?;
                let mut scored: Vec<(u32, NodeId)> = (0..self.node_count)
                    .map(|v| self.eccentricity(v).map(|e| (e, v)))
                    .collect::<Result<_, _>>()?;
                scored.sort_unstable();
                Ok(scored.into_iter().take(*k).map(|(_, v)| v).collect())
            }
            RootStrategy::MaxDegree(k) => {
                self.check_root_count(*k)?;
                let mut scored: Vec<(usize, NodeId)> = (0..self.node_count)
                    .map(|v| (usize::MAX - self.degree(v), v))
                    .collect();
                scored.sort_unstable();
                Ok(scored.into_iter().take(*k).map(|(_, v)| v).collect())
            }
            RootStrategy::DensityClusters(k) => {
                self.check_root_count(*k)?;
                if !self.is_connected() {
                    return Err(TopologyError::Disconnected(self.name.clone()));
                }
                let clusters = self.balanced_partition(*k);
                Ok(clusters
                    .iter()
                    .map(|c| self.subgraph_center(c))
                    .collect())
            }
        }
    }

    fn check_root_count(&self, k: usize) -> Result<(), TopologyError> {
        if k == 0 {
            return Err(TopologyError::BadRootList("root count is zero".into()));
        }
        if k as u64 > u64::from(self.node_count) {
            return Err(TopologyError::TooManyRoots {
                requested: k,
                nodes: self.node_count,
            });
        }
        Ok(())
    }

    /// BFS distances restricted to a node subset (`members[v]` gates entry).
    fn bfs_within(&self, src: NodeId, members: &[bool]) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.node_count as usize];
        dist[src as usize] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(v) = queue.pop_front() {
            let d = dist[v as usize].unwrap();
            for &(nbr, _) in self.neighbors(v) {
                if members[nbr as usize] && dist[nbr as usize].is_none() {
                    dist[nbr as usize] = Some(d + 1);
                    queue.push_back(nbr);
                }
            }
        }
        dist
    }

    /// Splits the (connected) graph into `k` clusters by repeatedly
    /// bisecting the largest cluster between its two most distant nodes.
    /// Every cluster remains connected. Clusters are returned sorted by
    /// their smallest node id.
    fn balanced_partition(&self, k: usize) -> Vec<Vec<NodeId>> {
        let mut clusters: Vec<Vec<NodeId>> = vec![(0..self.node_count).collect()];
        while clusters.len() < k {
            // Largest cluster first; ties go to the one holding the
            // smallest node id (clusters are kept sorted).
            let target = clusters
                .iter()
                .enumerate()
                .filter(|(_, c)| c.len() >= 2)
                .max_by(|(_, a), (_, b)| a.len().cmp(&b.len()).then(b[0].cmp(&a[0])))
                .map(|(i, _)| i)
                .expect("k <= node count leaves a splittable cluster");
            let cluster = clusters.swap_remove(target);
            let mut members = vec![false; self.node_count as usize];
            for &v in &cluster {
                members[v as usize] = true;
            }
            let far = |from: NodeId| -> NodeId {
                let dist = self.bfs_within(from, &members);
                cluster
                    .iter()
                    .copied()
                    .max_by_key(|&v| (dist[v as usize], std::cmp::Reverse(v)))
                    .unwrap()
            };
            let u = far(cluster[0]);
            let w = far(u);
            let (a, b) = (u.min(w), u.max(w));
            let da = self.bfs_within(a, &members);
            let db = self.bfs_within(b, &members);
            let (mut side_a, mut side_b) = (Vec::new(), Vec::new());
            for &v in &cluster {
                // Ties go to the lower-numbered pole, keeping both sides
                // connected.
                if da[v as usize] <= db[v as usize] {
                    side_a.push(v);
                } else {
                    side_b.push(v);
                }
            }
            clusters.push(side_a);
            clusters.push(side_b);
            clusters.sort_by_key(|c| c[0]);
        }
        clusters
    }

    /// The minimum-eccentricity node of a connected induced subgraph, ties by
    /// lower id.
    fn subgraph_center(&self, cluster: &[NodeId]) -> NodeId {
        let mut members = vec![false; self.node_count as usize];
        for &v in cluster {
            members[v as usize] = true;
        }
        cluster
            .iter()
            .copied()
            .min_by_key(|&v| {
                let dist = self.bfs_within(v, &members);
                let ecc = cluster
                    .iter()
                    .map(|&u| dist[u as usize].expect("cluster is connected"))
                    .max()
                    .unwrap();
                (ecc, v)
            })
            .unwrap()
    }
}

fn check_probability(name: &'static str, value: f64) -> Result<(), TopologyError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(TopologyError::ParamOutOfRange {
            name,
            value,
            expected: "within [0, 1]",
        })
    }
}

/// Draws each `{u, v}` pair with `lo <= u < v < hi` independently.
fn sample_pair_edges(
    rng: &mut ChaCha8Rng,
    lo: u32,
    hi: u32,
    p_edge: f64,
) -> Vec<(NodeId, NodeId)> {
    let mut edges = Vec::new();
    for u in lo..hi {
        for v in (u + 1)..hi {
            if rng.random_bool(p_edge) {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Root-placement strategies for routing trees.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RootStrategy {
    /// Use exactly these nodes.
    Explicit(Vec<NodeId>),
    /// The single central node of a grid (`(rows-1)/2`, `(cols-1)/2`).
    GridCenter,
    /// The four quadrant centers of a grid: per axis, positions
    /// `(s-1)/4` and `(3s-1)/4`. Degenerate axes collapse duplicates.
    GridQuadrants,
    /// The `k` nodes of smallest eccentricity, ties by lower id.
    MinEccentricity(usize),
    /// Split the graph into `k` balanced connected clusters and take each
    /// cluster's most central node.
    DensityClusters(usize),
    /// The `k` highest-degree nodes, ties by lower id.
    MaxDegree(usize),
}

/// All-pairs hop distances, precomputed once per topology.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    n: usize,
    dist: Vec<Option<u32>>,
}

impl DistanceTable {
    /// Runs a BFS from every node.
    pub fn new(topo: &PhysicalTopology) -> Self {
        let n = topo.node_count() as usize;
        let mut dist = Vec::with_capacity(n * n);
        for v in 0..topo.node_count() {
            dist.extend(topo.bfs_distances(v));
        }
        Self { n, dist }
    }

    /// Hop distance between two nodes (`None` = different components).
    pub fn get(&self, u: NodeId, v: NodeId) -> Option<u32> {
        self.dist[u as usize * self.n + v as usize]
    }

    /// Number of nodes the table covers.
    pub fn node_count(&self) -> u32 {
        self.n as u32
    }

    /// The largest finite distance in the table (the graph diameter for
    /// connected graphs).
    pub fn max_finite_distance(&self) -> u32 {
        self.dist.iter().flatten().copied().max().unwrap_or(0)
    }
}

// --- file parsing ---------------------------------------------------------

type RawEdge = (i64, i64, usize); // (source, target, line)

/// Parses `u v` pairs, one per line; `#` starts a comment line.
fn parse_edge_list(text: &str) -> Result<(Vec<i64>, Vec<RawEdge>), TopologyError> {
    let mut nodes = std::collections::BTreeSet::new();
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(TopologyError::Parse {
                line,
                message: format!("expected two node ids, found {} fields", fields.len()),
            });
        }
        let parse = |s: &str| -> Result<i64, TopologyError> {
            s.parse::<u64>()
                .map(|v| v as i64)
                .map_err(|_| TopologyError::Parse {
                    line,
                    message: format!("{s:?} is not a non-negative integer"),
                })
        };
        let (u, v) = (parse(fields[0])?, parse(fields[1])?);
        nodes.insert(u);
        nodes.insert(v);
        edges.push((u, v, line));
    }
    Ok((nodes.into_iter().collect(), edges))
}

#[derive(Debug, PartialEq)]
enum GmlToken {
    Open,
    Close,
    Word(String),
}

/// Splits GML text into tokens, collapsing quoted strings (which may contain
/// brackets) into single words. Returns `(token, line)` pairs.
fn tokenize_gml(text: &str) -> Result<Vec<(GmlToken, usize)>, TopologyError> {
    let mut tokens = Vec::new();
    let mut line = 1;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\n' => line += 1,
            c if c.is_whitespace() => {}
            '[' => tokens.push((GmlToken::Open, line)),
            ']' => tokens.push((GmlToken::Close, line)),
            '"' => {
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('"') => break,
                        Some('\n') => {
                            line += 1;
                            s.push('\n');
                        }
                        Some(c) => s.push(c),
                        None => {
                            return Err(TopologyError::Parse {
                                line,
                                message: "unterminated string".into(),
                            })
                        }
                    }
                }
                tokens.push((GmlToken::Word(s), line));
            }
            c => {
                let mut s = String::from(c);
                while let Some(&next) = chars.peek() {
                    if next.is_whitespace() || next == '[' || next == ']' {
                        break;
                    }
                    s.push(chars.next().unwrap());
                }
                tokens.push((GmlToken::Word(s), line));
            }
        }
    }
    Ok(tokens)
}

/// Parses the subset of GML needed for network topologies: a `graph` block
/// holding `node [ id N ]` and `edge [ source A target B ]` entries. All
/// other keys (labels, coordinates, metadata) are skipped, including nested
/// blocks.
fn parse_gml(text: &str) -> Result<(Vec<i64>, Vec<RawEdge>), TopologyError> {
    let tokens = tokenize_gml(text)?;
    let mut pos = 0;
    let err = |pos: usize, message: &str| -> TopologyError {
        let line = tokens
            .get(pos)
            .or_else(|| tokens.last())
            .map_or(1, |t| t.1);
        TopologyError::Parse {
            line,
            message: message.into(),
        }
    };

    // Seek `graph [`; leading keys such as `Creator` are skipped.
    loop {
        match tokens.get(pos) {
            Some((GmlToken::Word(w), _)) if w == "graph" => break,
            Some(_) => pos += 1,
            None => return Err(err(pos, "no graph block found")),
        }
    }
    pos += 1;
    if !matches!(tokens.get(pos), Some((GmlToken::Open, _))) {
        return Err(err(pos, "expected '[' after 'graph'"));
    }
    pos += 1;

    let mut nodes = std::collections::BTreeSet::new();
    let mut edges = Vec::new();

    // Consumes one value (a scalar word or a bracketed block), returning the
    // key/value pairs found at the block's top level.
    fn read_block(
        tokens: &[(GmlToken, usize)],
        pos: &mut usize,
    ) -> Result<Vec<(String, String, usize)>, ()> {
        let mut fields = Vec::new();
        loop {
            match tokens.get(*pos) {
                Some((GmlToken::Close, _)) => {
                    *pos += 1;
                    return Ok(fields);
                }
                Some((GmlToken::Word(key), line)) => {
                    let key = key.clone();
                    let line = *line;
                    *pos += 1;
                    match tokens.get(*pos) {
                        Some((GmlToken::Word(value), _)) => {
                            fields.push((key, value.clone(), line));
                            *pos += 1;
                        }
                        Some((GmlToken::Open, _)) => {
                            *pos += 1;
                            read_block(tokens, pos)?; // nested block: skip contents
                        }
                        _ => return Err(()),
                    }
                }
                _ => return Err(()),
            }
        }
    }

    loop {
        match tokens.get(pos) {
            Some((GmlToken::Close, _)) => break,
            Some((GmlToken::Word(key), line)) => {
                let key = key.clone();
                let line = *line;
                pos += 1;
                match tokens.get(pos) {
                    Some((GmlToken::Word(_), _)) => pos += 1, // scalar metadata
                    Some((GmlToken::Open, _)) => {
                        pos += 1;
                        let fields = read_block(&tokens, &mut pos)
                            .map_err(|_| err(pos, "malformed block"))?;
                        let lookup = |name: &str| {
                            fields
                                .iter()
                                .find(|(k, _, _)| k == name)
                                .map(|(_, v, l)| (v.clone(), *l))
                        };
                        match key.as_str() {
                            "node" => {
                                let (id, id_line) =
                                    lookup("id").ok_or_else(|| err(pos, "node without id"))?;
                                let id = id.parse::<i64>().map_err(|_| TopologyError::Parse {
                                    line: id_line,
                                    message: format!("node id {id:?} is not an integer"),
                                })?;
                                nodes.insert(id);
                            }
                            "edge" => {
                                let endpoint = |name: &str| -> Result<i64, TopologyError> {
                                    let (v, l) = lookup(name)
                                        .ok_or_else(|| err(pos, &format!("edge without {name}")))?;
                                    v.parse::<i64>().map_err(|_| TopologyError::Parse {
                                        line: l,
                                        message: format!("edge {name} {v:?} is not an integer"),
                                    })
                                };
                                edges.push((endpoint("source")?, endpoint("target")?, line));
                            }
                            _ => {} // unrelated block (graphics, label, ...)
                        }
                    }
                    _ => return Err(err(pos, "expected a value")),
                }
            }
            _ => return Err(err(pos, "unexpected end of graph block")),
        }
    }

    for &(u, v, line) in &edges {
        for id in [u, v] {
            if !nodes.contains(&id) {
                return Err(TopologyError::UnknownNodeRef { line, id });
            }
        }
    }
    Ok((nodes.into_iter().collect(), edges))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_2x3_has_expected_shape() {
        let t = PhysicalTopology::gen_grid(2, 3).unwrap();
        assert_eq!(t.node_count(), 6);
        assert_eq!(t.edge_count(), 7);
        assert_eq!(t.grid_dims(), Some((2, 3)));
        // Node (r, c) = r*cols + c: (1, 2) is node 5, adjacent to 2 and 4.
        assert_eq!(
            t.neighbors(5).iter().map(|&(n, _)| n).collect::<Vec<_>>(),
            vec![2, 4]
        );
    }

    #[test]
    fn grid_1xn_is_a_path() {
        let t = PhysicalTopology::gen_grid(1, 30).unwrap();
        assert_eq!(t.node_count(), 30);
        assert_eq!(t.edge_count(), 29);
        assert_eq!(t.degree(0), 1);
        assert_eq!(t.degree(15), 2);
    }

    #[test]
    fn erdos_renyi_is_seed_deterministic() {
        let a = PhysicalTopology::gen_erdos_renyi(40, 0.1, 7).unwrap();
        let b = PhysicalTopology::gen_erdos_renyi(40, 0.1, 7).unwrap();
        let c = PhysicalTopology::gen_erdos_renyi(40, 0.1, 8).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_ne!(a.edges(), c.edges());
    }

    #[test]
    fn erdos_renyi_extreme_probabilities() {
        let empty = PhysicalTopology::gen_erdos_renyi(10, 0.0, 1).unwrap();
        assert_eq!(empty.edge_count(), 0);
        let complete = PhysicalTopology::gen_erdos_renyi(10, 1.0, 1).unwrap();
        assert_eq!(complete.edge_count(), 45);
        assert!(PhysicalTopology::gen_erdos_renyi(10, 1.5, 1).is_err());
    }

    #[test]
    fn barbell_layout() {
        // Zero intra-cluster probability leaves exactly the bridge.
        let t = PhysicalTopology::gen_barbell(2, 0.0, 3).unwrap();
        assert_eq!(t.node_count(), 4);
        assert_eq!(t.edges(), &[(0, 2)]);

        // Full intra-cluster probability gives two triangles plus the bridge.
        let t = PhysicalTopology::gen_barbell(3, 1.0, 3).unwrap();
        assert_eq!(t.node_count(), 6);
        assert_eq!(t.edge_count(), 7);
        assert_eq!(t.edge_between(0, 3), Some(EdgeId(2)));
    }

    #[test]
    fn grid_distances_match_manhattan_metric() {
        let t = PhysicalTopology::gen_grid(10, 10).unwrap();
        assert_eq!(t.graph_distance(0, 99).unwrap(), Some(18));
        assert_eq!(t.graph_distance(44, 45).unwrap(), Some(1));
        assert_eq!(t.graph_distance(7, 7).unwrap(), Some(0));
        assert!(t.graph_distance(0, 100).is_err());
    }

    #[test]
    fn distance_is_none_across_components() {
        let t = PhysicalTopology::from_edges("two-islands", 4, [(0, 1), (2, 3)]).unwrap();
        assert_eq!(t.graph_distance(0, 3).unwrap(), None);
        assert!(!t.is_connected());
        assert!(t.eccentricity(0).is_err());
    }

    #[test]
    fn grid_eccentricities() {
        let t = PhysicalTopology::gen_grid(10, 10).unwrap();
        // Corner reaches the opposite corner in 18 hops; the center node
        // (4, 4) reaches the far corner (9, 9) in 10.
        assert_eq!(t.eccentricity(0).unwrap(), 18);
        assert_eq!(t.eccentricity(44).unwrap(), 10);
        // Cross-check one value against the brute-force definition.
        let brute = t
            .bfs_distances(44)
            .iter()
            .map(|d| d.unwrap())
            .max()
            .unwrap();
        assert_eq!(brute, 10);
    }

    #[test]
    fn grid_center_and_quadrant_roots() {
        let t = PhysicalTopology::gen_grid(10, 10).unwrap();
        assert_eq!(t.select_roots(&RootStrategy::GridCenter).unwrap(), vec![44]);
        assert_eq!(
            t.select_roots(&RootStrategy::GridQuadrants).unwrap(),
            vec![22, 27, 72, 77]
        );
        let t9 = PhysicalTopology::gen_grid(9, 9).unwrap();
        assert_eq!(
            t9.select_roots(&RootStrategy::GridCenter).unwrap(),
            vec![40]
        );
    }

    #[test]
    fn quadrants_collapse_on_degenerate_axis() {
        let t = PhysicalTopology::gen_grid(1, 30).unwrap();
        assert_eq!(
            t.select_roots(&RootStrategy::GridQuadrants).unwrap(),
            vec![7, 22]
        );
    }

    #[test]
    fn grid_strategies_reject_non_grids() {
        let t = PhysicalTopology::gen_erdos_renyi(10, 0.5, 1).unwrap();
        assert!(matches!(
            t.select_roots(&RootStrategy::GridCenter),
            Err(TopologyError::NotAGrid(_))
        ));
    }

    #[test]
    fn min_eccentricity_roots() {
        let t = PhysicalTopology::gen_grid(10, 10).unwrap();
        // The four central nodes all have eccentricity 10; ties resolve to
        // lower ids.
        assert_eq!(
            t.select_roots(&RootStrategy::MinEccentricity(1)).unwrap(),
            vec![44]
        );
        let path = PhysicalTopology::gen_grid(1, 30).unwrap();
        assert_eq!(
            path.select_roots(&RootStrategy::MinEccentricity(2))
                .unwrap(),
            vec![14, 15]
        );
    }

    #[test]
    fn max_degree_roots() {
        let t = PhysicalTopology::from_edges("star+tail", 5, [(0, 1), (0, 2), (0, 3), (3, 4)])
            .unwrap();
        assert_eq!(
            t.select_roots(&RootStrategy::MaxDegree(2)).unwrap(),
            vec![0, 3]
        );
    }

    #[test]
    fn density_clusters_split_a_path_at_its_middle() {
        let t = PhysicalTopology::gen_grid(1, 30).unwrap();
        assert_eq!(
            t.select_roots(&RootStrategy::DensityClusters(2)).unwrap(),
            vec![7, 22]
        );
    }

    #[test]
    fn density_clusters_put_two_roots_in_each_barbell_half() {
        // Find a connected barbell instance; the bridge forces the first
        // split to separate the clusters, so two roots land in each half.
        let t = (0..100)
            .map(|s| PhysicalTopology::gen_barbell(50, 0.08, s).unwrap())
            .find(|t| t.is_connected())
            .expect("some seed yields a connected barbell");
        let roots = t
            .select_roots(&RootStrategy::DensityClusters(4))
            .unwrap();
        assert_eq!(roots.len(), 4);
        assert_eq!(roots.iter().filter(|&&r| r < 50).count(), 2);
        assert_eq!(roots.iter().filter(|&&r| r >= 50).count(), 2);
    }

    #[test]
    fn root_count_validation() {
        let t = PhysicalTopology::gen_grid(2, 2).unwrap();
        assert!(matches!(
            t.select_roots(&RootStrategy::MinEccentricity(5)),
            Err(TopologyError::TooManyRoots { .. })
        ));
        assert!(t.select_roots(&RootStrategy::MinEccentricity(0)).is_err());
        assert!(t
            .select_roots(&RootStrategy::Explicit(vec![1, 1]))
            .is_err());
        assert!(t
            .select_roots(&RootStrategy::Explicit(vec![9]))
            .is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let dir = std::env::temp_dir().join("entroute-topo-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("simple.edges");
        std::fs::write(&path, "# a comment\n5 7\n\n7 9\n").unwrap();
        let t = PhysicalTopology::load(&path).unwrap();
        // Original ids 5, 7, 9 are renumbered densely to 0, 1, 2.
        assert_eq!(t.node_count(), 3);
        assert_eq!(t.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(t.name(), "simple");
    }

    #[test]
    fn edge_list_rejects_malformed_lines() {
        let dir = std::env::temp_dir().join("entroute-topo-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.edges");
        std::fs::write(&path, "a b c\n").unwrap();
        match PhysicalTopology::load(&path) {
            Err(TopologyError::Parse { line: 1, .. }) => {}
            other => panic!("expected a line-1 parse error, got {other:?}"),
        }
    }

    #[test]
    fn gml_subset_parses_nodes_edges_and_skips_decoration() {
        let dir = std::env::temp_dir().join("entroute-topo-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("net.gml");
        std::fs::write(
            &path,
            r#"Creator "export tool"
graph [
  directed 0
  node [ id 3 label "alpha [site]" graphics [ x 1.0 y 2.0 ] ]
  node [ id 8 label "beta" ]
  node [ id 11 ]
  edge [ source 3 target 8 ]
  edge [ source 8 target 11 LinkSpeed "10" ]
]
"#,
        )
        .unwrap();
        let t = PhysicalTopology::load(&path).unwrap();
        assert_eq!(t.node_count(), 3);
        assert_eq!(t.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn gml_rejects_edges_over_undeclared_nodes() {
        let dir = std::env::temp_dir().join("entroute-topo-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("dangling.gml");
        std::fs::write(
            &path,
            "graph [\n  node [ id 0 ]\n  edge [ source 0 target 1 ]\n]\n",
        )
        .unwrap();
        match PhysicalTopology::load(&path) {
            Err(TopologyError::UnknownNodeRef { id: 1, line: 3 }) => {}
            other => panic!("expected an undeclared-node error, got {other:?}"),
        }
    }

    #[test]
    fn empty_files_are_rejected() {
        let dir = std::env::temp_dir().join("entroute-topo-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.edges");
        std::fs::write(&path, "# nothing here\n").unwrap();
        assert!(matches!(
            PhysicalTopology::load(&path),
            Err(TopologyError::EmptyGraph)
        ));
    }

    #[test]
    fn distance_table_agrees_with_bfs() {
        let t = PhysicalTopology::gen_grid(5, 5).unwrap();
        let table = DistanceTable::new(&t);
        assert_eq!(table.get(0, 24), Some(8));
        assert_eq!(table.max_finite_distance(), 8);
        for v in 0..t.node_count() {
            assert_eq!(table.get(3, v), t.bfs_distances(3)[v as usize]);
        }
    }
}
