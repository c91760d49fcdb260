//! Graph loading, synthesis, partitioning, and batching.
//!
//! Graphs are undirected and unweighted. Partitioning follows a seeded
//! greedy BFS-growth scheme (grown from pseudo-peripheral start nodes,
//! balanced to within one node of the target part size) followed by a
//! boundary-refinement pass that may relax balance to +/-10%. Batches merge
//! `beta` parts back together and recover all cross-part edges inside the
//! merged node set, so `NumInput = ceil(NumPart / beta)`.

use std::collections::VecDeque;
use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::seeds;

/// Compressed undirected graph.
///
/// Edges are stored once as normalized `(min, max)` pairs, sorted and
/// deduplicated. `node_order[i]` is the external label of adjacency row `i`:
/// the identity for loaded or generated graphs, the original node ids (in
/// ascending order) for induced subgraphs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(u32, u32)>,
    feature_dim: usize,
    node_order: Vec<u32>,
}

impl Graph {
    /// Build a graph from raw edges. Pairs are normalized, sorted, and
    /// deduplicated; self-loop pairs are kept as written.
    pub fn new(
        num_nodes: usize,
        feature_dim: usize,
        edges: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self> {
        let mut norm: Vec<(u32, u32)> = edges
            .into_iter()
            .map(|(u, v)| if u <= v { (u, v) } else { (v, u) })
            .collect();
        norm.sort_unstable();
        norm.dedup();
        if let Some(&(_, v)) = norm.iter().max_by_key(|&&(_, v)| v) {
            if v as usize >= num_nodes {
                return Err(SimError::invalid(format!(
                    "edge endpoint {v} out of range for {num_nodes} nodes"
                )));
            }
        }
        Ok(Graph {
            num_nodes,
            edges: norm,
            feature_dim,
            node_order: (0..num_nodes as u32).collect(),
        })
    }

    fn with_node_order(mut self, order: Vec<u32>) -> Self {
        debug_assert_eq!(order.len(), self.num_nodes);
        self.node_order = order;
        self
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Normalized `(min, max)` edge pairs, sorted ascending.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// External label of each adjacency row (original ids for subgraphs).
    pub fn node_order(&self) -> &[u32] {
        &self.node_order
    }

    /// Nonzero count of the symmetric adjacency pattern. With `self_loops`
    /// the full diagonal is counted as set.
    pub fn nnz(&self, self_loops: bool) -> u64 {
        let mut loops = 0u64;
        let mut plain = 0u64;
        for &(u, v) in &self.edges {
            if u == v {
                loops += 1;
            } else {
                plain += 1;
            }
        }
        if self_loops {
            2 * plain + self.num_nodes as u64
        } else {
            2 * plain + loops
        }
    }

    /// Neighbor lists (self-loops excluded), each sorted ascending.
    pub fn adjacency_lists(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            if u != v {
                adj[u as usize].push(v);
                adj[v as usize].push(u);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Degree of each node (self-loops count once).
    pub fn degrees(&self) -> Vec<u32> {
        let mut deg = vec![0u32; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u as usize] += 1;
            if u != v {
                deg[v as usize] += 1;
            }
        }
        deg
    }

    /// Number of connected components (isolated nodes count).
    pub fn connected_components(&self) -> usize {
        let adj = self.adjacency_lists();
        let mut seen = vec![false; self.num_nodes];
        let mut components = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.num_nodes {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            queue.push_back(start as u32);
            while let Some(u) = queue.pop_front() {
                for &w in &adj[u as usize] {
                    if !seen[w as usize] {
                        seen[w as usize] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        components
    }
}

/// Options for [`load_edge_list`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeListOptions {
    /// Keep self-loop lines found in the file; otherwise they are dropped
    /// (and counted in the load metadata).
    pub self_loops: bool,
    /// Input feature width recorded on the graph.
    pub feature_dim: usize,
}

/// What the loader dropped or discovered while reading an edge list.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LoadMeta {
    pub dropped_duplicates: usize,
    pub dropped_self_loops: usize,
    pub header_nodes: Option<usize>,
}

/// Load a whitespace-separated edge list.
///
/// `#`-prefixed lines are comments; an optional first line `nodes=<N>`
/// overrides the node count (otherwise `1 + max id`). Duplicate lines and
/// reversed duplicates collapse to a single undirected edge.
pub fn load_edge_list(path: &Path, options: &EdgeListOptions) -> Result<(Graph, LoadMeta)> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut meta = LoadMeta::default();
    let mut raw: Vec<(u32, u32)> = Vec::new();
    let mut max_id: u64 = 0;
    let mut saw_edges = false;

    let parse_err = |line: usize, msg: String| SimError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        if let Some(rest) = text.strip_prefix("nodes=") {
            if lineno == 1 || !saw_edges && meta.header_nodes.is_none() && raw.is_empty() {
                let n: usize = rest
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad node-count header '{text}'")))?;
                meta.header_nodes = Some(n);
                continue;
            }
            return Err(parse_err(lineno, "header after edge data".to_string()));
        }
        let mut it = text.split_whitespace();
        let (a, b) = match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(parse_err(
                    lineno,
                    format!("expected two node ids, got '{text}'"),
                ))
            }
        };
        let u: u64 = a
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad node id '{a}'")))?;
        let v: u64 = b
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad node id '{b}'")))?;
        if u > u32::MAX as u64 || v > u32::MAX as u64 {
            return Err(parse_err(lineno, "node id overflow".to_string()));
        }
        if let Some(n) = meta.header_nodes {
            if u as usize >= n || v as usize >= n {
                return Err(parse_err(
                    lineno,
                    format!("node id exceeds header nodes={n}"),
                ));
            }
        }
        max_id = max_id.max(u).max(v);
        saw_edges = true;
        if u == v && !options.self_loops {
            meta.dropped_self_loops += 1;
            continue;
        }
        let (u, v) = (u as u32, v as u32);
        raw.push(if u <= v { (u, v) } else { (v, u) });
    }

    if !saw_edges && meta.header_nodes.is_none() {
        return Err(SimError::invalid(format!(
            "empty edge list: {}",
            path.display()
        )));
    }

    let before = raw.len();
    raw.sort_unstable();
    raw.dedup();
    meta.dropped_duplicates = before - raw.len();

    let num_nodes = meta.header_nodes.unwrap_or(max_id as usize + 1);
    let graph = Graph::new(num_nodes, options.feature_dim, raw)?;
    Ok((graph, meta))
}

/// Synthetic graph family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthKind {
    /// Heavy-tailed expected-degree graph (Chung-Lu construction with the
    /// Miller-Hagberg skipping sampler). `exponent` is the degree-tail
    /// exponent (> 1); `avg_degree` sets the expected mean degree.
    PowerLaw { exponent: f64, avg_degree: f64 },
    /// Near-square 2D lattice: `rows = floor(sqrt(n))`, last row ragged.
    Grid,
    /// Erdos-Renyi G(n, p).
    Random { edge_prob: f64 },
}

/// Metadata reported by [`generate_synthetic`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthMeta {
    pub connected_components: usize,
}

/// Generate a deterministic synthetic graph for the given seed.
pub fn generate_synthetic(
    kind: &SynthKind,
    num_nodes: usize,
    feature_dim: usize,
    seed: u64,
) -> Result<(Graph, SynthMeta)> {
    if num_nodes == 0 {
        return Err(SimError::invalid("synthetic graph needs num_nodes >= 1"));
    }
    let edges = match kind {
        SynthKind::Grid => grid_edges(num_nodes),
        SynthKind::Random { edge_prob } => {
            if !(0.0..=1.0).contains(edge_prob) {
                return Err(SimError::invalid(format!(
                    "random edge_prob {edge_prob} outside [0, 1]"
                )));
            }
            gnp_edges(num_nodes, *edge_prob, &mut seeds::rng_for(seed, "gnp"))
        }
        SynthKind::PowerLaw {
            exponent,
            avg_degree,
        } => {
            if *exponent <= 1.0 {
                return Err(SimError::invalid(format!(
                    "power-law exponent {exponent} must be > 1"
                )));
            }
            if *avg_degree <= 0.0 || *avg_degree >= num_nodes as f64 {
                return Err(SimError::invalid(format!(
                    "power-law avg_degree {avg_degree} out of range"
                )));
            }
            chung_lu_edges(
                num_nodes,
                *exponent,
                *avg_degree,
                &mut seeds::rng_for(seed, "chung_lu"),
            )
        }
    };
    let graph = Graph::new(num_nodes, feature_dim, edges)?;
    let meta = SynthMeta {
        connected_components: graph.connected_components(),
    };
    Ok((graph, meta))
}

fn grid_edges(n: usize) -> Vec<(u32, u32)> {
    let rows = (n as f64).sqrt().floor() as usize;
    let rows = rows.max(1);
    let cols = n.div_ceil(rows);
    let mut edges = Vec::new();
    for i in 0..n {
        let (r, c) = (i / cols, i % cols);
        if c + 1 < cols && i + 1 < n {
            edges.push((i as u32, (i + 1) as u32));
        }
        if r + 1 <= n / cols && i + cols < n {
            edges.push((i as u32, (i + cols) as u32));
        }
    }
    edges
}

/// G(n, p) via geometric gap sampling over the linearized pair index.
fn gnp_edges(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<(u32, u32)> {
    let mut edges = Vec::new();
    if p <= 0.0 || n < 2 {
        return edges;
    }
    if p >= 1.0 {
        for u in 0..n {
            for v in (u + 1)..n {
                edges.push((u as u32, v as u32));
            }
        }
        return edges;
    }
    let total = n as u64 * (n as u64 - 1) / 2;
    let log1mp = (1.0 - p).ln();
    let mut idx: u64 = 0;
    loop {
        let r: f64 = rng.gen_range(f64::EPSILON..1.0);
        let skip = (r.ln() / log1mp).floor() as u64;
        idx = match idx.checked_add(skip) {
            Some(i) if i < total => i,
            _ => break,
        };
        edges.push(pair_from_index(n as u64, idx));
        idx += 1;
        if idx >= total {
            break;
        }
    }
    edges
}

/// Inverse of the row-major enumeration of pairs (u, v), u < v.
fn pair_from_index(n: u64, idx: u64) -> (u32, u32) {
    let mut u = 0u64;
    let mut remaining = idx;
    let mut row = n - 1;
    while remaining >= row {
        remaining -= row;
        u += 1;
        row -= 1;
    }
    (u as u32, (u + 1 + remaining) as u32)
}

/// Chung-Lu expected-degree sampling with non-increasing weights
/// `w_i ~ (i + 1)^(-1 / (exponent - 1))`, scaled to match `avg_degree`.
fn chung_lu_edges(
    n: usize,
    exponent: f64,
    avg_degree: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<(u32, u32)> {
    let alpha = 1.0 / (exponent - 1.0);
    let mut w: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).powf(-alpha)).collect();
    let raw_sum: f64 = w.iter().sum();
    let scale = avg_degree * n as f64 / raw_sum;
    for x in &mut w {
        *x *= scale;
    }
    let s: f64 = w.iter().sum();

    let mut edges = Vec::new();
    for u in 0..n.saturating_sub(1) {
        let mut v = u + 1;
        let mut p = (w[u] * w[v] / s).min(1.0);
        while v < n && p > 0.0 {
            if p < 1.0 {
                let r: f64 = rng.gen_range(f64::EPSILON..1.0);
                v += (r.ln() / (1.0 - p).ln()).floor() as usize;
            }
            if v < n {
                let q = (w[u] * w[v] / s).min(1.0);
                if rng.gen::<f64>() < q / p {
                    edges.push((u as u32, v as u32));
                }
                p = q;
                v += 1;
            }
        }
    }
    edges
}

/// Disjoint cover of a graph's nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSet {
    num_nodes: usize,
    parts: Vec<Vec<u32>>,
}

impl PartitionSet {
    /// Validating constructor: parts must be nonempty, pairwise disjoint,
    /// and cover exactly `0..num_nodes`.
    pub fn new(num_nodes: usize, parts: Vec<Vec<u32>>) -> Result<Self> {
        let mut seen = vec![false; num_nodes];
        let mut covered = 0usize;
        for (i, part) in parts.iter().enumerate() {
            if part.is_empty() {
                return Err(SimError::invalid(format!("partition part {i} is empty")));
            }
            for &v in part {
                let v = v as usize;
                if v >= num_nodes {
                    return Err(SimError::invalid(format!("part {i} node {v} out of range")));
                }
                if seen[v] {
                    return Err(SimError::invalid(format!("node {v} in two parts")));
                }
                seen[v] = true;
                covered += 1;
            }
        }
        if covered != num_nodes {
            return Err(SimError::invalid(format!(
                "parts cover {covered} of {num_nodes} nodes"
            )));
        }
        let mut parts = parts;
        for part in &mut parts {
            part.sort_unstable();
        }
        Ok(PartitionSet { num_nodes, parts })
    }

    pub fn num_parts(&self) -> usize {
        self.parts.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn parts(&self) -> &[Vec<u32>] {
        &self.parts
    }

    /// part index of each node.
    pub fn membership(&self) -> Vec<u32> {
        let mut of = vec![0u32; self.num_nodes];
        for (i, part) in self.parts.iter().enumerate() {
            for &v in part {
                of[v as usize] = i as u32;
            }
        }
        of
    }
}

/// Number of edges whose endpoints land in different parts.
pub fn edge_cut(graph: &Graph, ps: &PartitionSet) -> u64 {
    let of = ps.membership();
    graph
        .edges()
        .iter()
        .filter(|&&(u, v)| of[u as usize] != of[v as usize])
        .count() as u64
}

/// Partition the graph into `num_parts` parts by seeded greedy BFS growth
/// plus boundary refinement. Deterministic for a fixed seed.
pub fn partition(graph: &Graph, num_parts: usize, seed: u64) -> Result<PartitionSet> {
    let n = graph.num_nodes();
    if num_parts == 0 || num_parts > n {
        return Err(SimError::invalid(format!(
            "num_parts {num_parts} out of range 1..={n}"
        )));
    }
    if num_parts == 1 {
        return PartitionSet::new(n, vec![(0..n as u32).collect()]);
    }
    if num_parts == n {
        return PartitionSet::new(n, (0..n as u32).map(|v| vec![v]).collect());
    }

    let adj = graph.adjacency_lists();
    let mut rng = seeds::rng_for(seed, "grow");

    // Quotas: within +/-1 of ceil(n / num_parts).
    let base = n / num_parts;
    let rem = n % num_parts;
    let quotas: Vec<usize> = (0..num_parts)
        .map(|i| base + usize::from(i < rem))
        .collect();

    let mut part_of: Vec<u32> = vec![u32::MAX; n];
    let mut probe_order: Vec<u32> = (0..n as u32).collect();
    probe_order.shuffle(&mut rng);
    let mut probe_cursor = 0usize;

    let next_probe = |part_of: &[u32], cursor: &mut usize| -> u32 {
        while part_of[probe_order[*cursor] as usize] != u32::MAX {
            *cursor += 1;
        }
        probe_order[*cursor]
    };

    for (pid, &quota) in quotas.iter().enumerate() {
        let mut remaining = quota;
        while remaining > 0 {
            let probe = next_probe(&part_of, &mut probe_cursor);
            let start = farthest_unassigned(&adj, &part_of, probe);
            let mut queue = VecDeque::new();
            part_of[start as usize] = pid as u32;
            remaining -= 1;
            queue.push_back(start);
            while remaining > 0 {
                let Some(u) = queue.pop_front() else { break };
                for &w in &adj[u as usize] {
                    if part_of[w as usize] == u32::MAX {
                        part_of[w as usize] = pid as u32;
                        remaining -= 1;
                        queue.push_back(w);
                        if remaining == 0 {
                            break;
                        }
                    }
                }
            }
        }
    }

    refine(&adj, &mut part_of, num_parts, n, &mut rng);

    let mut parts = vec![Vec::new(); num_parts];
    for (v, &p) in part_of.iter().enumerate() {
        parts[p as usize].push(v as u32);
    }
    PartitionSet::new(n, parts)
}

/// Pseudo-peripheral start: BFS from the probe over unassigned nodes and
/// return the smallest-id node in the deepest level.
fn farthest_unassigned(adj: &[Vec<u32>], part_of: &[u32], probe: u32) -> u32 {
    let mut dist = vec![u32::MAX; part_of.len()];
    let mut queue = VecDeque::new();
    dist[probe as usize] = 0;
    queue.push_back(probe);
    let mut best = (0u32, probe);
    while let Some(u) = queue.pop_front() {
        let d = dist[u as usize];
        if d > best.0 || (d == best.0 && u < best.1) {
            best = (d, u);
        }
        for &w in &adj[u as usize] {
            if part_of[w as usize] == u32::MAX && dist[w as usize] == u32::MAX {
                dist[w as usize] = d + 1;
                queue.push_back(w);
            }
        }
    }
    best.1
}

/// Greedy boundary moves: relocate a node to the neighboring part holding
/// most of its neighbors when that strictly reduces the cut and both part
/// sizes stay within +/-10% of the target (and nonempty).
fn refine(adj: &[Vec<u32>], part_of: &mut [u32], num_parts: usize, n: usize, rng: &mut ChaCha8Rng) {
    let target = n.div_ceil(num_parts);
    let hi = ((target as f64) * 1.1).floor().max(target as f64) as usize;
    let lo = ((target as f64) * 0.9).ceil().max(1.0) as usize;

    let mut sizes = vec![0usize; num_parts];
    for &p in part_of.iter() {
        sizes[p as usize] += 1;
    }
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(rng);

    for _sweep in 0..2 {
        for &v in &order {
            let cur = part_of[v as usize];
            if sizes[cur as usize] <= lo {
                continue;
            }
            let mut counts: Vec<(u32, usize)> = Vec::new();
            for &w in &adj[v as usize] {
                let p = part_of[w as usize];
                match counts.iter_mut().find(|(q, _)| *q == p) {
                    Some((_, c)) => *c += 1,
                    None => counts.push((p, 1)),
                }
            }
            let here = counts
                .iter()
                .find(|(p, _)| *p == cur)
                .map(|&(_, c)| c)
                .unwrap_or(0);
            let best = counts
                .iter()
                .filter(|(p, _)| *p != cur && sizes[*p as usize] < hi)
                .max_by_key(|&&(p, c)| (c, std::cmp::Reverse(p)));
            if let Some(&(p, c)) = best {
                if c > here {
                    sizes[cur as usize] -= 1;
                    sizes[p as usize] += 1;
                    part_of[v as usize] = p;
                }
            }
        }
    }
}

/// A merged group of parts with its induced subgraph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Batch {
    /// Original node ids, ascending.
    pub node_set: Vec<u32>,
    /// Induced subgraph over `node_set`, locally reindexed.
    pub subgraph: Graph,
    /// Indices of the parts merged into this batch.
    pub member_parts: Vec<usize>,
}

/// Shuffle parts by seed and merge them `beta` at a time into batches.
/// Produces `ceil(NumPart / beta)` batches.
pub fn make_batches(graph: &Graph, ps: &PartitionSet, beta: usize, seed: u64) -> Result<Vec<Batch>> {
    if beta == 0 || beta > ps.num_parts() {
        return Err(SimError::invalid(format!(
            "beta {beta} out of range 1..={}",
            ps.num_parts()
        )));
    }
    let mut order: Vec<usize> = (0..ps.num_parts()).collect();
    order.shuffle(&mut seeds::rng_for(seed, "batch_shuffle"));

    let groups: Vec<Vec<usize>> = order.chunks(beta).map(|c| c.to_vec()).collect();

    // Node -> (batch, local index) in one pass, then scatter edges.
    let n = graph.num_nodes();
    let mut batch_of = vec![u32::MAX; n];
    let mut local_of = vec![0u32; n];
    let mut node_sets: Vec<Vec<u32>> = Vec::with_capacity(groups.len());
    for (b, group) in groups.iter().enumerate() {
        let mut nodes: Vec<u32> = group
            .iter()
            .flat_map(|&p| ps.parts()[p].iter().copied())
            .collect();
        nodes.sort_unstable();
        for (i, &v) in nodes.iter().enumerate() {
            batch_of[v as usize] = b as u32;
            local_of[v as usize] = i as u32;
        }
        node_sets.push(nodes);
    }

    let mut batch_edges: Vec<Vec<(u32, u32)>> = vec![Vec::new(); groups.len()];
    for &(u, v) in graph.edges() {
        let b = batch_of[u as usize];
        if b == batch_of[v as usize] {
            batch_edges[b as usize].push((local_of[u as usize], local_of[v as usize]));
        }
    }

    groups
        .into_iter()
        .zip(node_sets)
        .zip(batch_edges)
        .map(|((member_parts, node_set), edges)| {
            let subgraph = Graph::new(node_set.len(), graph.feature_dim(), edges)?
                .with_node_order(node_set.clone());
            Ok(Batch {
                node_set,
                subgraph,
                member_parts,
            })
        })
        .collect()
}

/// Induced subgraph over `node_set`, reindexed to `0..|node_set|-1` in
/// ascending original-id order.
pub fn induced_subgraph(graph: &Graph, node_set: &[u32]) -> Result<Graph> {
    let mut nodes: Vec<u32> = node_set.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    let n = graph.num_nodes();
    if let Some(&v) = nodes.last() {
        if v as usize >= n {
            return Err(SimError::invalid(format!(
                "node {v} out of range for {n}-node graph"
            )));
        }
    }
    let mut local = vec![u32::MAX; n];
    for (i, &v) in nodes.iter().enumerate() {
        local[v as usize] = i as u32;
    }
    let edges: Vec<(u32, u32)> = graph
        .edges()
        .iter()
        .filter(|&&(u, v)| local[u as usize] != u32::MAX && local[v as usize] != u32::MAX)
        .map(|&(u, v)| (local[u as usize], local[v as usize]))
        .collect();
    Ok(Graph::new(nodes.len(), graph.feature_dim(), edges)?.with_node_order(nodes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn opts(feature_dim: usize) -> EdgeListOptions {
        EdgeListOptions {
            self_loops: false,
            feature_dim,
        }
    }

    #[test]
    fn load_simple_edge_list() {
        let f = write_temp("0 1\n1 2\n");
        let (g, meta) = load_edge_list(f.path(), &opts(4)).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.feature_dim(), 4);
        assert_eq!(meta.dropped_duplicates, 0);
    }

    #[test]
    fn load_deduplicates_reversed_pairs() {
        let f = write_temp("0 1\n1 0\n0 1\n");
        let (g, meta) = load_edge_list(f.path(), &opts(1)).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(meta.dropped_duplicates, 2);
    }

    #[test]
    fn load_header_comments_and_self_loops() {
        let f = write_temp("nodes=10\n# comment\n0 1\n3 3\n");
        let (g, meta) = load_edge_list(f.path(), &opts(1)).unwrap();
        assert_eq!(g.num_nodes(), 10);
        assert_eq!(g.num_edges(), 1);
        assert_eq!(meta.dropped_self_loops, 1);

        let (g2, meta2) = load_edge_list(
            f.path(),
            &EdgeListOptions {
                self_loops: true,
                feature_dim: 1,
            },
        )
        .unwrap();
        assert_eq!(g2.num_edges(), 2);
        assert_eq!(meta2.dropped_self_loops, 0);
    }

    #[test]
    fn load_errors() {
        let f = write_temp("0 1\nzap 3\n");
        let err = load_edge_list(f.path(), &opts(1)).unwrap_err();
        assert!(matches!(err, SimError::Parse { line: 2, .. }), "{err}");

        let empty = write_temp("# nothing\n");
        assert!(load_edge_list(empty.path(), &opts(1)).is_err());

        let overflow = write_temp("0 99999999999\n");
        assert!(load_edge_list(overflow.path(), &opts(1)).is_err());

        let exceeds = write_temp("nodes=3\n0 5\n");
        assert!(load_edge_list(exceeds.path(), &opts(1)).is_err());
    }

    #[test]
    fn grid_nine_nodes_has_twelve_edges() {
        let (g, meta) = generate_synthetic(&SynthKind::Grid, 9, 1, 0).unwrap();
        assert_eq!(g.num_edges(), 12);
        assert_eq!(meta.connected_components, 1);
    }

    #[test]
    fn random_p_zero_has_no_edges() {
        let (g, _) = generate_synthetic(&SynthKind::Random { edge_prob: 0.0 }, 50, 1, 3).unwrap();
        assert_eq!(g.num_edges(), 0);
    }

    #[test]
    fn random_p_one_is_complete() {
        let (g, _) = generate_synthetic(&SynthKind::Random { edge_prob: 1.0 }, 12, 1, 3).unwrap();
        assert_eq!(g.num_edges(), 12 * 11 / 2);
    }

    #[test]
    fn synthetic_is_deterministic_per_seed() {
        let kind = SynthKind::PowerLaw {
            exponent: 2.5,
            avg_degree: 8.0,
        };
        let (a, _) = generate_synthetic(&kind, 1000, 1, 42).unwrap();
        let (b, _) = generate_synthetic(&kind, 1000, 1, 42).unwrap();
        assert_eq!(a.edges(), b.edges());
        let (c, _) = generate_synthetic(&kind, 1000, 1, 43).unwrap();
        assert_ne!(a.edges(), c.edges());
        // Byte-for-byte determinism of the serialized form.
        assert_eq!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&b).unwrap()
        );
    }

    #[test]
    fn power_law_tail_heavier_than_random_at_equal_edge_count() {
        // Degree-histogram comparison between two generator runs.
        let kind = SynthKind::PowerLaw {
            exponent: 2.2,
            avg_degree: 8.0,
        };
        let (pl, _) = generate_synthetic(&kind, 1000, 1, 7).unwrap();
        let p = pl.num_edges() as f64 / (1000.0 * 999.0 / 2.0);
        let (er, _) = generate_synthetic(&SynthKind::Random { edge_prob: p }, 1000, 1, 7).unwrap();
        let edge_ratio = pl.num_edges() as f64 / er.num_edges() as f64;
        assert!((0.8..1.25).contains(&edge_ratio), "ratio {edge_ratio}");
        let max_pl = *pl.degrees().iter().max().unwrap();
        let max_er = *er.degrees().iter().max().unwrap();
        assert!(
            max_pl > 2 * max_er,
            "power-law max degree {max_pl} not heavier than random {max_er}"
        );
    }

    #[test]
    fn invalid_synth_params_rejected() {
        assert!(generate_synthetic(
            &SynthKind::PowerLaw {
                exponent: 1.0,
                avg_degree: 4.0
            },
            100,
            1,
            0
        )
        .is_err());
        assert!(
            generate_synthetic(&SynthKind::Random { edge_prob: 1.5 }, 100, 1, 0).is_err()
        );
    }

    fn path_graph(n: usize) -> Graph {
        Graph::new(n, 1, (0..n as u32 - 1).map(|i| (i, i + 1))).unwrap()
    }

    #[test]
    fn partition_single_part_is_everything() {
        let g = path_graph(6);
        let ps = partition(&g, 1, 0).unwrap();
        assert_eq!(ps.num_parts(), 1);
        assert_eq!(ps.parts()[0].len(), 6);
    }

    #[test]
    fn partition_n_parts_are_singletons() {
        let g = path_graph(5);
        let ps = partition(&g, 5, 0).unwrap();
        assert_eq!(ps.num_parts(), 5);
        assert!(ps.parts().iter().all(|p| p.len() == 1));
    }

    #[test]
    fn partition_path_six_into_two_reaches_min_cut() {
        // Oracle: exhaustive search over balanced bipartitions of the 6-path
        // shows the minimum cut is 1 (split between nodes 2 and 3).
        let g = path_graph(6);
        let mut best = u64::MAX;
        for mask in 0u32..64 {
            if mask.count_ones() != 3 {
                continue;
            }
            let parts = vec![
                (0..6u32).filter(|v| mask & (1 << v) != 0).collect(),
                (0..6u32).filter(|v| mask & (1 << v) == 0).collect(),
            ];
            let ps = PartitionSet::new(6, parts).unwrap();
            best = best.min(edge_cut(&g, &ps));
        }
        assert_eq!(best, 1);

        for seed in 0..10 {
            let ps = partition(&g, 2, seed).unwrap();
            assert_eq!(ps.parts()[0].len(), 3);
            assert_eq!(ps.parts()[1].len(), 3);
            assert_eq!(edge_cut(&g, &ps), 1, "seed {seed}");
        }
    }

    #[test]
    fn partition_is_disjoint_cover_and_deterministic() {
        let (g, _) = generate_synthetic(
            &SynthKind::PowerLaw {
                exponent: 2.5,
                avg_degree: 6.0,
            },
            300,
            1,
            5,
        )
        .unwrap();
        for k in [2, 7, 32] {
            let ps = partition(&g, k, 11).unwrap();
            assert_eq!(ps.num_parts(), k);
            let again = partition(&g, k, 11).unwrap();
            assert_eq!(ps, again);
            let other = partition(&g, k, 12).unwrap();
            // PartitionSet::new re-validates the cover on every call, so a
            // successful construction is the invariant check.
            let _ = other;
        }
    }

    #[test]
    fn partition_rejects_out_of_range() {
        let g = path_graph(4);
        assert!(partition(&g, 0, 0).is_err());
        assert!(partition(&g, 5, 0).is_err());
    }

    #[test]
    fn batches_follow_ceiling_rule() {
        let g = path_graph(10);
        let ps = partition(&g, 5, 0).unwrap();
        let batches = make_batches(&g, &ps, 2, 0).unwrap();
        assert_eq!(batches.len(), 3); // 2, 2, 1 parts
        let sizes: Vec<usize> = batches.iter().map(|b| b.member_parts.len()).collect();
        let mut sorted = sizes.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![1, 2, 2]);
    }

    #[test]
    fn beta_one_recovers_partitions() {
        let g = path_graph(12);
        let ps = partition(&g, 4, 3).unwrap();
        let batches = make_batches(&g, &ps, 1, 9).unwrap();
        assert_eq!(batches.len(), 4);
        let mut part_sets: Vec<Vec<u32>> = ps.parts().to_vec();
        let mut batch_sets: Vec<Vec<u32>> = batches.iter().map(|b| b.node_set.clone()).collect();
        part_sets.sort();
        batch_sets.sort();
        assert_eq!(part_sets, batch_sets);
    }

    #[test]
    fn batch_subgraphs_match_induced_subgraphs() {
        let (g, _) = generate_synthetic(
            &SynthKind::PowerLaw {
                exponent: 2.5,
                avg_degree: 5.0,
            },
            120,
            1,
            2,
        )
        .unwrap();
        let ps = partition(&g, 8, 1).unwrap();
        let batches = make_batches(&g, &ps, 3, 4).unwrap();
        assert_eq!(batches.len(), 3);
        let mut total_nodes = 0;
        for b in &batches {
            assert!(b.member_parts.len() <= 3);
            assert_eq!(b.subgraph.num_nodes(), b.node_set.len());
            let ind = induced_subgraph(&g, &b.node_set).unwrap();
            assert_eq!(b.subgraph, ind);
            total_nodes += b.node_set.len();
            // Every subgraph edge maps to an original edge.
            for &(lu, lv) in b.subgraph.edges() {
                let (ou, ov) = (b.node_set[lu as usize], b.node_set[lv as usize]);
                let key = if ou <= ov { (ou, ov) } else { (ov, ou) };
                assert!(g.edges().binary_search(&key).is_ok());
            }
        }
        assert_eq!(total_nodes, g.num_nodes());
    }

    #[test]
    fn induced_subgraph_examples() {
        let tri = Graph::new(3, 1, vec![(0, 1), (1, 2), (0, 2)]).unwrap();
        let full = induced_subgraph(&tri, &[0, 1, 2]).unwrap();
        assert_eq!(full.num_edges(), tri.num_edges());
        let pair = induced_subgraph(&tri, &[0, 1]).unwrap();
        assert_eq!(pair.num_edges(), 1);
        assert!(induced_subgraph(&tri, &[0, 7]).is_err());
    }

    #[test]
    fn induced_subgraph_matches_filter_oracle() {
        let (g, _) = generate_synthetic(&SynthKind::Random { edge_prob: 0.3 }, 20, 1, 8).unwrap();
        let subset: Vec<u32> = vec![0, 2, 3, 7, 11, 12, 18, 19];
        let sub = induced_subgraph(&g, &subset).unwrap();
        // Oracle: brute-force filter of the original edge list.
        let expected = g
            .edges()
            .iter()
            .filter(|&&(u, v)| subset.contains(&u) && subset.contains(&v))
            .count();
        assert_eq!(sub.num_edges(), expected);
    }

    #[test]
    fn batch_count_matches_ceiling_for_many_shapes() {
        let g = path_graph(60);
        for k in [3usize, 7, 12, 30] {
            let ps = partition(&g, k, 1).unwrap();
            for beta in 1..=k {
                let batches = make_batches(&g, &ps, beta, 5).unwrap();
                assert_eq!(batches.len(), k.div_ceil(beta), "k={k} beta={beta}");
            }
        }
    }
}
