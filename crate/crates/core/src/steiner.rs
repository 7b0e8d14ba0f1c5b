//! Connectivity closure over the FD graph.
//!
//! Top-scoring columns become terminals; a greedy Steiner tree over the
//! undirected cost view re-inserts whatever join keys are needed to connect
//! them. The construction is the Voronoi/shortest-path heuristic: grow
//! shortest-path regions from every terminal at once, merge regions through
//! their cheapest boundary edges in Kruskal order, expand the chosen
//! boundary paths, then drop redundant edges and non-terminal leaves. This
//! is within 2× of the optimum and runs in O(|E| log |V|).

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::graph::FdGraph;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SteinerError {
    #[error("terminal set is empty")]
    Empty,
    #[error("terminal {0} is not a node (graph has {1} nodes)")]
    OutOfRange(usize, usize),
    #[error("terminal {0} listed twice")]
    Duplicate(usize),
}

/// Ordered, duplicate-free set of terminal nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TerminalSet(Vec<usize>);

impl TerminalSet {
    pub fn new(nodes: Vec<usize>, node_count: usize) -> Result<Self, SteinerError> {
        if nodes.is_empty() {
            return Err(SteinerError::Empty);
        }
        let mut seen = vec![false; node_count];
        for &v in &nodes {
            if v >= node_count {
                return Err(SteinerError::OutOfRange(v, node_count));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(SteinerError::Duplicate(v));
            }
        }
        Ok(Self(nodes))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Undirected edge `a < b` with its cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct WeightedEdge {
    pub a: u32,
    pub b: u32,
    pub cost: u32,
}

impl WeightedEdge {
    pub fn new(u: usize, v: usize, cost: u32) -> Self {
        let (a, b) = if u <= v { (u, v) } else { (v, u) };
        Self { a: a as u32, b: b as u32, cost }
    }

    fn order_key(&self) -> (u32, u32, u32) {
        (self.cost, self.a, self.b)
    }
}

/// Undirected weighted graph, parallel edges collapsed to their minimum cost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostGraph {
    n: usize,
    edges: Vec<WeightedEdge>,
    adj: Vec<Vec<(u32, u32)>>,
}

impl CostGraph {
    /// Self-loops are dropped.
    pub fn new(n: usize, edges: impl IntoIterator<Item = WeightedEdge>) -> Self {
        let mut best: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        for e in edges {
            assert!((e.b as usize) < n, "edge endpoint {} out of range", e.b);
            if e.a == e.b {
                continue;
            }
            let slot = best.entry((e.a, e.b)).or_insert(e.cost);
            *slot = (*slot).min(e.cost);
        }
        let edges: Vec<WeightedEdge> = best.into_iter().map(|((a, b), cost)| WeightedEdge { a, b, cost }).collect();
        let mut adj = vec![Vec::new(); n];
        for e in &edges {
            adj[e.a as usize].push((e.b, e.cost));
            adj[e.b as usize].push((e.a, e.cost));
        }
        Self { n, edges, adj }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Sorted by `(a, b)`.
    pub fn edges(&self) -> &[WeightedEdge] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[(u32, u32)] {
        &self.adj[v]
    }

    /// Connected-component id per node, numbered by smallest member.
    pub fn components(&self) -> Vec<usize> {
        let mut uf = UnionFind::new(self.n);
        for e in &self.edges {
            uf.union(e.a as usize, e.b as usize);
        }
        let mut id = vec![usize::MAX; self.n];
        let mut out = vec![0; self.n];
        let mut next = 0;
        for v in 0..self.n {
            let r = uf.find(v);
            if id[r] == usize::MAX {
                id[r] = next;
                next += 1;
            }
            out[v] = id[r];
        }
        out
    }
}

/// Cost 0 for an edge joining a terminal to a key column of its own table, 1 otherwise.
pub fn edge_costs(graph: &FdGraph, terminals: &TerminalSet) -> CostGraph {
    let mut is_terminal = vec![false; graph.node_count()];
    for &t in terminals.as_slice() {
        is_terminal[t] = true;
    }
    let free = |t: usize, k: usize| is_terminal[t] && graph.is_key(k) && graph.table_of(t) == graph.table_of(k);
    let edges = graph.edges().iter().map(|e| {
        let (u, v) = (e.source as usize, e.target as usize);
        WeightedEdge::new(u, v, if free(u, v) || free(v, u) { 0 } else { 1 })
    });
    CostGraph::new(graph.node_count(), edges)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SteinerResult {
    /// V*, ascending.
    pub nodes: Vec<usize>,
    /// E*, sorted.
    pub edges: Vec<WeightedEdge>,
    /// V* minus the terminals, ascending.
    pub aux: Vec<usize>,
    pub total_cost: u64,
}

impl SteinerResult {
    /// One `a\tb\tcost` line per chosen edge, with column names when a graph is given.
    pub fn debug_dump(&self, graph: Option<&FdGraph>) -> String {
        let name = |v: u32| match graph {
            Some(g) => g.nodes()[v as usize].to_string(),
            None => v.to_string(),
        };
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(out, "{}\t{}\t{}", name(e.a), name(e.b), e.cost);
        }
        let _ = writeln!(out, "# total_cost {}", self.total_cost);
        out
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    /// Attaches the larger root under the smaller; false if already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

const UNREACHED: usize = usize::MAX;

pub fn greedy_steiner(graph: &CostGraph, terminals: &TerminalSet) -> SteinerResult {
    let n = graph.node_count();
    let terms = terminals.as_slice();
    let mut is_terminal = vec![false; n];
    for &t in terms {
        is_terminal[t] = true;
    }

    // Shortest-path regions grown from all terminals together. Heap order (dist, node) plus
    // strict improvement makes ownership deterministic.
    let mut dist = vec![u64::MAX; n];
    let mut hops = vec![0u64; n];
    let mut owner = vec![UNREACHED; n];
    let mut pred = vec![UNREACHED; n];
    let mut heap = BinaryHeap::new();
    for (i, &t) in terms.iter().enumerate() {
        dist[t] = 0;
        owner[t] = i;
        heap.push(Reverse((0u64, t)));
    }
    while let Some(Reverse((d, v))) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(u, w) in graph.neighbors(v) {
            let (u, nd) = (u as usize, d + w as u64);
            if nd < dist[u] {
                dist[u] = nd;
                hops[u] = hops[v] + 1;
                owner[u] = owner[v];
                pred[u] = v;
                heap.push(Reverse((nd, u)));
            }
        }
    }

    // Boundary edges between regions, cheapest path first; ties prefer paths with fewer
    // intermediate nodes, then smaller endpoints.
    let mut bridges: Vec<(u64, u64, WeightedEdge)> = graph
        .edges()
        .iter()
        .filter(|e| {
            let (oa, ob) = (owner[e.a as usize], owner[e.b as usize]);
            oa != UNREACHED && ob != UNREACHED && oa != ob
        })
        .map(|e| {
            let (a, b) = (e.a as usize, e.b as usize);
            (dist[a] + e.cost as u64 + dist[b], hops[a] + hops[b], *e)
        })
        .collect();
    bridges.sort_by_key(|&(len, hops, e)| (len, hops, e.a, e.b));

    let mut regions = UnionFind::new(terms.len());
    let mut chosen: Vec<WeightedEdge> = Vec::new();
    let mut cost_of = BTreeMap::new();
    for e in graph.edges() {
        cost_of.insert((e.a, e.b), e.cost);
    }
    let edge = |u: usize, v: usize| WeightedEdge::new(u, v, cost_of[&(u.min(v) as u32, u.max(v) as u32)]);
    for &(_, _, e) in &bridges {
        if !regions.union(owner[e.a as usize], owner[e.b as usize]) {
            continue;
        }
        chosen.push(e);
        for end in [e.a as usize, e.b as usize] {
            let mut v = end;
            while pred[v] != UNREACHED {
                chosen.push(edge(v, pred[v]));
                v = pred[v];
            }
        }
    }

    // Expanded paths may overlap; keep a minimum spanning forest of them, then trim.
    chosen.sort_by_key(WeightedEdge::order_key);
    chosen.dedup();
    let mut forest = UnionFind::new(n);
    let mut kept: Vec<WeightedEdge> = chosen.into_iter().filter(|e| forest.union(e.a as usize, e.b as usize)).collect();
    prune_leaves(&mut kept, &is_terminal, n);

    let mut in_tree = is_terminal.clone();
    for e in &kept {
        in_tree[e.a as usize] = true;
        in_tree[e.b as usize] = true;
    }
    kept.sort();
    SteinerResult {
        nodes: (0..n).filter(|&v| in_tree[v]).collect(),
        aux: (0..n).filter(|&v| in_tree[v] && !is_terminal[v]).collect(),
        total_cost: kept.iter().map(|e| e.cost as u64).sum(),
        edges: kept,
    }
}

fn prune_leaves(edges: &mut Vec<WeightedEdge>, is_terminal: &[bool], n: usize) {
    let mut degree = vec![0usize; n];
    for e in edges.iter() {
        degree[e.a as usize] += 1;
        degree[e.b as usize] += 1;
    }
    loop {
        let before = edges.len();
        edges.retain(|e| {
            let leaf = |v: u32| degree[v as usize] == 1 && !is_terminal[v as usize];
            !(leaf(e.a) || leaf(e.b))
        });
        if edges.len() == before {
            return;
        }
        degree.iter_mut().for_each(|d| *d = 0);
        for e in edges.iter() {
            degree[e.a as usize] += 1;
            degree[e.b as usize] += 1;
        }
    }
}

/// Indices of the `m` highest scores; ties go to the lower index.
pub fn top_m(scores: &[f64], m: usize) -> Vec<usize> {
    let mut order = rank_order(scores);
    order.truncate(m);
    order
}

/// All indices by descending score, ties by ascending index.
pub fn rank_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Terminal,
    Auxiliary,
}

/// The closed column set C* with a role per column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Closure {
    /// (node, role), ascending by node.
    pub columns: Vec<(usize, ColumnRole)>,
    pub tree: SteinerResult,
}

impl Closure {
    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.columns.iter().map(|c| c.0)
    }
}

/// Connects an explicit terminal set.
pub fn close_terminals(graph: &FdGraph, terminals: &TerminalSet) -> Closure {
    let tree = greedy_steiner(&edge_costs(graph, terminals), terminals);
    let mut columns: Vec<(usize, ColumnRole)> = terminals.as_slice().iter().map(|&t| (t, ColumnRole::Terminal)).collect();
    columns.extend(tree.aux.iter().map(|&a| (a, ColumnRole::Auxiliary)));
    columns.sort();
    Closure { columns, tree }
}

/// Top-`m` columns closed under join connectivity. `m` is clamped to the node count.
pub fn closure(scores: &[f64], graph: &FdGraph, m: usize) -> Result<Closure, SteinerError> {
    assert_eq!(scores.len(), graph.node_count(), "one score per column");
    let terminals = TerminalSet::new(top_m(scores, m.max(1)), graph.node_count())?;
    Ok(close_terminals(graph, &terminals))
}
