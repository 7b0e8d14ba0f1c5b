use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::schema::{fold, ColumnRef, DatabaseSchema};

/// Relation types of the dependency graph: three forward kinds and their reverses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    ForeignKey,
    ColumnToForeignKey,
    ColumnToPrimaryKey,
    RevForeignKey,
    RevColumnToForeignKey,
    RevColumnToPrimaryKey,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 6] = [
        EdgeKind::ForeignKey,
        EdgeKind::ColumnToForeignKey,
        EdgeKind::ColumnToPrimaryKey,
        EdgeKind::RevForeignKey,
        EdgeKind::RevColumnToForeignKey,
        EdgeKind::RevColumnToPrimaryKey,
    ];
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::ForeignKey => "foreign_key",
            EdgeKind::ColumnToForeignKey => "column_to_foreign_key",
            EdgeKind::ColumnToPrimaryKey => "column_to_primary_key",
            EdgeKind::RevForeignKey => "rev_foreign_key",
            EdgeKind::RevColumnToForeignKey => "rev_column_to_foreign_key",
            EdgeKind::RevColumnToPrimaryKey => "rev_column_to_primary_key",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn reverse(self) -> Self {
        Self::ALL[(self.index() + 3) % 6]
    }

    pub fn is_forward(self) -> bool {
        self.index() < 3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub source: u32,
    pub target: u32,
    pub kind: EdgeKind,
}

/// Column-level typed dependency graph. Node order follows schema table/column order.
#[derive(Debug, Clone)]
pub struct FdGraph {
    nodes: Vec<ColumnRef>,
    edges: Vec<Edge>,
    node_index: HashMap<ColumnRef, usize>,
    node_table: Vec<u32>,
    key_flags: Vec<bool>,
}

impl PartialEq for FdGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes.len() == other.nodes.len()
            && self.nodes.iter().zip(&other.nodes).all(|(a, b)| a.table == b.table && a.column == b.column)
            && self.edges == other.edges
    }
}

impl FdGraph {
    /// Assembles a graph from raw parts, validating endpoints and deduplicating triples.
    pub fn from_parts(nodes: Vec<ColumnRef>, edges: Vec<Edge>) -> Result<Self, String> {
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if node_index.insert(n.clone(), i).is_some() {
                return Err(format!("duplicate node `{n}`"));
            }
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            if e.source as usize >= nodes.len() || e.target as usize >= nodes.len() {
                return Err(format!("edge {e:?} points outside the node table"));
            }
            if !seen.insert(*e) {
                return Err(format!("duplicate edge {e:?}"));
            }
        }
        let mut table_ids: HashMap<String, u32> = HashMap::new();
        let node_table = nodes
            .iter()
            .map(|n| {
                let next = table_ids.len() as u32;
                *table_ids.entry(fold(&n.table)).or_insert(next)
            })
            .collect();
        let mut key_flags = vec![false; nodes.len()];
        for e in &edges {
            match e.kind {
                EdgeKind::ForeignKey => {
                    key_flags[e.source as usize] = true;
                    key_flags[e.target as usize] = true;
                }
                EdgeKind::ColumnToForeignKey | EdgeKind::ColumnToPrimaryKey => key_flags[e.target as usize] = true,
                _ => {}
            }
        }
        Ok(Self { nodes, edges, node_index, node_table, key_flags })
    }

    pub fn nodes(&self) -> &[ColumnRef] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn index_of(&self, col: &ColumnRef) -> Option<usize> {
        self.node_index.get(col).copied()
    }

    /// Dense table id of a node, in first-appearance order.
    pub fn table_of(&self, node: usize) -> u32 {
        self.node_table[node]
    }

    pub fn table_count(&self) -> usize {
        self.node_table.iter().max().map_or(0, |m| *m as usize + 1)
    }

    /// Whether a node is a primary-key member or a foreign-key endpoint, as read from the edges.
    pub fn is_key(&self, node: usize) -> bool {
        self.key_flags[node]
    }

    /// Incoming edges grouped by target: `edges[ids[offsets[v]..offsets[v + 1]]]` end at `v`.
    pub fn incoming(&self) -> (Vec<usize>, Vec<usize>) {
        let n = self.nodes.len();
        let mut offsets = vec![0usize; n + 1];
        for e in &self.edges {
            offsets[e.target as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut ids = vec![0usize; self.edges.len()];
        for (i, e) in self.edges.iter().enumerate() {
            let slot = &mut fill[e.target as usize];
            ids[*slot] = i;
            *slot += 1;
        }
        (offsets, ids)
    }

    /// One line per edge: `source<TAB>type<TAB>target`.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                self.nodes[e.source as usize],
                e.kind.name(),
                self.nodes[e.target as usize]
            );
        }
        out
    }

    /// A copy with nodes reordered: node `i` of the result is node `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut new_pos = vec![0u32; order.len()];
        for (new, &old) in order.iter().enumerate() {
            new_pos[old] = new as u32;
        }
        let nodes = order.iter().map(|&o| self.nodes[o].clone()).collect();
        let edges = self
            .edges
            .iter()
            .map(|e| Edge { source: new_pos[e.source as usize], target: new_pos[e.target as usize], kind: e.kind })
            .collect();
        Self::from_parts(nodes, edges).expect("a permutation preserves validity")
    }
}

struct EdgeSet {
    edges: Vec<Edge>,
    seen: HashSet<Edge>,
}

impl EdgeSet {
    fn push(&mut self, source: usize, target: usize, kind: EdgeKind) {
        if source == target {
            return;
        }
        let e = Edge { source: source as u32, target: target as u32, kind };
        if self.seen.insert(e) {
            self.edges.push(e);
        }
    }
}

/// Builds the dependency graph of a schema whose keys are already merged.
///
/// Forward edges, in rule order: one `foreign_key` edge per link; `column_to_foreign_key`
/// edges from every non-key column of the link's source table to the source column and from
/// every non-key column of the referenced table to the referenced column; `column_to_primary_key`
/// edges from every non-primary-key column to each primary-key member. A column is non-key when
/// it is neither a primary-key member nor a foreign-key source of its table. Each forward edge
/// is then mirrored with its reverse kind.
pub fn build_fd_graph(schema: &DatabaseSchema) -> FdGraph {
    let nodes = schema.column_refs();
    let mut index: HashMap<ColumnRef, usize> = HashMap::with_capacity(nodes.len());
    for (i, n) in nodes.iter().enumerate() {
        index.insert(n.clone(), i);
    }
    let fk_sources: HashSet<ColumnRef> = schema.foreign_keys.iter().map(|fk| fk.source.clone()).collect();
    let is_non_key = |table: &str, column: &str| {
        let t = schema.table(table).expect("validated schema");
        !t.is_primary_key(column) && !fk_sources.contains(&ColumnRef::new(table, column))
    };
    let table_columns = |table: &str| -> Vec<ColumnRef> {
        let t = schema.table(table).expect("validated schema");
        t.columns.iter().map(|c| ColumnRef::new(t.name.clone(), c.name.clone())).collect()
    };

    let mut set = EdgeSet { edges: Vec::new(), seen: HashSet::new() };
    for fk in &schema.foreign_keys {
        set.push(index[&fk.source], index[&fk.target], EdgeKind::ForeignKey);
    }
    for fk in &schema.foreign_keys {
        for (anchor, table) in [(&fk.source, &fk.source.table), (&fk.target, &fk.target.table)] {
            let a = index[anchor];
            for col in table_columns(table) {
                if is_non_key(&col.table, &col.column) {
                    set.push(index[&col], a, EdgeKind::ColumnToForeignKey);
                }
            }
        }
    }
    for table in &schema.tables {
        if table.primary_key.is_empty() {
            continue;
        }
        let pk_nodes: Vec<usize> = table
            .primary_key
            .iter()
            .map(|p| index[&ColumnRef::new(table.name.clone(), p.clone())])
            .collect();
        for col in &table.columns {
            if table.is_primary_key(&col.name) {
                continue;
            }
            let c = index[&ColumnRef::new(table.name.clone(), col.name.clone())];
            for &p in &pk_nodes {
                set.push(c, p, EdgeKind::ColumnToPrimaryKey);
            }
        }
    }
    let forward = set.edges.len();
    for i in 0..forward {
        let e = set.edges[i];
        set.push(e.target as usize, e.source as usize, e.kind.reverse());
    }
    FdGraph::from_parts(nodes, set.edges).expect("construction yields a valid graph")
}
