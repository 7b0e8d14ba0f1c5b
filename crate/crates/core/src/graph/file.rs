use std::path::Path;

use super::{Edge, EdgeKind, FdGraph, GraphError};
use crate::codec::{find_section, read_container, write_container, ByteReader, ByteWriter, CodecError};
use crate::schema::ColumnRef;

pub const GRAPH_TAG: [u8; 4] = *b"GRPH";
const GRAPH_VERSION: u32 = 1;

/// Encodes the graph as a `GRPH` section: node names, then `(source, target, kind)` triples.
pub fn serialize_graph(graph: &FdGraph) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.u32(GRAPH_VERSION);
    w.u64(graph.node_count() as u64);
    for n in graph.nodes() {
        w.str(&n.table);
        w.str(&n.column);
    }
    w.u64(graph.edge_count() as u64);
    for e in graph.edges() {
        w.u32(e.source);
        w.u32(e.target);
        w.u8(e.kind.index() as u8);
    }
    write_container(&[(GRAPH_TAG, w.into_inner())])
}

pub fn deserialize_graph(bytes: &[u8]) -> Result<FdGraph, GraphError> {
    let sections = read_container(bytes)?;
    let payload = find_section(&sections, GRAPH_TAG)?;
    let mut r = ByteReader::new(payload);
    let version = r.u32()?;
    if version != GRAPH_VERSION {
        return Err(CodecError::VersionMismatch { found: version, expected: GRAPH_VERSION }.into());
    }
    let n = r.u64()? as usize;
    let mut nodes = Vec::with_capacity(n.min(r.remaining()));
    for _ in 0..n {
        let table = r.str()?;
        let column = r.str()?;
        nodes.push(ColumnRef::new(table, column));
    }
    let m = r.u64()? as usize;
    let mut edges = Vec::with_capacity(m.min(r.remaining() / 9));
    for _ in 0..m {
        let source = r.u32()?;
        let target = r.u32()?;
        let k = r.u8()?;
        let kind = EdgeKind::from_index(k as usize)
            .ok_or_else(|| CodecError::Invalid(format!("unknown edge kind {k}")))?;
        edges.push(Edge { source, target, kind });
    }
    r.expect_end()?;
    FdGraph::from_parts(nodes, edges).map_err(|m| CodecError::Invalid(m).into())
}

pub fn save_graph(graph: &FdGraph, path: &Path) -> Result<(), GraphError> {
    std::fs::write(path, serialize_graph(graph)).map_err(|e| GraphError::Io(path.display().to_string(), e))
}

pub fn load_graph(path: &Path) -> Result<FdGraph, GraphError> {
    let bytes = std::fs::read(path).map_err(|e| GraphError::Io(path.display().to_string(), e))?;
    deserialize_graph(&bytes)
}
