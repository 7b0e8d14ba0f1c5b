use std::collections::BTreeMap;
use std::path::Path;

use super::index::{Bm25Params, ColumnPostings, InvertedIndex};
use super::ValueError;
use crate::codec::{find_section, read_container, write_container, ByteReader, ByteWriter, CodecError};
use crate::schema::ColumnRef;

pub const INDEX_TAG: [u8; 4] = *b"VIDX";
const INDEX_VERSION: u32 = 1;

/// Encodes the index payload (for embedding in a container next to other sections).
pub fn index_section(index: &InvertedIndex) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.u32(INDEX_VERSION);
    w.f64(index.params.k1);
    w.f64(index.params.b);
    w.u64(index.params.max_token_chars as u64);
    w.u64(index.columns.len() as u64);
    for (col, p) in &index.columns {
        w.str(&col.table);
        w.str(&col.column);
        w.u64(p.values.len() as u64);
        for (v, &len) in p.values.iter().zip(&p.doc_len) {
            w.str(v);
            w.u32(len);
        }
        w.u64(p.postings.len() as u64);
        for (term, list) in &p.postings {
            w.str(term);
            w.u64(list.len() as u64);
            for &(id, tf) in list {
                w.u32(id);
                w.u32(tf);
            }
        }
    }
    w.into_inner()
}

pub fn serialize_index(index: &InvertedIndex) -> Vec<u8> {
    write_container(&[(INDEX_TAG, index_section(index))])
}

pub fn deserialize_index(bytes: &[u8]) -> Result<InvertedIndex, ValueError> {
    let sections = read_container(bytes)?;
    let mut r = ByteReader::new(find_section(&sections, INDEX_TAG)?);
    let version = r.u32()?;
    if version != INDEX_VERSION {
        return Err(CodecError::VersionMismatch { found: version, expected: INDEX_VERSION }.into());
    }
    let params = Bm25Params { k1: r.f64()?, b: r.f64()?, max_token_chars: r.u64()? as usize };
    let ncols = r.u64()?;
    let mut columns = BTreeMap::new();
    for _ in 0..ncols {
        let col = ColumnRef::new(r.str()?, r.str()?);
        let mut p = ColumnPostings::default();
        for _ in 0..r.u64()? {
            p.values.push(r.str()?);
            p.doc_len.push(r.u32()?);
        }
        for _ in 0..r.u64()? {
            let term = r.str()?;
            let len = r.u64()? as usize;
            let mut list = Vec::with_capacity(len.min(r.remaining() / 8));
            for _ in 0..len {
                list.push((r.u32()?, r.u32()?));
            }
            p.postings.insert(term, list);
        }
        p.check().map_err(|m| CodecError::Invalid(format!("{col}: {m}")))?;
        if columns.insert(col.clone(), p).is_some() {
            return Err(CodecError::Invalid(format!("duplicate column `{col}`")).into());
        }
    }
    r.expect_end()?;
    Ok(InvertedIndex { params, columns })
}

pub fn save_index(index: &InvertedIndex, path: &Path) -> Result<(), ValueError> {
    std::fs::write(path, serialize_index(index)).map_err(|e| ValueError::Io(path.display().to_string(), e))
}

pub fn load_index(path: &Path) -> Result<InvertedIndex, ValueError> {
    let bytes = std::fs::read(path).map_err(|e| ValueError::Io(path.display().to_string(), e))?;
    deserialize_index(&bytes)
}
