use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::context::{render_context, ColumnContext};
use super::hash::hash_embed;
use super::ProviderError;

/// Anything that turns (query, column context) pairs into fixed-width vectors.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    /// Identifies the model behind the vectors; embeddings from different versions never mix.
    fn version(&self) -> String;
    /// Order-preserving batch embedding.
    fn embed_batch(&self, items: &[(&str, &ColumnContext)]) -> Result<Vec<Vec<f32>>, ProviderError>;
}

/// Embeds one pair and checks the provider contract (dimension, finiteness).
pub fn embed(provider: &dyn EmbeddingProvider, query: &str, ctx: &ColumnContext) -> Result<Vec<f32>, ProviderError> {
    let mut out = embed_checked(provider, &[(query, ctx)])?;
    Ok(out.pop().expect("one item in, one out"))
}

/// `embed_batch` plus contract checks on every returned vector.
pub fn embed_checked(
    provider: &dyn EmbeddingProvider,
    items: &[(&str, &ColumnContext)],
) -> Result<Vec<Vec<f32>>, ProviderError> {
    let out = provider.embed_batch(items)?;
    if out.len() != items.len() {
        return Err(ProviderError::Malformed(format!("{} results for {} items", out.len(), items.len())));
    }
    for v in &out {
        if v.len() != provider.dim() {
            return Err(ProviderError::DimensionMismatch { expected: provider.dim(), found: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ProviderError::Malformed("non-finite embedding entry".into()));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct HashProvider {
    dim: usize,
}

impl HashProvider {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 8, "hash embedding needs at least 8 dimensions");
        Self { dim }
    }
}

impl EmbeddingProvider for HashProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn version(&self) -> String {
        format!("hash-v1-{}", self.dim)
    }

    fn embed_batch(&self, items: &[(&str, &ColumnContext)]) -> Result<Vec<Vec<f32>>, ProviderError> {
        Ok(items.iter().map(|(q, c)| hash_embed(q, c, self.dim)).collect())
    }
}

/// On-disk memo keyed by a content hash of (provider version, query, rendered context).
pub struct CachedProvider<P> {
    inner: P,
    dir: PathBuf,
}

impl<P: EmbeddingProvider> CachedProvider<P> {
    pub fn new(inner: P, dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { inner, dir })
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    fn key(&self, query: &str, ctx: &ColumnContext) -> String {
        let mut h = Sha256::new();
        for part in [self.inner.version().as_str(), query, &render_context(ctx)] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn read(&self, path: &Path) -> Option<Vec<f32>> {
        let bytes = std::fs::read(path).ok()?;
        if bytes.len() != self.inner.dim() * 4 {
            return None;
        }
        Some(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedProvider<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn version(&self) -> String {
        self.inner.version()
    }

    fn embed_batch(&self, items: &[(&str, &ColumnContext)]) -> Result<Vec<Vec<f32>>, ProviderError> {
        let paths: Vec<PathBuf> = items.iter().map(|(q, c)| self.dir.join(self.key(q, c))).collect();
        let mut out: Vec<Option<Vec<f32>>> = paths.iter().map(|p| self.read(p)).collect();
        let missing: Vec<usize> = (0..items.len()).filter(|&i| out[i].is_none()).collect();
        if !missing.is_empty() {
            let batch: Vec<(&str, &ColumnContext)> = missing.iter().map(|&i| items[i]).collect();
            let fresh = embed_checked(&self.inner, &batch)?;
            for (&i, v) in missing.iter().zip(fresh) {
                let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
                let tmp = paths[i].with_extension("tmp");
                // A failed cache write only costs a recomputation later.
                if std::fs::write(&tmp, &bytes).and_then(|_| std::fs::rename(&tmp, &paths[i])).is_err() {
                    log::debug!("could not cache embedding at {}", paths[i].display());
                }
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled")).collect())
    }
}
