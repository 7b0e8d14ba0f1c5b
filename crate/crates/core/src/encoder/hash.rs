//! Deterministic feature-hashing embedder, the offline stand-in for an LLM encoder.

use std::collections::HashSet;

use super::context::ColumnContext;
use crate::text::tokenize;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h = FNV_OFFSET;
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            // Separator so ("ab", "c") and ("a", "bc") hash differently.
            h ^= 0xff;
            h = h.wrapping_mul(FNV_PRIME);
        }
        for &b in *p {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    // Final avalanche; FNV alone mixes the low bits poorly.
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h
}

const BIGRAM_WEIGHT: f32 = 0.5;
const MATCH_WEIGHT: f32 = 1.0;
const FINGERPRINT_WEIGHT: f32 = 0.05;
const FINGERPRINT_TAPS: usize = 4;

struct Sink<'a> {
    v: &'a mut [f32],
    any: bool,
}

impl Sink<'_> {
    fn add(&mut self, salt: &str, feature: &str, weight: f32) {
        let h = fnv1a(&[salt.as_bytes(), feature.as_bytes()]);
        let bucket = (h % self.v.len() as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        self.v[bucket] += sign * weight;
        self.any = true;
    }

    fn add_text(&mut self, salt: &str, tokens: &[String]) {
        for t in tokens {
            self.add(salt, t, 1.0);
        }
        for pair in tokens.windows(2) {
            self.add(salt, &format!("{} {}", pair[0], pair[1]), BIGRAM_WEIGHT);
        }
    }
}

fn fields(ctx: &ColumnContext) -> [(&'static str, String); 8] {
    [
        ("table", ctx.table_name.clone()),
        ("column", ctx.column_name.clone()),
        ("table_desc", ctx.table_description.clone()),
        ("column_desc", ctx.column_description.clone()),
        ("type", ctx.data_type.clone()),
        ("samples", ctx.sample_values.join(" ")),
        ("missing", if ctx.missingness_flag { "nullable".into() } else { String::new() }),
        ("value_desc", ctx.value_description.clone()),
    ]
}

/// Embeds a (query, column) pair into `dim` buckets, L2-normalised.
///
/// Features: query n-grams in a shared query channel; each context field's n-grams
/// with a field-specific salt; context tokens that also occur in the query are added
/// again to the query channel and counted in a fixed per-field match bucket (so a linear
/// model can read overlap); and a small content fingerprint that separates inputs whose
/// token features happen to collide. An input with no tokens maps to the first basis vector.
pub fn hash_embed(query: &str, ctx: &ColumnContext, dim: usize) -> Vec<f32> {
    assert!(dim >= 8, "hash embedding needs at least 8 dimensions");
    let mut v = vec![0.0f32; dim];
    let mut sink = Sink { v: &mut v, any: false };
    let q_tokens = tokenize(query);
    sink.add_text("query", &q_tokens);
    let q_set: HashSet<&str> = q_tokens.iter().map(String::as_str).collect();
    let mut fingerprint = Vec::new();
    for (salt, text) in fields(ctx) {
        let tokens = tokenize(&text);
        sink.add_text(salt, &tokens);
        let mut seen = HashSet::new();
        for t in &tokens {
            if q_set.contains(t.as_str()) && seen.insert(t.as_str()) {
                sink.add("query", t, 1.0);
                let bucket = (fnv1a(&[b"match", salt.as_bytes()]) % dim as u64) as usize;
                sink.v[bucket] += MATCH_WEIGHT;
            }
        }
        fingerprint.push(text);
    }
    if !sink.any {
        v[0] = 1.0;
        return v;
    }
    let mut parts: Vec<&[u8]> = vec![query.as_bytes()];
    parts.extend(fingerprint.iter().map(|s| s.as_bytes()));
    let joined_samples = serde_json::to_string(&ctx.sample_values).expect("strings serialize");
    parts.push(joined_samples.as_bytes());
    let mut h = fnv1a(&parts);
    for _ in 0..FINGERPRINT_TAPS {
        let bucket = (h % dim as u64) as usize;
        let sign = if (h >> 62) & 1 == 0 { 1.0 } else { -1.0 };
        let scale = 1.0 + ((h >> 32) & 0xffff) as f32 / 65536.0;
        sink.v[bucket] += sign * FINGERPRINT_WEIGHT * scale;
        h = fnv1a(&[&h.to_le_bytes()]);
    }
    normalize(&mut v);
    v
}

/// The query on its own, in the same space as `hash_embed`'s query channel.
pub fn hash_embed_query(query: &str, dim: usize) -> Vec<f32> {
    assert!(dim >= 8, "hash embedding needs at least 8 dimensions");
    let mut v = vec![0.0f32; dim];
    let mut sink = Sink { v: &mut v, any: false };
    sink.add_text("query", &tokenize(query));
    if !sink.any {
        v[0] = 1.0;
        return v;
    }
    normalize(&mut v);
    v
}

fn normalize(v: &mut [f32]) {
    let norm = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
    if norm == 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x = (*x as f64 / norm) as f32);
    }
}
