use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, Axis};

use super::params::{LayerParams, RerankerParams};
use super::RerankerError;
use crate::graph::{EdgeKind, FdGraph};
use crate::scalar::Scalar;

const ABSENT: u32 = u32::MAX;

/// Rows touched by one relation: edge sources need K and V projections, targets need Q.
#[derive(Debug, Clone, Default)]
struct RelRows {
    src: Vec<usize>,
    tgt: Vec<usize>,
}

/// Attention topology of a dependency graph: incoming edges grouped by target.
#[derive(Debug, Clone)]
pub struct RelGraph {
    n: usize,
    offsets: Vec<usize>,
    src: Vec<u32>,
    rel: Vec<u8>,
    /// Position of the edge source inside its relation's `src` rows.
    src_slot: Vec<u32>,
    /// Position of the edge target inside its relation's `tgt` rows.
    tgt_slot: Vec<u32>,
    rows: Vec<Option<RelRows>>,
}

impl RelGraph {
    pub fn new(graph: &FdGraph) -> Self {
        let triples: Vec<(usize, usize, usize)> =
            graph.edges().iter().map(|e| (e.source as usize, e.target as usize, e.kind.index())).collect();
        Self::from_triples(graph.node_count(), &triples)
    }

    /// Builds from `(source, target, relation index)` triples.
    pub fn from_triples(n: usize, triples: &[(usize, usize, usize)]) -> Self {
        let mut offsets = vec![0usize; n + 1];
        for &(_, t, _) in triples {
            offsets[t + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let m = triples.len();
        let (mut src, mut rel, mut tgt_of) = (vec![0u32; m], vec![0u8; m], vec![0usize; m]);
        // Stable within each target: edges keep their input order.
        for &(s, t, r) in triples {
            let slot = fill[t];
            fill[t] += 1;
            src[slot] = s as u32;
            rel[slot] = r as u8;
            tgt_of[slot] = t;
        }
        let mut src_pos = vec![vec![ABSENT; n]; EdgeKind::COUNT];
        let mut tgt_pos = vec![vec![ABSENT; n]; EdgeKind::COUNT];
        let mut rows: Vec<Option<RelRows>> = vec![None; EdgeKind::COUNT];
        let (mut src_slot, mut tgt_slot) = (vec![0u32; m], vec![0u32; m]);
        for e in 0..m {
            let r = rel[e] as usize;
            let rr = rows[r].get_or_insert_with(RelRows::default);
            let (s, t) = (src[e] as usize, tgt_of[e]);
            if src_pos[r][s] == ABSENT {
                src_pos[r][s] = rr.src.len() as u32;
                rr.src.push(s);
            }
            if tgt_pos[r][t] == ABSENT {
                tgt_pos[r][t] = rr.tgt.len() as u32;
                rr.tgt.push(t);
            }
            src_slot[e] = src_pos[r][s];
            tgt_slot[e] = tgt_pos[r][t];
        }
        Self { n, offsets, src, rel, src_slot, tgt_slot, rows }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.src.len()
    }

    /// Edge ids ending at `v`; ids index the attention vectors of a trace.
    pub fn incoming(&self, v: usize) -> std::ops::Range<usize> {
        self.offsets[v]..self.offsets[v + 1]
    }

    /// `(source, relation)` of an edge id.
    pub fn edge(&self, e: usize) -> (usize, EdgeKind) {
        (self.src[e] as usize, EdgeKind::from_index(self.rel[e] as usize).expect("valid relation"))
    }
}

#[derive(Debug, Clone)]
struct RelCache<T> {
    qm: Array2<T>,
    km: Array2<T>,
    vm: Array2<T>,
}

#[derive(Debug, Clone)]
struct LayerCache<T> {
    h_in: Array2<T>,
    rel: Vec<Option<RelCache<T>>>,
    alpha: Vec<T>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    x: Array2<T>,
    layers: Vec<LayerCache<T>>,
    /// Refined node vectors h(L), one row per node.
    pub hidden: Array2<T>,
    /// Scores `w·h(L) + b`.
    pub scores: Array1<T>,
}

impl<T: Scalar> Trace<T> {
    /// Attention coefficients of `layer`, indexed by edge id.
    pub fn attention(&self, layer: usize) -> &[T] {
        &self.layers[layer].alpha
    }
}

fn dot<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

fn axpy<T: Scalar>(alpha: T, x: ArrayView1<T>, mut y: ArrayViewMut1<T>) {
    y.zip_mut_with(&x, |yi, xi| *yi = *yi + alpha * *xi);
}

// Products of thin matrices may come back in column-major order; rows are addressed through views so layout never matters.
fn row<T>(m: &Array2<T>, i: usize) -> ArrayView1<'_, T> {
    m.row(i)
}

fn row_mut<T>(m: &mut Array2<T>, i: usize) -> ArrayViewMut1<'_, T> {
    m.row_mut(i)
}

fn layer_forward<T: Scalar>(
    g: &RelGraph,
    h: &Array2<T>,
    layer: &LayerParams<T>,
    key_dim: usize,
    keep: bool,
) -> (Array2<T>, Option<LayerCache<T>>) {
    let mut out = h.dot(&layer.w_self.t());
    let rel: Vec<Option<RelCache<T>>> = g
        .rows
        .iter()
        .enumerate()
        .map(|(r, rows)| {
            rows.as_ref().map(|rows| {
                let hs = h.select(Axis(0), &rows.src);
                let ht = h.select(Axis(0), &rows.tgt);
                RelCache { qm: ht.dot(&layer.q[r].t()), km: hs.dot(&layer.k[r].t()), vm: hs.dot(&layer.w_rel[r].t()) }
            })
        })
        .collect();
    let scale = T::one() / T::lit(key_dim as f64).sqrt();
    let mut alpha = vec![T::zero(); g.edge_count()];
    for v in 0..g.n {
        let range = g.incoming(v);
        if range.is_empty() {
            continue;
        }
        let mut max = T::neg_infinity();
        for e in range.clone() {
            let c = rel[g.rel[e] as usize].as_ref().expect("relation present");
            let logit = dot(row(&c.qm, g.tgt_slot[e] as usize), row(&c.km, g.src_slot[e] as usize)) * scale;
            alpha[e] = logit;
            max = max.max(logit);
        }
        let mut total = T::zero();
        for e in range.clone() {
            alpha[e] = (alpha[e] - max).exp();
            total = total + alpha[e];
        }
        let mut out_v = row_mut(&mut out, v);
        for e in range {
            alpha[e] = alpha[e] / total;
            let c = rel[g.rel[e] as usize].as_ref().expect("relation present");
            axpy(alpha[e], row(&c.vm, g.src_slot[e] as usize), out_v.view_mut());
        }
    }
    let cache = keep.then(|| LayerCache { h_in: h.clone(), rel, alpha });
    (out, cache)
}

fn check_finite<T: Scalar>(h: &Array2<T>, stage: &str) -> Result<(), RerankerError> {
    if let Some((i, _)) = h.indexed_iter().find(|(_, x)| !x.is_finite()) {
        return Err(RerankerError::NonFinite(format!("{stage}: node {}, dimension {}", i.0, i.1)));
    }
    Ok(())
}

fn run<T: Scalar>(
    g: &RelGraph,
    x: ArrayView2<T>,
    params: &RerankerParams<T>,
    keep: bool,
) -> Result<(Array2<T>, Vec<LayerCache<T>>), RerankerError> {
    params.check_input(x.nrows(), x.ncols(), g.n)?;
    let mut h = match &params.input_proj {
        Some(p) => x.dot(&p.t()),
        None => x.to_owned(),
    };
    check_finite(&h, "input")?;
    let mut caches = Vec::new();
    for (l, layer) in params.layers.iter().enumerate() {
        let (next, cache) = layer_forward(g, &h, layer, params.shape.key_dim, keep);
        check_finite(&next, &format!("layer {}", l + 1))?;
        caches.extend(cache);
        h = next;
    }
    Ok((h, caches))
}

/// Refined node vectors h(L). With zero layers this is the (projected) input.
pub fn forward<T: Scalar>(g: &RelGraph, x: ArrayView2<T>, params: &RerankerParams<T>) -> Result<Array2<T>, RerankerError> {
    Ok(run(g, x, params, false)?.0)
}

/// Linear head: `w·h_v + b` per node.
pub fn score<T: Scalar>(hidden: &Array2<T>, params: &RerankerParams<T>) -> Array1<T> {
    hidden.dot(&params.w) + params.b
}

pub fn score_nodes<T: Scalar>(
    g: &RelGraph,
    x: ArrayView2<T>,
    params: &RerankerParams<T>,
) -> Result<Array1<T>, RerankerError> {
    let h = forward(g, x, params)?;
    Ok(score(&h, params))
}

/// Forward pass that keeps intermediate values for `backward`.
pub fn forward_trace<T: Scalar>(
    g: &RelGraph,
    x: ArrayView2<T>,
    params: &RerankerParams<T>,
) -> Result<Trace<T>, RerankerError> {
    let (hidden, layers) = run(g, x, params, true)?;
    let scores = score(&hidden, params);
    Ok(Trace { x: x.to_owned(), layers, hidden, scores })
}

/// Gradients of a loss with respect to every parameter, given `d loss / d score`.
pub fn backward<T: Scalar>(
    g: &RelGraph,
    trace: &Trace<T>,
    params: &RerankerParams<T>,
    dscores: ArrayView1<T>,
) -> RerankerParams<T> {
    let mut grads = params.zeros_like();
    grads.w = trace.hidden.t().dot(&dscores);
    grads.b = dscores.sum();
    // dL/dH(L) = dscores ⊗ w.
    let mut gh = dscores.to_owned().insert_axis(Axis(1)).dot(&params.w.view().insert_axis(Axis(0)));
    let scale = T::one() / T::lit(params.shape.key_dim as f64).sqrt();
    for (l, layer) in params.layers.iter().enumerate().rev() {
        let cache = &trace.layers[l];
        let gl = &mut grads.layers[l];
        gl.w_self = standard(gh.t().dot(&cache.h_in));
        let mut dh = gh.dot(&layer.w_self);
        let mut dv: Vec<Option<(Array2<T>, Array2<T>, Array2<T>)>> = cache
            .rel
            .iter()
            .map(|c| c.as_ref().map(|c| (Array2::zeros(c.qm.raw_dim()), Array2::zeros(c.km.raw_dim()), Array2::zeros(c.vm.raw_dim()))))
            .collect();
        let mut dalpha: Vec<T> = Vec::new();
        for v in 0..g.n {
            let range = g.incoming(v);
            if range.is_empty() {
                continue;
            }
            let gv = row(&gh, v);
            dalpha.clear();
            let mut mean = T::zero();
            for e in range.clone() {
                let r = g.rel[e] as usize;
                let c = cache.rel[r].as_ref().expect("relation present");
                let s = g.src_slot[e] as usize;
                let da = dot(gv, row(&c.vm, s));
                dalpha.push(da);
                mean = mean + cache.alpha[e] * da;
                let (_, _, dvm) = dv[r].as_mut().expect("relation present");
                axpy(cache.alpha[e], gv, row_mut(dvm, s));
            }
            for (i, e) in range.enumerate() {
                let r = g.rel[e] as usize;
                let c = cache.rel[r].as_ref().expect("relation present");
                let (s, t) = (g.src_slot[e] as usize, g.tgt_slot[e] as usize);
                let dlogit = cache.alpha[e] * (dalpha[i] - mean) * scale;
                let (dqm, dkm, _) = dv[r].as_mut().expect("relation present");
                axpy(dlogit, row(&c.km, s), row_mut(dqm, t));
                axpy(dlogit, row(&c.qm, t), row_mut(dkm, s));
            }
        }
        for (r, d) in dv.into_iter().enumerate() {
            let Some((dqm, dkm, dvm)) = d else { continue };
            let rows = g.rows[r].as_ref().expect("relation present");
            let hs = cache.h_in.select(Axis(0), &rows.src);
            let ht = cache.h_in.select(Axis(0), &rows.tgt);
            gl.w_rel[r] = standard(dvm.t().dot(&hs));
            gl.k[r] = standard(dkm.t().dot(&hs));
            gl.q[r] = standard(dqm.t().dot(&ht));
            let dhs = dvm.dot(&layer.w_rel[r]) + dkm.dot(&layer.k[r]);
            let dht = dqm.dot(&layer.q[r]);
            for (i, &node) in rows.src.iter().enumerate() {
                axpy(T::one(), row(&dhs, i), row_mut(&mut dh, node));
            }
            for (i, &node) in rows.tgt.iter().enumerate() {
                axpy(T::one(), row(&dht, i), row_mut(&mut dh, node));
            }
        }
        gh = dh;
    }
    if let Some(g_p) = grads.input_proj.as_mut() {
        *g_p = standard(gh.t().dot(&trace.x));
    }
    grads
}

fn standard<T: Clone>(m: Array2<T>) -> Array2<T> {
    if m.is_standard_layout() {
        m
    } else {
        m.as_standard_layout().into_owned()
    }
}
