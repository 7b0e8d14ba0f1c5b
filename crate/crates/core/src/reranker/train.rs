use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::forward::{backward, forward_trace, score_nodes, RelGraph};
use super::loss::{margin_grad, margin_loss};
use super::params::{RerankerParams, RerankerShape};
use super::RerankerError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub seed: u64,
    pub layers: usize,
    pub hidden: usize,
    pub key_dim: Option<usize>,
    pub optimizer: Optimizer,
    /// Abort once a step's loss exceeds this multiple of the first step's loss.
    pub divergence_factor: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            learning_rate: 5e-5,
            epochs: 40,
            batch_size: 32,
            negatives_per_positive: 7,
            seed: 0,
            layers: 3,
            hidden: 256,
            key_dim: None,
            optimizer: Optimizer::Sgd,
            divergence_factor: 10.0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), RerankerError> {
        if !(self.margin > 0.0) {
            return Err(RerankerError::Config("margin must be positive".into()));
        }
        if self.batch_size == 0 || self.negatives_per_positive == 0 || self.hidden == 0 {
            return Err(RerankerError::Config("batch size, negatives and hidden size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(RerankerError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn shape(&self, input_dim: usize) -> RerankerShape {
        RerankerShape {
            layers: self.layers,
            hidden: self.hidden,
            key_dim: self.key_dim.unwrap_or(self.hidden),
            input_dim,
        }
    }

    pub fn init_params<T: Scalar>(&self, input_dim: usize) -> RerankerParams<T> {
        RerankerParams::init(self.shape(input_dim), self.seed)
    }
}

/// One question: its graph, per-node input vectors, and labels as node indices.
#[derive(Debug, Clone)]
pub struct TrainExample<'a, T> {
    pub graph: &'a RelGraph,
    pub inputs: ArrayView2<'a, T>,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub steps: Vec<StepRecord>,
    /// Mean per-example loss of each epoch (sampled pairs, pre-update parameters).
    pub epoch_loss: Vec<f64>,
}

impl TrainReport {
    /// `epoch,step,loss` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,step,loss\n");
        for s in &self.steps {
            out.push_str(&format!("{},{},{}\n", s.epoch, s.step, s.loss));
        }
        out
    }
}

/// For every positive, `min(k, |negatives|)` distinct negatives.
pub fn sample_pairs(rng: &mut ChaCha8Rng, positives: &[usize], negatives: &[usize], k: usize) -> Vec<(usize, usize)> {
    let take = k.min(negatives.len());
    let mut pairs = Vec::with_capacity(positives.len() * take);
    for &p in positives {
        for i in rand::seq::index::sample(rng, negatives.len(), take).into_iter() {
            pairs.push((p, negatives[i]));
        }
    }
    pairs
}

/// Loss and parameter gradients for one example over the given pairs.
pub fn example_grad<T: Scalar>(
    params: &RerankerParams<T>,
    ex: &TrainExample<'_, T>,
    pairs: &[(usize, usize)],
    gamma: T,
) -> Result<(T, RerankerParams<T>), RerankerError> {
    let trace = forward_trace(ex.graph, ex.inputs, params)?;
    let scores = trace.scores.as_slice().expect("contiguous scores");
    let (loss, dscores) = margin_grad(scores, pairs, gamma);
    let grads = backward(ex.graph, &trace, params, dscores.view());
    Ok((loss, grads))
}

/// Mean full cross-product margin loss over a dataset.
pub fn dataset_loss<T: Scalar>(params: &RerankerParams<T>, data: &[TrainExample<'_, T>], gamma: f64) -> Result<f64, RerankerError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let losses: Result<Vec<f64>, RerankerError> = data
        .par_iter()
        .map(|ex| {
            let s = score_nodes(ex.graph, ex.inputs, params)?;
            Ok(margin_loss(s.as_slice().expect("contiguous"), &ex.positives, &ex.negatives, T::lit(gamma))?.to_f64_lossy())
        })
        .collect();
    Ok(losses?.iter().sum::<f64>() / data.len() as f64)
}

struct AdamState<T> {
    m: RerankerParams<T>,
    v: RerankerParams<T>,
    t: i32,
}

/// Trains from `init`. Shuffling and negative sampling draw from one seeded stream, and
/// per-example gradients are reduced in example order, so equal seeds give equal bits.
pub fn train<T: Scalar>(
    init: RerankerParams<T>,
    data: &[TrainExample<'_, T>],
    config: &TrainingConfig,
) -> Result<(RerankerParams<T>, TrainReport), RerankerError> {
    config.validate()?;
    for ex in data {
        if ex.positives.is_empty() || ex.negatives.is_empty() {
            return Err(RerankerError::EmptySet);
        }
    }
    let mut params = init;
    let mut report = TrainReport::default();
    if config.epochs == 0 || data.is_empty() {
        return Ok((params, report));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let gamma = T::lit(config.margin);
    let lr = T::lit(config.learning_rate);
    let mut adam = match config.optimizer {
        Optimizer::Adam { .. } => Some(AdamState { m: params.zeros_like(), v: params.zeros_like(), t: 0 }),
        Optimizer::Sgd => None,
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut initial: Option<f64> = None;
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let pairs: Vec<Vec<(usize, usize)>> = batch
                .iter()
                .map(|&i| sample_pairs(&mut rng, &data[i].positives, &data[i].negatives, config.negatives_per_positive))
                .collect();
            let results: Vec<Result<(T, RerankerParams<T>), RerankerError>> = batch
                .par_iter()
                .zip(pairs.par_iter())
                .map(|(&i, p)| example_grad(&params, &data[i], p, gamma))
                .collect();
            let mut total = params.zeros_like();
            let mut loss = 0.0;
            for r in results {
                let (l, g) = r?;
                loss += l.to_f64_lossy();
                total.axpy(T::one(), &g);
            }
            let n = batch.len() as f64;
            let loss = loss / n;
            epoch_total += loss * n;
            if !loss.is_finite() || !total.is_finite() {
                return Err(RerankerError::NonFinite(format!("gradient at epoch {epoch}, step {step}")));
            }
            let initial = *initial.get_or_insert(loss);
            if initial > 0.0 && loss > config.divergence_factor * initial {
                return Err(RerankerError::Diverged { step, loss, initial });
            }
            report.steps.push(StepRecord { epoch, step, loss });
            let scale = T::one() / T::lit(n);
            match (&mut adam, config.optimizer) {
                (Some(state), Optimizer::Adam { beta1, beta2, eps }) => {
                    state.t += 1;
                    let (b1, b2) = (T::lit(beta1), T::lit(beta2));
                    let c1 = T::one() - b1.powi(state.t);
                    let c2 = T::one() - b2.powi(state.t);
                    let eps = T::lit(eps);
                    let grads = total.tensors();
                    let ms = state.m.tensors_mut();
                    let vs = state.v.tensors_mut();
                    for (((p, g), m), v) in params.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs) {
                        for i in 0..p.len() {
                            let gi = g[i] * scale;
                            m[i] = b1 * m[i] + (T::one() - b1) * gi;
                            v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                            p[i] = p[i] - lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                        }
                    }
                }
                _ => params.axpy(-lr * scale, &total),
            }
            step += 1;
        }
        let mean = epoch_total / data.len() as f64;
        log::info!("epoch {} loss {:.6}", epoch + 1, mean);
        report.epoch_loss.push(mean);
    }
    Ok((params, report))
}
