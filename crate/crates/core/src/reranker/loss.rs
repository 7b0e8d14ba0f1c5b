use ndarray::Array1;

use super::RerankerError;
use crate::scalar::Scalar;

/// Hinge over every (positive, negative) pair: Σ max(0, γ − s⁺ + s⁻).
pub fn margin_loss<T: Scalar>(scores: &[T], positives: &[usize], negatives: &[usize], gamma: T) -> Result<T, RerankerError> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(RerankerError::EmptySet);
    }
    let pairs: Vec<(usize, usize)> =
        positives.iter().flat_map(|&p| negatives.iter().map(move |&n| (p, n))).collect();
    Ok(margin_loss_pairs(scores, &pairs, gamma))
}

/// Hinge over an explicit list of (positive, negative) node pairs.
pub fn margin_loss_pairs<T: Scalar>(scores: &[T], pairs: &[(usize, usize)], gamma: T) -> T {
    pairs.iter().map(|&(p, n)| (gamma - scores[p] + scores[n]).max(T::zero())).sum()
}

/// Loss and its gradient with respect to each score. Pairs sitting exactly on the hinge count as inactive.
pub fn margin_grad<T: Scalar>(scores: &[T], pairs: &[(usize, usize)], gamma: T) -> (T, Array1<T>) {
    let mut grad = Array1::zeros(scores.len());
    let mut loss = T::zero();
    for &(p, n) in pairs {
        let slack = gamma - scores[p] + scores[n];
        if slack > T::zero() {
            loss = loss + slack;
            grad[p] = grad[p] - T::one();
            grad[n] = grad[n] + T::one();
        }
    }
    (loss, grad)
}

/// −log softmax of the positive among {positive} ∪ negatives, with max subtraction.
pub fn infonce_loss<T: Scalar>(pos: T, negs: &[T]) -> Result<T, RerankerError> {
    if negs.is_empty() {
        return Err(RerankerError::EmptySet);
    }
    let max = negs.iter().fold(pos, |m, &x| m.max(x));
    let total: T = std::iter::once(pos).chain(negs.iter().copied()).map(|x| (x - max).exp()).sum();
    Ok(max + total.ln() - pos)
}
