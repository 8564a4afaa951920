//! Loss terms with their gradients.

use alloc::vec::Vec;

use super::layers::softmax_in_place;
use crate::error::{Error, Result};
use crate::real::Real;

/// `½ Σ (μ² + σ² − 1 − ln σ²)` for one latent vector.
pub fn kl_std_normal<T: Real>(mu: &[T], sigma: &[T]) -> Result<T> {
    if mu.len() != sigma.len() {
        return Err(Error::Shape("μ and σ lengths differ".into()));
    }
    let mut acc = T::zero();
    for (&m, &s) in mu.iter().zip(sigma) {
        if !(s > T::zero()) {
            return Err(Error::InvalidArgument("σ must be positive".into()));
        }
        acc = acc + m * m + s * s - T::one() - (s * s).ln();
    }
    Ok(acc * T::from_f64(0.5))
}

/// Log-softmax of `logits`.
pub fn log_softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let top = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&l| (l - top).exp()).sum::<T>().ln() + top;
    logits.iter().map(|&l| l - lse).collect()
}

/// Cross-entropy `−Σ target·log softmax(logits)` and its gradient with
/// respect to the logits.
pub fn softmax_cross_entropy<T: Real>(logits: &[T], target: &[T]) -> (T, Vec<T>) {
    let lsm = log_softmax(logits);
    let loss = -lsm.iter().zip(target).map(|(&l, &t)| if t == T::zero() { T::zero() } else { t * l }).sum::<T>();
    let mut p: Vec<T> = logits.to_vec();
    softmax_in_place(&mut p);
    let mass: T = target.iter().copied().sum();
    let grad = p.iter().zip(target).map(|(&pi, &ti)| pi * mass - ti).collect();
    (loss, grad)
}
