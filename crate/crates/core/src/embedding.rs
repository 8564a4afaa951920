//! Deterministic name embeddings by feature hashing of character 3-grams.
//!
//! This is the fallback used when no external embedding file is supplied
//! for table names or column names.

use alloc::vec;
use alloc::vec::Vec;


use crate::error::{Error, Result};
use crate::rng::fnv1a;

pub const MIN_DIM: usize = 8;

/// L2-normalized bag of hashed character 3-grams of the lowercased name,
/// padded with `^` and `$` boundary markers.
pub fn name_embedding(name: &str, dim: usize) -> Result<Vec<f64>> {
    if name.is_empty() {
        return Err(Error::EmptyInput("name"));
    }
    if dim < MIN_DIM {
        return Err(Error::InvalidArgument(alloc::format!("embedding dim {dim} < {MIN_DIM}")));
    }
    let mut padded: Vec<char> = vec!['^'];
    padded.extend(name.chars().flat_map(char::to_lowercase));
    padded.push('$');
    let mut v = vec![0.0; dim];
    let mut buf = [0u8; 12];
    for w in padded.windows(3) {
        let mut len = 0;
        for c in w {
            len += c.encode_utf8(&mut buf[len..]).len();
        }
        v[(fnv1a(&buf[..len]) % dim as u64) as usize] += 1.0;
    }
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    for x in &mut v {
        *x /= norm;
    }
    Ok(v)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = libm::sqrt(a.iter().map(|x| x * x).sum::<f64>());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum::<f64>());
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
