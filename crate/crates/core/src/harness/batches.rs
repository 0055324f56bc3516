//! Random sequences for equivalence checks and benchmarks.

use rand::Rng;
use rand_distr::{StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::harness::rng::rng_from_seed;
use crate::numerics::Vector;
use crate::scan::SequenceBatch;

/// Sampling ranges of [`random_batch`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchShape {
    pub len: usize,
    pub d_k: usize,
    pub d_v: usize,
    /// `β` is uniform on this closed interval.
    pub beta: (f64, f64),
    /// `‖k‖` is uniform on this closed interval; the direction is uniform on the sphere.
    pub key_norm: (f64, f64),
}

impl BatchShape {
    pub fn new(len: usize, d_k: usize, d_v: usize) -> Self {
        Self {
            len,
            d_k,
            d_v,
            beta: (0.0, 1.0),
            key_norm: (1.0, 1.0),
        }
    }
}

/// Queries and values have standard normal entries (queries scaled by
/// `1/√d_k`); keys and step sizes follow `shape`.
pub fn random_batch(seed: u64, shape: BatchShape) -> Result<SequenceBatch<f64>> {
    let ranges_ok = [shape.beta, shape.key_norm]
        .iter()
        .all(|&(lo, hi)| lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi);
    if !ranges_ok || shape.len == 0 || shape.d_k == 0 || shape.d_v == 0 {
        return Err(Error::InvalidArgument(format!("invalid batch shape {shape:?}")));
    }
    let mut rng = rng_from_seed(seed);
    let beta_dist = Uniform::new_inclusive(shape.beta.0, shape.beta.1).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let norm_dist =
        Uniform::new_inclusive(shape.key_norm.0, shape.key_norm.1).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let q_scale = 1.0 / (shape.d_k as f64).sqrt();
    let (mut q, mut k, mut v, mut beta) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for _ in 0..shape.len {
        let mut normal = |n: usize, scale: f64| {
            Vector::from_fn(n, |_| {
                let z: f64 = rng.sample(StandardNormal);
                z * scale
            })
        };
        q.push(normal(shape.d_k, q_scale));
        v.push(normal(shape.d_v, 1.0));
        let dir = normal(shape.d_k, 1.0);
        let n = dir.norm();
        let target = rng.sample(norm_dist);
        k.push(if n > 0.0 { dir.scaled(target / n) } else { dir });
        beta.push(rng.sample(beta_dist));
    }
    SequenceBatch::new(q, k, v, beta)
}
