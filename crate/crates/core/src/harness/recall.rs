//! Associative recall at the operator level.
//!
//! A task writes `n_pairs` key/value pairs (each presented `repeats` times
//! in a row) and then reads every key back with a zero-key token whose query
//! is the stored key. Zero keys leave every method's state untouched, so the
//! query phase measures retrieval only.

use std::fmt;

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::harness::rng::{rng_from_seed, trial_seed, HarnessRng};
use crate::integrators::MethodSpec;
use crate::numerics::{dot, Vector};
use crate::scan::{recurrent_forward, SequenceBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyScheme {
    /// Random orthonormal keys (Gram-Schmidt on Gaussian draws).
    Orthonormal,
    /// Gaussian keys rescaled to unit norm.
    GaussianNormalized,
    /// Gaussian keys with entries of variance `1/d_k`, left unnormalized.
    GaussianRaw,
}

impl KeyScheme {
    pub fn name(self) -> &'static str {
        match self {
            KeyScheme::Orthonormal => "orthonormal",
            KeyScheme::GaussianNormalized => "gaussian-normalized",
            KeyScheme::GaussianRaw => "gaussian-raw",
        }
    }
}

impl fmt::Display for KeyScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for KeyScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "orthonormal" | "ortho" => Ok(KeyScheme::Orthonormal),
            "gaussian-normalized" | "random-gaussian-normalized" | "normalized" => Ok(KeyScheme::GaussianNormalized),
            "gaussian-raw" | "random-gaussian-raw" | "raw" => Ok(KeyScheme::GaussianRaw),
            other => Err(Error::InvalidArgument(format!("unknown key scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecallSpec {
    pub n_pairs: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub key_scheme: KeyScheme,
    /// Consecutive presentations of each pair in the store phase.
    pub repeats: usize,
    /// Step size of the store-phase tokens.
    pub beta: f64,
}

impl RecallSpec {
    pub fn new(n_pairs: usize, d_k: usize, d_v: usize, key_scheme: KeyScheme) -> Self {
        Self {
            n_pairs,
            d_k,
            d_v,
            key_scheme,
            repeats: 1,
            beta: 1.0,
        }
    }

    pub fn with_repeats(self, repeats: usize) -> Self {
        Self { repeats, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pairs == 0 || self.d_k == 0 || self.d_v == 0 || self.repeats == 0 {
            return Err(Error::InvalidArgument(
                "recall task needs n_pairs, d_k, d_v and repeats of at least 1".into(),
            ));
        }
        if self.key_scheme == KeyScheme::Orthonormal && self.n_pairs > self.d_k {
            return Err(Error::InvalidArgument(format!(
                "orthonormal keys need n_pairs <= d_k, got n_pairs = {} and d_k = {}",
                self.n_pairs, self.d_k
            )));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidArgument(format!("store beta must be finite and >= 0, got {}", self.beta)));
        }
        Ok(())
    }

    pub fn store_len(&self) -> usize {
        self.n_pairs * self.repeats
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecallTask {
    pub spec: RecallSpec,
    pub keys: Vec<Vector<f64>>,
    /// Store phase (`spec.store_len()` tokens) followed by one query per pair.
    pub batch: SequenceBatch<f64>,
    /// Expected readout at each query position, in pair order.
    pub targets: Vec<Vector<f64>>,
}

impl RecallTask {
    pub fn query_start(&self) -> usize {
        self.spec.store_len()
    }
}

fn gaussian_vector(rng: &mut HarnessRng, len: usize, std: f64) -> Vector<f64> {
    Vector::from_fn(len, |_| {
        let z: f64 = rng.sample(StandardNormal);
        z * std
    })
}

fn orthonormal_keys(rng: &mut HarnessRng, n: usize, d: usize) -> Vec<Vector<f64>> {
    let mut basis: Vec<Vector<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut x = gaussian_vector(rng, d, 1.0).into_vec();
        // modified Gram-Schmidt, twice for good measure
        for _ in 0..2 {
            for b in &basis {
                let c: f64 = x.iter().zip(b.iter()).map(|(a, b)| a * b).sum();
                x.iter_mut().zip(b.iter()).for_each(|(a, &bi)| *a -= c * bi);
            }
        }
        let norm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(Vector::from_fn(d, |i| x[i] / norm));
        }
    }
    basis
}

/// Builds a deterministic recall task from `seed`.
pub fn gen_recall(seed: u64, spec: RecallSpec) -> Result<RecallTask> {
    spec.validate()?;
    let mut rng = rng_from_seed(seed);
    let keys = match spec.key_scheme {
        KeyScheme::Orthonormal => orthonormal_keys(&mut rng, spec.n_pairs, spec.d_k),
        KeyScheme::GaussianNormalized => (0..spec.n_pairs)
            .map(|_| loop {
                let k = gaussian_vector(&mut rng, spec.d_k, 1.0);
                let n = k.norm();
                if n > 0.0 {
                    break k.scaled(1.0 / n);
                }
            })
            .collect(),
        KeyScheme::GaussianRaw => {
            let std = 1.0 / (spec.d_k as f64).sqrt();
            (0..spec.n_pairs).map(|_| gaussian_vector(&mut rng, spec.d_k, std)).collect()
        }
    };
    let values: Vec<Vector<f64>> = (0..spec.n_pairs).map(|_| gaussian_vector(&mut rng, spec.d_v, 1.0)).collect();

    let total = spec.store_len() + spec.n_pairs;
    let (mut q, mut k, mut v, mut beta) = (
        Vec::with_capacity(total),
        Vec::with_capacity(total),
        Vec::with_capacity(total),
        Vec::with_capacity(total),
    );
    for (key, value) in keys.iter().zip(&values) {
        for _ in 0..spec.repeats {
            q.push(Vector::zeros(spec.d_k));
            k.push(key.clone());
            v.push(value.clone());
            beta.push(spec.beta);
        }
    }
    for key in &keys {
        q.push(key.clone());
        k.push(Vector::zeros(spec.d_k));
        v.push(Vector::zeros(spec.d_v));
        beta.push(spec.beta);
    }
    let batch = SequenceBatch::new(q, k, v, beta)?;
    Ok(RecallTask {
        spec,
        keys,
        batch,
        targets: values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    None,
    /// Zero each store-phase token's key and value with probability `p`.
    Dropout(f64),
    /// Multiply every key by `factor`; values too when `scale_values` is set.
    Scale { factor: f64, scale_values: bool },
    /// Add `N(0, σ²)` noise to store-phase keys and values.
    Gaussian(f64),
}

impl Perturbation {
    pub fn scale(factor: f64) -> Self {
        Perturbation::Scale {
            factor,
            scale_values: false,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Perturbation::None => "none",
            Perturbation::Dropout(_) => "dropout",
            Perturbation::Scale { .. } => "scale",
            Perturbation::Gaussian(_) => "gaussian",
        }
    }

    pub fn param(&self) -> f64 {
        match *self {
            Perturbation::None => 0.0,
            Perturbation::Dropout(p) => p,
            Perturbation::Scale { factor, .. } => factor,
            Perturbation::Gaussian(sigma) => sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Perturbation::None => true,
            Perturbation::Dropout(p) => (0.0..=1.0).contains(&p),
            Perturbation::Scale { factor, .. } => factor.is_finite() && factor > 0.0,
            Perturbation::Gaussian(sigma) => sigma.is_finite() && sigma >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "{} parameter {} out of range",
                self.name(),
                self.param()
            )))
        }
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Perturbation::None => f.write_str("none"),
            Perturbation::Scale {
                factor,
                scale_values: true,
            } => write!(f, "scale-kv({factor})"),
            p => write!(f, "{}({})", p.name(), p.param()),
        }
    }
}

/// Applies `p` to the first `store_len` tokens of `batch`. Scaling touches
/// every key; zero keys stay zero, so query-phase tokens are unaffected.
pub fn perturb(batch: &SequenceBatch<f64>, store_len: usize, p: Perturbation, seed: u64) -> Result<SequenceBatch<f64>> {
    p.validate()?;
    let store_len = store_len.min(batch.len());
    let mut rng = rng_from_seed(seed);
    let (q, mut k, mut v, beta) = batch.clone().into_parts();
    match p {
        Perturbation::None => {}
        Perturbation::Dropout(prob) => {
            let coin = Bernoulli::new(prob).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            for t in 0..store_len {
                if coin.sample(&mut rng) {
                    k[t] = Vector::zeros(k[t].len());
                    v[t] = Vector::zeros(v[t].len());
                }
            }
        }
        Perturbation::Scale { factor, scale_values } => {
            for kt in &mut k {
                *kt = kt.scaled(factor);
            }
            if scale_values {
                for vt in v.iter_mut().take(store_len) {
                    *vt = vt.scaled(factor);
                }
            }
        }
        Perturbation::Gaussian(sigma) => {
            if sigma > 0.0 {
                for t in 0..store_len {
                    let noise_k = gaussian_vector(&mut rng, k[t].len(), sigma);
                    let noise_v = gaussian_vector(&mut rng, v[t].len(), sigma);
                    k[t] = Vector::from_fn(k[t].len(), |i| k[t][i] + noise_k[i]);
                    v[t] = Vector::from_fn(v[t].len(), |i| v[t][i] + noise_v[i]);
                }
            }
        }
    }
    SequenceBatch::new(q, k, v, beta)
}

/// Metrics of one recall trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub seed: u64,
    pub method: MethodSpec,
    pub scheme: KeyScheme,
    pub perturbation: Perturbation,
    pub mse: f64,
    /// Mean over queries; an output or target with zero or non-finite norm scores 0.
    pub cosine: f64,
    /// Largest `‖S_t‖_F`; `+∞` once the state has left the finite range.
    pub max_state_norm: f64,
    pub divergence_index: Option<usize>,
}

fn cosine(a: &Vector<f64>, b: &Vector<f64>) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if !(na.is_finite() && nb.is_finite()) || na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    match dot(a, b) {
        Ok(d) if d.is_finite() => (d / (na * nb)).clamp(-1.0, 1.0),
        _ => 0.0,
    }
}

/// Perturbs the task, scans it, and scores the query-phase outputs against
/// the stored values. Divergence is recorded, never raised.
///
/// The perturbation stream is seeded with `trial_seed(seed, 1)` so that it
/// differs from a task generated with `seed` itself.
pub fn eval_recall(method: MethodSpec, task: &RecallTask, perturbation: Perturbation, seed: u64) -> Result<TrialReport> {
    let store_len = task.query_start();
    let batch = perturb(&task.batch, store_len, perturbation, trial_seed(seed, 1))?;
    let scan = recurrent_forward(method, &batch, None)?;
    let readouts = &scan.outputs[store_len..];
    let mut sq = 0.0;
    let mut cos = 0.0;
    for (o, target) in readouts.iter().zip(&task.targets) {
        sq += o.iter().zip(target.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        cos += cosine(o, target);
    }
    let n = task.targets.len() as f64;
    let max_state_norm = scan
        .state_norm_trace
        .iter()
        .fold(0.0f64, |m, &x| if x.is_finite() { m.max(x) } else { f64::INFINITY });
    Ok(TrialReport {
        seed,
        method,
        scheme: task.spec.key_scheme,
        perturbation,
        mse: sq / (n * task.spec.d_v as f64),
        cosine: cos / n,
        max_state_norm,
        divergence_index: scan.divergence_index,
    })
}
