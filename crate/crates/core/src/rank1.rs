//! Rank-1 dynamics `A = k kᵀ`: the key energy `λ = ‖k‖²`, the decay gate
//! `α = (1 − e^{−βλ})/λ`, and the exact propagator `e^{−βA} = I − α A`
//! applied in `O(d_k·d_v)` without forming any `d × d` matrix.

use crate::error::{shape, Error, Result};
use crate::numerics::{dot_slices, transposed_product, Matrix, Vector};
use crate::scalar::Scalar;

/// Below this `x = βλ` the gate uses its Taylor series instead of `expm1`.
pub const SERIES_THRESHOLD: f64 = 1e-6;

/// One token's key, value and step size, held constant over the step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInput<T> {
    pub k: Vector<T>,
    pub v: Vector<T>,
    pub beta: T,
}

impl<T: Scalar> StepInput<T> {
    pub fn new(k: Vector<T>, v: Vector<T>, beta: T) -> Result<Self> {
        if !beta.is_finite() {
            return Err(Error::NonFinite("beta"));
        }
        if beta < T::zero() {
            return Err(Error::Negative {
                name: "beta",
                value: beta.to_f64().unwrap_or(f64::NAN),
            });
        }
        if !k.is_finite() || !v.is_finite() {
            return Err(Error::NonFinite("step input"));
        }
        Ok(Self { k, v, beta })
    }

    pub fn lambda(&self) -> T {
        squared_norm(&self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayGate<T> {
    pub lambda: T,
    pub beta: T,
    pub alpha: T,
}

impl<T: Scalar> DecayGate<T> {
    /// Factor `1 − αλ` applied to the state component along `k`.
    pub fn contraction(&self) -> T {
        T::one() - self.alpha * self.lambda
    }
}

/// `λ = kᵀk`.
pub fn squared_norm<T: Scalar>(k: &Vector<T>) -> T {
    dot_slices(k.as_slice(), k.as_slice())
}

/// `g(x) = (1 − e^{−x})/x`, with `g(0) = 1`.
///
/// Uses `−expm1(−x)/x` for `x ≥ 1e-6` and `1 − x/2 + x²/6 − x³/24` below.
pub fn saturation<T: Scalar>(x: T) -> T {
    if x < T::lit(SERIES_THRESHOLD) {
        let (half, sixth, twenty_fourth) = (T::lit(0.5), T::lit(1.0 / 6.0), T::lit(1.0 / 24.0));
        T::one() - x * (half - x * (sixth - x * twenty_fourth))
    } else {
        -(-x).exp_m1() / x
    }
}

/// `α = (1 − e^{−βλ})/λ`, with the limit `α = β` at `λ = 0`.
pub fn decay_gate<T: Scalar>(beta: T, lambda: T) -> Result<DecayGate<T>> {
    for (name, value) in [("beta", beta), ("lambda", lambda)] {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        if value < T::zero() {
            return Err(Error::Negative {
                name,
                value: value.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    let alpha = beta * saturation(beta * lambda);
    Ok(DecayGate {
        lambda,
        beta,
        alpha,
    })
}

/// `(I − α k kᵀ) S`.
pub fn apply_transition<T: Scalar>(k: &Vector<T>, alpha: T, s: &Matrix<T>) -> Result<Matrix<T>> {
    if s.rows() != k.len() {
        return Err(shape("apply_transition", format!("S with {} rows", k.len()), s.rows()));
    }
    let mut out = s.clone();
    rank1_update(&mut out, k.as_slice(), alpha, T::zero(), &[]);
    Ok(out)
}

/// In-place `S ← S − c_transition·k(kᵀS) + c_input·k vᵀ`.
///
/// `v` is ignored when `c_input` is zero. Shapes are the caller's responsibility.
pub(crate) fn rank1_update<T: Scalar>(
    s: &mut Matrix<T>,
    k: &[T],
    c_transition: T,
    c_input: T,
    v: &[T],
) {
    let cols = s.cols();
    let mut row_coeff = vec![T::zero(); cols];
    if c_transition != T::zero() {
        let projection = transposed_product(s, k);
        for (r, p) in row_coeff.iter_mut().zip(projection) {
            *r = -c_transition * p;
        }
    }
    if c_input != T::zero() {
        for (r, &vj) in row_coeff.iter_mut().zip(v) {
            *r = *r + c_input * vj;
        }
    }
    for (i, &ki) in k.iter().enumerate() {
        if ki == T::zero() {
            continue;
        }
        for (x, &r) in s.row_mut(i).iter_mut().zip(&row_coeff) {
            *x = *x + ki * r;
        }
    }
}

/// Explicit `I − α k kᵀ`. Inspection and testing only.
pub fn transition_matrix<T: Scalar>(k: &Vector<T>, alpha: T) -> Matrix<T> {
    let n = k.len();
    Matrix::from_fn(n, n, |i, j| {
        let delta = if i == j { T::one() } else { T::zero() };
        delta - alpha * k[i] * k[j]
    })
}

/// `λ^{n−1}`, the scalar with `Aⁿ = λ^{n−1} A` for `A = k kᵀ`.
pub fn rank1_power_coefficient<T: Scalar>(k: &Vector<T>, n: u32) -> Result<T> {
    if n == 0 {
        return Err(Error::InvalidArgument("power must be at least 1".into()));
    }
    Ok(squared_norm(k).powi(n as i32 - 1))
}
