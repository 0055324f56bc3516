//! Chunkwise-parallel forward pass.
//!
//! Within a chunk of `C` tokens the product of rank-1 transitions and the
//! accumulated inputs have WY forms
//!
//! ```text
//! P = I − Σ_i k_i w_iᵀ        H = Σ_i k_i u_iᵀ
//! ```
//!
//! and the `w`, `u` rows come from one unit-lower-triangular solve (the UT
//! transform). Chunk factors depend only on the chunk's own tokens, so they
//! are built in parallel; the state is then carried across chunks
//! sequentially:
//!
//! ```text
//! D      = U − W S
//! O      = Q S + (Q Kᵀ ⊙ M) D        (M keeps the diagonal)
//! S_next = S + Kᵀ D
//! ```
//!
//! Any method whose step is `S' = (I − a·k kᵀ) S + b·k vᵀ` fits. The ODE
//! family has `a = b`; vanilla accumulation is the `a = 0, b = 1` case.

use rayon::prelude::*;

use crate::error::{shape, Error, Result};
use crate::integrators::{coefficients, MethodSpec};
use crate::numerics::{dot_slices, outer, unit_lower_solve, Matrix, Vector};
use crate::rank1::{transition_matrix, StepInput};
use crate::scalar::Scalar;
use crate::scan::{check_initial_state, ScanResult, SequenceBatch};

/// The `w` and `u` rows of one chunk.
pub type WyRows<T> = (Vec<Vector<T>>, Vec<Vector<T>>);

/// Tokens per chunk. A trailing partial chunk is processed as a smaller chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkPlan {
    chunk_size: usize,
}

impl ChunkPlan {
    pub fn new(chunk_size: usize) -> Result<Self> {
        if chunk_size == 0 {
            return Err(Error::InvalidArgument("chunk size must be at least 1".into()));
        }
        Ok(Self { chunk_size })
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn ranges(&self, len: usize) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        (0..len)
            .step_by(self.chunk_size)
            .map(move |start| start..(start + self.chunk_size).min(len))
    }
}

impl Default for ChunkPlan {
    fn default() -> Self {
        Self { chunk_size: 64 }
    }
}

/// UT-transform output for one chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkFactors<T> {
    /// `(I + StrictTril(diag(a) K Kᵀ))⁻¹ diag(a)`, lower triangular.
    pub t: Matrix<T>,
    /// Rows `w_r`, `C × d_k`.
    pub w: Matrix<T>,
    /// Rows `u_r`, `C × d_v`.
    pub u: Matrix<T>,
    /// Per-token transition rate `a` (`α_t` for the exact method).
    pub alphas: Vec<T>,
    /// Per-token input rate `b`; equal to `alphas` for the ODE family.
    pub input_rates: Vec<T>,
}

fn check_chunk<T: Scalar>(keys: &[Vector<T>], values: &[Vector<T>], a: &[T], b: &[T]) -> Result<()> {
    let c = keys.len();
    if values.len() != c || a.len() != c || b.len() != c {
        return Err(shape(
            "chunk",
            format!("{c} keys, values and rates"),
            format!("{} values, {} / {} rates", values.len(), a.len(), b.len()),
        ));
    }
    if let Some(k0) = keys.first() {
        if keys.iter().any(|k| k.len() != k0.len()) {
            return Err(shape("chunk", "keys of equal length", "ragged keys"));
        }
    }
    if let Some(v0) = values.first() {
        if values.iter().any(|v| v.len() != v0.len()) {
            return Err(shape("chunk", "values of equal length", "ragged values"));
        }
    }
    Ok(())
}

/// The `w`/`u` recurrences, token by token:
///
/// `w_r = α_r (k_r − Σ_{i<r} (k_rᵀk_i) w_i)`, `u_r = α_r (v_r − Σ_{i<r} (k_rᵀk_i) u_i)`.
pub fn wy_sequential<T: Scalar>(
    keys: &[Vector<T>],
    values: &[Vector<T>],
    alphas: &[T],
) -> Result<WyRows<T>> {
    wy_sequential_with_rates(keys, values, alphas, alphas)
}

/// [`wy_sequential`] with separate transition (`a`) and input (`b`) rates:
/// `u_r = b_r v_r − a_r Σ_{i<r} (k_rᵀk_i) u_i`.
pub fn wy_sequential_with_rates<T: Scalar>(
    keys: &[Vector<T>],
    values: &[Vector<T>],
    transition_rates: &[T],
    input_rates: &[T],
) -> Result<WyRows<T>> {
    check_chunk(keys, values, transition_rates, input_rates)?;
    let mut ws: Vec<Vector<T>> = Vec::with_capacity(keys.len());
    let mut us: Vec<Vector<T>> = Vec::with_capacity(keys.len());
    for r in 0..keys.len() {
        let mut w = keys[r].as_slice().to_vec();
        let mut u = vec![T::zero(); values[r].len()];
        for i in 0..r {
            let overlap = dot_slices(keys[r].as_slice(), keys[i].as_slice());
            for (x, &wi) in w.iter_mut().zip(ws[i].as_slice()) {
                *x = *x - overlap * wi;
            }
            for (x, &ui) in u.iter_mut().zip(us[i].as_slice()) {
                *x = *x - overlap * ui;
            }
        }
        let (a, b) = (transition_rates[r], input_rates[r]);
        ws.push(Vector::from_raw(w.into_iter().map(|x| a * x).collect()));
        us.push(Vector::from_raw(
            u.into_iter()
                .zip(values[r].as_slice())
                .map(|(x, &v)| a * x + b * v)
                .collect(),
        ));
    }
    Ok((ws, us))
}

/// All `w`, `u` rows of a chunk at once through one triangular solve.
pub fn ut_transform<T: Scalar>(keys: &[Vector<T>], values: &[Vector<T>], alphas: &[T]) -> Result<ChunkFactors<T>> {
    ut_transform_with_rates(keys, values, alphas, alphas)
}

pub fn ut_transform_with_rates<T: Scalar>(
    keys: &[Vector<T>],
    values: &[Vector<T>],
    transition_rates: &[T],
    input_rates: &[T],
) -> Result<ChunkFactors<T>> {
    check_chunk(keys, values, transition_rates, input_rates)?;
    if keys.is_empty() {
        return Err(Error::InvalidArgument("chunk must hold at least one token".into()));
    }
    let k = Matrix::from_rows(keys)?;
    let v = Matrix::from_rows(values)?;
    factors_from_matrices(&k, &v, transition_rates, input_rates)
}

fn factors_from_matrices<T: Scalar>(k: &Matrix<T>, v: &Matrix<T>, a: &[T], b: &[T]) -> Result<ChunkFactors<T>> {
    let c = k.rows();
    let gram = k.matmul_transpose(k)?;
    let system = Matrix::from_fn(c, c, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Greater => a[i] * gram[(i, j)],
        std::cmp::Ordering::Equal => T::one(),
        std::cmp::Ordering::Less => T::zero(),
    });
    let t = unit_lower_solve(&system, &Matrix::diag(a))?;
    let w = t.matmul(k)?;
    let u = if a == b {
        t.matmul(v)?
    } else {
        unit_lower_solve(&system, &Matrix::diag(b))?.matmul(v)?
    };
    Ok(ChunkFactors {
        t,
        w,
        u,
        alphas: a.to_vec(),
        input_rates: b.to_vec(),
    })
}

/// `I − Σ_i k_i w_iᵀ`.
pub fn wy_decay<T: Scalar>(keys: &[Vector<T>], ws: &[Vector<T>]) -> Matrix<T> {
    let d = keys.first().map_or(0, Vector::len);
    keys.iter()
        .zip(ws)
        .fold(Matrix::identity(d), |acc, (k, w)| acc.sub(&outer(k, w)).expect("equal shapes"))
}

/// `Σ_i k_i u_iᵀ`.
pub fn wy_accumulation<T: Scalar>(keys: &[Vector<T>], us: &[Vector<T>]) -> Matrix<T> {
    let (dk, dv) = (keys.first().map_or(0, Vector::len), us.first().map_or(0, Vector::len));
    keys.iter()
        .zip(us)
        .fold(Matrix::zeros(dk, dv), |acc, (k, u)| acc.add(&outer(k, u)).expect("equal shapes"))
}

/// Explicit `Π_t (I − c_t k_t k_tᵀ)` with later tokens on the left, i.e. the
/// matrix carrying the state before the first input to the state after the
/// last (ignoring inputs). Test oracle for [`wy_decay`].
pub fn decay_product<T: Scalar>(inputs: &[StepInput<T>], method: MethodSpec) -> Result<Matrix<T>> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::InvalidArgument("decay product of an empty chunk".into()))?;
    let mut p = Matrix::identity(first.k.len());
    for input in inputs {
        let c = coefficients(method, input.beta, input.lambda())?;
        p = transition_matrix(&input.k, c.c_transition).matmul(&p)?;
    }
    Ok(p)
}

struct PreparedChunk<T> {
    keys: Matrix<T>,
    queries: Matrix<T>,
    /// `Q Kᵀ ⊙ M` with the inclusive causal mask.
    scores: Matrix<T>,
    factors: ChunkFactors<T>,
}

fn prepare_chunk<T: Scalar>(
    batch: &SequenceBatch<T>,
    range: std::ops::Range<usize>,
    method: MethodSpec,
) -> Result<PreparedChunk<T>> {
    let inputs = &batch.step_inputs()[range.clone()];
    let (mut a, mut b) = (Vec::with_capacity(inputs.len()), Vec::with_capacity(inputs.len()));
    for input in inputs {
        let c = coefficients(method, input.beta, input.lambda())?;
        a.push(c.c_transition);
        b.push(c.c_input);
    }
    let keys = Matrix::from_rows(&inputs.iter().map(|s| s.k.clone()).collect::<Vec<_>>())?;
    let values = Matrix::from_rows(&inputs.iter().map(|s| s.v.clone()).collect::<Vec<_>>())?;
    let queries = Matrix::from_rows(&batch.queries()[range])?;
    let mut scores = queries.matmul_transpose(&keys)?;
    let c = scores.rows();
    for r in 0..c {
        for i in r + 1..c {
            scores[(r, i)] = T::zero();
        }
    }
    let factors = factors_from_matrices(&keys, &values, &a, &b)?;
    Ok(PreparedChunk {
        keys,
        queries,
        scores,
        factors,
    })
}

/// Chunkwise forward pass; matches [`crate::scan::recurrent_forward`] up to
/// rounding for every method with per-token scalar coefficients.
pub fn chunk_forward<T: Scalar>(
    method: MethodSpec,
    batch: &SequenceBatch<T>,
    plan: ChunkPlan,
    s0: Option<&Matrix<T>>,
) -> Result<ScanResult<T>> {
    let method = method.validate()?;
    if let MethodSpec::Reference(_) = method {
        return Err(Error::NoCoefficients(method.to_string()));
    }
    let mut state = check_initial_state(batch, s0)?;
    let ranges: Vec<_> = plan.ranges(batch.len()).collect();
    let chunks = ranges
        .par_iter()
        .map(|r| prepare_chunk(batch, r.clone(), method))
        .collect::<Result<Vec<_>>>()?;

    let dv = batch.d_v();
    let mut outputs = Vec::with_capacity(batch.len());
    let mut trace = Vec::with_capacity(batch.len());
    let mut divergence_index = None;
    for (range, chunk) in ranges.iter().zip(&chunks) {
        let ws = chunk.factors.w.matmul(&state)?;
        let d = chunk.factors.u.sub(&ws)?;
        let o = chunk
            .queries
            .matmul(&state)?
            .add(&chunk.scores.matmul(&d)?)?;
        // S_next = S + Kᵀ D, accumulated one token at a time for the norm trace.
        for (r, t) in range.clone().enumerate() {
            for (i, &ki) in chunk.keys.row(r).iter().enumerate() {
                if ki == T::zero() {
                    continue;
                }
                for (x, &dj) in state.row_mut(i).iter_mut().zip(d.row(r)) {
                    *x = *x + ki * dj;
                }
            }
            let norm = state.frobenius_norm();
            let out = Vector::from_raw(o.row(r).to_vec());
            if divergence_index.is_none() && !(norm.is_finite() && out.is_finite()) {
                divergence_index = Some(t);
            }
            debug_assert_eq!(out.len(), dv);
            outputs.push(out);
            trace.push(norm);
        }
    }
    Ok(ScanResult {
        outputs,
        final_state: state,
        state_norm_trace: trace,
        divergence_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scan::recurrent_forward;

    fn v(xs: &[f64]) -> Vector<f64> {
        Vector::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn single_token_chunk() {
        let k = [v(&[0.5, -1.0, 2.0])];
        let vals = [v(&[3.0, 1.0])];
        let (ws, us) = wy_sequential(&k, &vals, &[0.4]).unwrap();
        assert_eq!(ws[0], k[0].scaled(0.4));
        assert_eq!(us[0], vals[0].scaled(0.4));
        let f = ut_transform(&k, &vals, &[0.4]).unwrap();
        assert_eq!(f.t.as_slice(), &[0.4]);
        assert_eq!(f.w.row(0), k[0].scaled(0.4).as_slice());
    }

    #[test]
    fn orthogonal_keys_need_no_correction() {
        let k = [v(&[1.0, 0.0]), v(&[0.0, 2.0])];
        let vals = [v(&[1.0]), v(&[-1.0])];
        let (ws, _) = wy_sequential(&k, &vals, &[0.3, 0.7]).unwrap();
        assert_eq!(ws[1], k[1].scaled(0.7));
    }

    #[test]
    fn two_token_closed_form() {
        let (a1, a2) = (0.3, 0.8);
        let k = [v(&[1.0, 0.5, -0.2]), v(&[0.4, 1.0, 0.3])];
        let vals = [v(&[1.0, 2.0]), v(&[-1.0, 0.5])];
        let overlap = 0.4 + 0.5 - 0.06;
        let (ws, _) = wy_sequential(&k, &vals, &[a1, a2]).unwrap();
        let expected = k[1].as_slice().iter().zip(k[0].as_slice()).map(|(x, y)| a2 * (x - overlap * a1 * y));
        for (got, want) in ws[1].iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
        let f = ut_transform(&k, &vals, &[a1, a2]).unwrap();
        let t_expected = [a1, 0.0, -a2 * overlap * a1, a2];
        for (got, want) in f.t.as_slice().iter().zip(t_expected) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn decay_product_examples() {
        let input = |k: Vector<f64>, beta| StepInput::new(k, v(&[1.0]), beta).unwrap();
        let k = v(&[0.6, 0.8]);
        let p = decay_product(&[input(k.clone(), 0.5)], MethodSpec::DeltaEuler).unwrap();
        assert!(p.max_abs_diff(&transition_matrix(&k, 0.5)) < 1e-16);
        let p = decay_product(
            &[input(v(&[2.0, 0.0]), 0.1), input(v(&[0.0, 1.0]), 0.5)],
            MethodSpec::DeltaEuler,
        )
        .unwrap();
        assert!(p.max_abs_diff(&Matrix::diag(&[0.6, 0.5])) < 1e-15);
        assert!(decay_product::<f64>(&[], MethodSpec::DeltaEuler).is_err());
    }

    #[test]
    fn plan_ranges() {
        let plan = ChunkPlan::new(64).unwrap();
        let r: Vec<_> = plan.ranges(257).collect();
        assert_eq!(r.len(), 5);
        assert_eq!(r[4], 256..257);
        assert!(ChunkPlan::new(0).is_err());
    }

    #[test]
    fn unit_chunks_match_recurrent() {
        let len = 9;
        let batch = SequenceBatch::new(
            (0..len).map(|t| v(&[(t as f64).cos(), 0.3, -0.1 * t as f64])).collect(),
            (0..len).map(|t| v(&[(t as f64 * 0.7).sin(), 0.5, 0.2])).collect(),
            (0..len).map(|t| v(&[1.0 - 0.1 * t as f64, 0.25])).collect(),
            (0..len).map(|t| 0.2 + 0.1 * t as f64).collect(),
        )
        .unwrap();
        for method in [MethodSpec::ExactEfla, MethodSpec::DeltaEuler, MethodSpec::VanillaLinear] {
            let rec = recurrent_forward(method, &batch, None).unwrap();
            for c in [1, 2, 4, 9, 20] {
                let ch = chunk_forward(method, &batch, ChunkPlan::new(c).unwrap(), None).unwrap();
                assert!(ch.final_state.max_abs_diff(&rec.final_state) < 1e-13, "{method} C={c}");
                assert!(ch.output_matrix().max_abs_diff(&rec.output_matrix()) < 1e-13);
            }
        }
        assert!(chunk_forward(MethodSpec::Reference(4), &batch, ChunkPlan::default(), None).is_err());
    }
}
