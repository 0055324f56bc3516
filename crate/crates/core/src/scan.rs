//! Sequential recurrent forward pass: `S_t = step(S_{t−1}, k_t, v_t, β_t)`,
//! `o_t = S_tᵀ q_t`.

use crate::error::{shape, Error, Result};
use crate::integrators::{advance, MethodSpec};
use crate::numerics::{transposed_product, Matrix, Vector};
use crate::rank1::{squared_norm, StepInput};
use crate::scalar::Scalar;

/// `(Q, K, V, β)` as per-token vectors.
pub type BatchParts<T> = (Vec<Vector<T>>, Vec<Vector<T>>, Vec<Vector<T>>, Vec<T>);

/// Queries plus the per-token step inputs of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch<T> {
    queries: Vec<Vector<T>>,
    steps: Vec<StepInput<T>>,
}

impl<T: Scalar> SequenceBatch<T> {
    pub fn new(q: Vec<Vector<T>>, k: Vec<Vector<T>>, v: Vec<Vector<T>>, beta: Vec<T>) -> Result<Self> {
        let len = q.len();
        if len == 0 {
            return Err(Error::InvalidArgument("sequence must hold at least one token".into()));
        }
        if k.len() != len || v.len() != len || beta.len() != len {
            return Err(shape(
                "SequenceBatch::new",
                format!("{len} tokens in q, k, v and beta"),
                format!("{} keys, {} values, {} betas", k.len(), v.len(), beta.len()),
            ));
        }
        let dk = k[0].len();
        let dv = v[0].len();
        let mut steps = Vec::with_capacity(len);
        for (t, ((qt, kt), (vt, bt))) in q.iter().zip(k).zip(v.into_iter().zip(beta)).enumerate() {
            if qt.len() != dk || kt.len() != dk || vt.len() != dv {
                return Err(shape(
                    "SequenceBatch::new",
                    format!("d_k = {dk}, d_v = {dv}"),
                    format!("token {t}: q {}, k {}, v {}", qt.len(), kt.len(), vt.len()),
                ));
            }
            if !qt.is_finite() {
                return Err(Error::NonFinite("query"));
            }
            steps.push(StepInput::new(kt, vt, bt)?);
        }
        Ok(Self { queries: q, steps })
    }

    /// Number of tokens `L`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn d_k(&self) -> usize {
        self.steps[0].k.len()
    }

    pub fn d_v(&self) -> usize {
        self.steps[0].v.len()
    }

    pub fn query(&self, t: usize) -> &Vector<T> {
        &self.queries[t]
    }

    pub fn queries(&self) -> &[Vector<T>] {
        &self.queries
    }

    pub fn step_input(&self, t: usize) -> &StepInput<T> {
        &self.steps[t]
    }

    pub fn step_inputs(&self) -> &[StepInput<T>] {
        &self.steps
    }

    /// First `len` tokens.
    pub fn truncated(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate a {}-token sequence to {len}",
                self.len()
            )));
        }
        Ok(Self {
            queries: self.queries[..len].to_vec(),
            steps: self.steps[..len].to_vec(),
        })
    }

    /// Tokens `range` as a standalone batch.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            queries: self.queries[range.clone()].to_vec(),
            steps: self.steps[range].to_vec(),
        }
    }

    /// Splits into `(Q, K, V, β)`.
    pub fn into_parts(self) -> BatchParts<T> {
        let mut k = Vec::with_capacity(self.steps.len());
        let mut v = Vec::with_capacity(self.steps.len());
        let mut beta = Vec::with_capacity(self.steps.len());
        for s in self.steps {
            k.push(s.k);
            v.push(s.v);
            beta.push(s.beta);
        }
        (self.queries, k, v, beta)
    }
}

/// Outputs, final state and instrumentation of one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult<T> {
    pub outputs: Vec<Vector<T>>,
    pub final_state: Matrix<T>,
    /// `‖S_t‖_F` after each token.
    pub state_norm_trace: Vec<T>,
    /// Zero-based index of the first token after which the state's Frobenius
    /// norm or the output is no longer finite.
    pub divergence_index: Option<usize>,
}

impl<T: Scalar> ScanResult<T> {
    pub fn max_state_norm(&self) -> T {
        self.state_norm_trace.iter().fold(T::zero(), |m, &x| {
            if x.is_nan() || m.is_nan() {
                T::nan()
            } else {
                m.max(x)
            }
        })
    }

    pub fn output_matrix(&self) -> Matrix<T> {
        Matrix::from_rows(&self.outputs).expect("outputs share d_v")
    }
}

pub(crate) fn check_initial_state<T: Scalar>(batch: &SequenceBatch<T>, s0: Option<&Matrix<T>>) -> Result<Matrix<T>> {
    match s0 {
        None => Ok(Matrix::zeros(batch.d_k(), batch.d_v())),
        Some(s) if s.shape() != (batch.d_k(), batch.d_v()) => Err(shape(
            "initial state",
            format!("{}x{}", batch.d_k(), batch.d_v()),
            format!("{}x{}", s.rows(), s.cols()),
        )),
        Some(s) if !s.is_finite() => Err(Error::NonFinite("initial state")),
        Some(s) => Ok(s.clone()),
    }
}

/// Runs the recurrence token by token. `s0` defaults to the empty memory.
///
/// Divergence is reported, not raised: the scan keeps going after the state
/// overflows and records where that first happened.
pub fn recurrent_forward<T: Scalar>(
    method: MethodSpec,
    batch: &SequenceBatch<T>,
    s0: Option<&Matrix<T>>,
) -> Result<ScanResult<T>> {
    let method = method.validate()?;
    let mut state = check_initial_state(batch, s0)?;
    let mut outputs = Vec::with_capacity(batch.len());
    let mut trace = Vec::with_capacity(batch.len());
    let mut divergence_index = None;
    for (t, input) in batch.step_inputs().iter().enumerate() {
        advance(method, &mut state, input)?;
        let out = Vector::from_raw(transposed_product(&state, batch.query(t).as_slice()));
        let norm = state.frobenius_norm();
        if divergence_index.is_none() && !(norm.is_finite() && out.is_finite()) {
            divergence_index = Some(t);
        }
        outputs.push(out);
        trace.push(norm);
    }
    Ok(ScanResult {
        outputs,
        final_state: state,
        state_norm_trace: trace,
        divergence_index,
    })
}

/// Scales every key (and optionally every query) to unit norm.
///
/// Exactly-zero vectors stay zero; the second return value counts them.
pub fn normalize_keys<T: Scalar>(batch: &SequenceBatch<T>, normalize_queries: bool) -> (SequenceBatch<T>, usize) {
    let mut zeros = 0;
    let mut unit = |x: &Vector<T>| {
        let n = squared_norm(x).sqrt();
        if n == T::zero() {
            zeros += 1;
            x.clone()
        } else {
            x.scaled(T::one() / n)
        }
    };
    let steps = batch
        .step_inputs()
        .iter()
        .map(|s| StepInput {
            k: unit(&s.k),
            ..s.clone()
        })
        .collect();
    let queries = if normalize_queries {
        batch.queries().iter().map(&mut unit).collect()
    } else {
        batch.queries().to_vec()
    };
    (SequenceBatch { queries, steps }, zeros)
}
