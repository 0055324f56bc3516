//! Sub-stepping oracle: classical RK4 on `dS/dt = −k kᵀ S + k vᵀ` with `A`
//! and `b` held fixed over the token (zero-order hold).
//!
//! It never touches the closed-form gate, so agreement with the exact update
//! is an independent check of it. Global error is `O(h⁴)` in `h = β/substeps`.

use crate::error::{shape, Error, Result};
use crate::numerics::Matrix;
use crate::rank1::StepInput;
use crate::scalar::Scalar;

/// Integrates the held-constant ODE over a duration of `input.beta`.
pub fn reference_step<T: Scalar>(s: &Matrix<T>, input: &StepInput<T>, substeps: u32) -> Result<Matrix<T>> {
    if substeps == 0 {
        return Err(Error::InvalidArgument("reference substeps must be at least 1".into()));
    }
    if s.shape() != (input.k.len(), input.v.len()) {
        return Err(shape(
            "reference_step",
            format!("state {}x{}", input.k.len(), input.v.len()),
            format!("{}x{}", s.rows(), s.cols()),
        ));
    }
    Ok(reference_unchecked(s, input, substeps))
}

pub(crate) fn reference_unchecked<T: Scalar>(s: &Matrix<T>, input: &StepInput<T>, substeps: u32) -> Matrix<T> {
    let h = input.beta / T::from_u32(substeps).unwrap();
    let k = input.k.as_slice();
    let v = input.v.as_slice();
    let dv = v.len();
    let kk = k.iter().fold(T::zero(), |acc, &x| acc + x * x);
    let mut state = s.as_slice().to_vec();
    // Every slope f(Y) = -A Y + b = k (v - Yᵀk)ᵀ lies in span(k) and is
    // carried as its right factor g = v - Yᵀk. A stage state Y = S + c·k gᵀ
    // then has Yᵀk = Sᵀk + c·(kᵀk)·g, so stages cost O(d_v) each.
    let (half, two, sixth) = (T::lit(0.5), T::lit(2.0), T::lit(1.0 / 6.0));
    let mut proj = vec![T::zero(); dv];
    let mut combined = vec![T::zero(); dv];
    for _ in 0..substeps {
        proj.iter_mut().for_each(|p| *p = T::zero());
        for (row, &ki) in state.chunks_exact(dv).zip(k) {
            for (p, &x) in proj.iter_mut().zip(row) {
                *p = *p + ki * x;
            }
        }
        let (c_half, c_full) = (h * half * kk, h * kk);
        for j in 0..dv {
            let g1 = v[j] - proj[j];
            let g2 = v[j] - (proj[j] + c_half * g1);
            let g3 = v[j] - (proj[j] + c_half * g2);
            let g4 = v[j] - (proj[j] + c_full * g3);
            combined[j] = g1 + two * g2 + two * g3 + g4;
        }
        for (row, &ki) in state.chunks_exact_mut(dv).zip(k) {
            let scale = h * sixth * ki;
            for (x, &c) in row.iter_mut().zip(&combined) {
                *x = *x + scale * c;
            }
        }
    }
    Matrix::from_raw(s.rows(), dv, state)
}

/// Fixed-step classical RK4 for `dy/dt = f(y)` on matrix-valued states.
pub fn rk4_integrate<T: Scalar>(
    y0: &Matrix<T>,
    duration: T,
    steps: u32,
    f: impl Fn(&Matrix<T>) -> Matrix<T>,
) -> Result<Matrix<T>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("RK4 needs at least one step".into()));
    }
    let h = duration / T::from_u32(steps).unwrap();
    let half = T::lit(0.5);
    let axpy = |y: &Matrix<T>, c: T, k: &Matrix<T>| y.add(&k.scaled(c));
    let mut y = y0.clone();
    for _ in 0..steps {
        let k1 = f(&y);
        let k2 = f(&axpy(&y, h * half, &k1)?);
        let k3 = f(&axpy(&y, h * half, &k2)?);
        let k4 = f(&axpy(&y, h, &k3)?);
        let incr = k1
            .add(&k2.scaled(T::lit(2.0)))?
            .add(&k3.scaled(T::lit(2.0)))?
            .add(&k4)?;
        y = axpy(&y, h / T::lit(6.0), &incr)?;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::{step, MethodSpec};
    use crate::numerics::{outer, Vector};

    fn sample() -> (Matrix<f64>, StepInput<f64>) {
        let k = Vector::new(vec![0.8, -0.3, 0.5, 0.1]).unwrap();
        let v = Vector::new(vec![1.0, -2.0, 0.25]).unwrap();
        let s = Matrix::from_fn(4, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin());
        (s, StepInput::new(k, v, 1.3).unwrap())
    }

    #[test]
    fn one_substep_is_rk4() {
        let (s, input) = sample();
        let reference = reference_step(&s, &input, 1).unwrap();
        let rk4 = step(MethodSpec::Rk4, &s, &input).unwrap();
        assert!(reference.max_abs_diff(&rk4) <= 1e-14);
    }

    #[test]
    fn zero_beta_is_identity() {
        let (s, mut input) = sample();
        input.beta = 0.0;
        assert_eq!(reference_step(&s, &input, 50).unwrap(), s);
    }

    #[test]
    fn matches_dense_rk4() {
        let (s, input) = sample();
        let a = outer(&input.k, &input.k);
        let b = outer(&input.k, &input.v);
        let dense = rk4_integrate(&s, input.beta, 37, |y| {
            b.sub(&a.matmul(y).unwrap()).unwrap()
        })
        .unwrap();
        let factored = reference_step(&s, &input, 37).unwrap();
        assert!(dense.max_abs_diff(&factored) <= 1e-14);
    }

    #[test]
    fn rejects_bad_arguments() {
        let (s, input) = sample();
        assert!(reference_step(&s, &input, 0).is_err());
        assert!(reference_step(&Matrix::zeros(3, 3), &input, 1).is_err());
        assert!(rk4_integrate(&s, 1.0, 0, |y| y.clone()).is_err());
    }
}
