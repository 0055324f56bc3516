//! Explicit `d × d` operators built from dense matrix powers of `A`.
//!
//! These exist to check the scalar coefficient collapse, not to be fast.

use crate::error::{Error, Result};
use crate::integrators::MethodSpec;
use crate::numerics::{outer, Matrix};
use crate::rank1::StepInput;
use crate::scalar::Scalar;

/// `(transition, input_term)` such that one step is
/// `S' = transition · S + input_term`.
///
/// Polynomial methods sum `Σ_{n≤N} (−βA)ⁿ/n!` and `β Σ_{n<N} (−βA)ⁿ/(n+1)! · b`
/// from explicit powers of `A = k kᵀ`. The exact method takes the dense
/// exponential of the augmented generator `[[−A, b], [0, 0]]`.
pub fn explicit_operators<T: Scalar>(method: MethodSpec, input: &StepInput<T>) -> Result<(Matrix<T>, Matrix<T>)> {
    let d = input.k.len();
    let a = outer(&input.k, &input.k);
    let b = outer(&input.k, &input.v);
    let beta = input.beta;
    let order = match method.validate()? {
        MethodSpec::ExactEfla => return exact_operators(&a, &b, beta),
        m => m.order().ok_or_else(|| {
            Error::InvalidArgument(format!("method {m} has no explicit operator form"))
        })?,
    };

    let mut transition = Matrix::identity(d);
    let mut input_poly = Matrix::identity(d);
    // power = (−βA)ⁿ, factorial = n!
    let mut power = Matrix::identity(d);
    let mut factorial = T::one();
    let neg_beta_a = a.scaled(-beta);
    for n in 1..=order {
        power = power.matmul(&neg_beta_a)?;
        factorial = factorial * T::from_u32(n).unwrap();
        transition = transition.add(&power.scaled(T::one() / factorial))?;
        if n < order {
            let next_factorial = factorial * T::from_u32(n + 1).unwrap();
            input_poly = input_poly.add(&power.scaled(T::one() / next_factorial))?;
        }
    }
    let input_term = input_poly.matmul(&b)?.scaled(beta);
    Ok((transition, input_term))
}

fn exact_operators<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, beta: T) -> Result<(Matrix<T>, Matrix<T>)> {
    let (dk, dv) = b.shape();
    let n = dk + dv;
    let generator = Matrix::from_fn(n, n, |i, j| match (i < dk, j < dk) {
        (true, true) => -beta * a[(i, j)],
        (true, false) => beta * b[(i, j - dk)],
        _ => T::zero(),
    });
    let e = matrix_exponential(&generator)?;
    let transition = Matrix::from_fn(dk, dk, |i, j| e[(i, j)]);
    let input_term = Matrix::from_fn(dk, dv, |i, j| e[(i, dk + j)]);
    Ok((transition, input_term))
}

/// Dense `e^M` by scaling and squaring around a Taylor series.
pub fn matrix_exponential<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::InvalidArgument("matrix exponential needs a square matrix".into()));
    }
    let norm = (0..n)
        .map(|i| m.row(i).iter().map(|x| x.abs()).sum::<T>())
        .fold(T::zero(), T::max);
    let mut squarings = 0i32;
    let half = T::lit(0.5);
    while norm * T::lit(2.0).powi(-squarings) > half {
        squarings += 1;
    }
    let scaled = m.scaled(T::lit(2.0).powi(-squarings));

    let mut sum = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..=40u32 {
        term = term.matmul(&scaled)?.scaled(T::one() / T::from_u32(k).unwrap());
        sum = sum.add(&term)?;
        if term.max_abs() <= T::epsilon() * T::lit(1e-3) * sum.max_abs() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum.matmul(&sum)?;
    }
    Ok(sum)
}
