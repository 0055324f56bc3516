//! Growth-factor and truncation-order sweeps.

use crate::error::{Error, Result};
use crate::integrators::{coefficients, step, MethodSpec};
use crate::numerics::{dot, Matrix, Vector};
use crate::rank1::{decay_gate, StepInput};

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub x: f64,
    pub method: MethodSpec,
    /// Per-step ratio of the state's component along `k`, the worst of all steps.
    pub measured_factor: f64,
    pub predicted_factor: f64,
    pub abs_error: f64,
}

/// `|Σ_{n≤N} (−x)ⁿ/n!|`, summed term by term.
fn taylor_growth(order: u32, x: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0;
    for n in 0..=order {
        if n > 0 {
            term *= -x / n as f64;
        }
        sum += term;
    }
    sum.abs()
}

/// Growth factor the method should apply along `k` at `x = βλ`.
pub fn predicted_growth(method: MethodSpec, x: f64) -> Result<f64> {
    Ok(match method.validate()? {
        MethodSpec::VanillaLinear => 1.0,
        MethodSpec::DeltaEuler => (1.0 - x).abs(),
        MethodSpec::Rk2 => taylor_growth(2, x),
        MethodSpec::Rk4 => taylor_growth(4, x),
        MethodSpec::RkN(n) => taylor_growth(n, x),
        MethodSpec::ExactEfla | MethodSpec::Reference(_) => (-x).exp(),
    })
}

/// For each `x`, repeats one token with `β = 1`, `k = √x·e₁` and `v = 0`
/// for `steps` steps and measures how the state's component along `k`
/// scales per step. The state starts with a unit component along `k` plus
/// fixed content in the orthogonal rows.
pub fn stability_sweep(x_values: &[f64], steps: usize, methods: &[MethodSpec]) -> Result<Vec<StabilityRow>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("stability sweep needs at least one step".into()));
    }
    let (dk, dv) = (3, 2);
    let mut rows = Vec::with_capacity(x_values.len() * methods.len());
    for &x in x_values {
        if !(x.is_finite() && x >= 0.0) {
            return Err(Error::InvalidArgument(format!("x = {x} must be finite and >= 0")));
        }
        let k = Vector::from_fn(dk, |i| if i == 0 { x.sqrt() } else { 0.0 });
        let input = StepInput::new(k, Vector::zeros(dv), 1.0)?;
        let unit_k = Vector::basis(dk, 0);
        for &method in methods {
            let predicted = predicted_growth(method, x)?;
            let mut s = Matrix::from_fn(dk, dv, |i, j| match i {
                0 => [0.6, 0.8][j],
                _ => (i + 2 * j) as f64 - 1.5,
            });
            let mut component = component_norm(&s, &unit_k);
            let mut measured = f64::NAN;
            let mut worst = -1.0;
            for _ in 0..steps {
                if !s.is_finite() {
                    break;
                }
                s = step(method, &s, &input)?;
                let next = component_norm(&s, &unit_k);
                if !(next.is_finite() && component > 0.0 && component.is_finite()) {
                    break;
                }
                let ratio = next / component;
                let err = (ratio - predicted).abs();
                if err > worst {
                    worst = err;
                    measured = ratio;
                }
                if next == 0.0 || next < f64::MIN_POSITIVE * 1e3 {
                    break;
                }
                component = next;
            }
            rows.push(StabilityRow {
                x,
                method,
                measured_factor: measured,
                predicted_factor: predicted,
                abs_error: (measured - predicted).abs(),
            });
        }
    }
    Ok(rows)
}

fn component_norm(s: &Matrix<f64>, unit_k: &Vector<f64>) -> f64 {
    Vector::from_fn(s.cols(), |j| {
        let col = Vector::from_fn(s.rows(), |i| s[(i, j)]);
        dot(&col, unit_k).expect("same length")
    })
    .norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub order: u32,
    pub beta: f64,
    pub lambda: f64,
    pub x: f64,
    /// `β·φ₁ᴺ(x)`, the truncated gate.
    pub coefficient: f64,
    /// Exact gate `α`.
    pub exact: f64,
    pub abs_error: f64,
    /// `eˣ·xᴺ·β/(N+1)!`.
    pub bound: f64,
    pub bound_ratio: f64,
}

/// One-step gate error of each RK-N truncation against the exact gate.
///
/// `λ = 0` is accepted: every truncation then equals the exact gate `β`.
pub fn rk_convergence(orders: &[u32], beta: f64, lambda: f64) -> Result<Vec<ConvergenceRow>> {
    let exact = decay_gate(beta, lambda)?.alpha;
    let x = beta * lambda;
    orders
        .iter()
        .map(|&order| {
            let coefficient = coefficients(MethodSpec::RkN(order), beta, lambda)?.c_input;
            let abs_error = (coefficient - exact).abs();
            let factorial: f64 = (1..=order + 1).map(f64::from).product();
            let bound = x.exp() * x.powi(order as i32) * beta / factorial;
            let bound_ratio = if bound > 0.0 { abs_error / bound } else { 0.0 };
            Ok(ConvergenceRow {
                order,
                beta,
                lambda,
                x,
                coefficient,
                exact,
                abs_error,
                bound,
                bound_ratio,
            })
        })
        .collect()
}

/// True when errors strictly decrease, ignoring pairs whose later error is
/// already below `floor`.
pub fn strictly_decreasing_until(rows: &[ConvergenceRow], floor: f64) -> bool {
    rows.windows(2)
        .all(|w| w[1].abs_error < floor || w[1].abs_error < w[0].abs_error)
}
