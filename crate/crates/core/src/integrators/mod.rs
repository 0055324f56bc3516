//! One-step state updates for every integrator of `dS/dt = −A S + b`.
//!
//! For rank-1 `A = k kᵀ` and `b = k vᵀ` every polynomial in `A` collapses to
//! `I + c·A`, so each method reduces to two scalars:
//!
//! ```text
//! S' = S − c_transition · k (kᵀS) + c_input · k vᵀ
//! ```
//!
//! With `x = βλ`, the order-`N` Runge-Kutta truncation has
//! `c_transition = c_input = β·φ₁ᴺ(x)`, where `φ₁ᴺ(x) = Σ_{n<N} (−x)ⁿ/(n+1)!`.
//! The exact update replaces `β·φ₁ᴺ` by the gate `α = (1 − e^{−x})/λ`.

mod explicit;
mod reference;

use std::fmt;
use std::str::FromStr;

pub use explicit::{explicit_operators, matrix_exponential};
pub use reference::{reference_step, rk4_integrate};

use crate::error::{shape, Error, Result};
use crate::numerics::Matrix;
use crate::rank1::{decay_gate, rank1_update, StepInput};
use crate::scalar::Scalar;

/// Which integrator advances the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodSpec {
    /// `S' = S + k vᵀ`: accumulation with no forgetting.
    VanillaLinear,
    /// The delta rule, i.e. explicit Euler with step `β`.
    DeltaEuler,
    /// Explicit midpoint.
    Rk2,
    /// Classical four-stage Runge-Kutta.
    Rk4,
    /// Order-`N` Taylor truncation of the exact propagator.
    RkN(u32),
    /// Closed-form exact solution of the held-constant ODE.
    ExactEfla,
    /// Sub-stepped RK4 with the given number of substeps per token.
    Reference(u32),
}

impl MethodSpec {
    pub fn validate(self) -> Result<Self> {
        match self {
            MethodSpec::RkN(0) => Err(Error::InvalidArgument("RK-N order must be at least 1".into())),
            MethodSpec::Reference(0) => {
                Err(Error::InvalidArgument("reference substeps must be at least 1".into()))
            }
            m => Ok(m),
        }
    }

    /// Integrators of the ODE whose step has a scalar coefficient pair with
    /// `c_transition == c_input`.
    pub fn is_ode_family(self) -> bool {
        matches!(
            self,
            MethodSpec::DeltaEuler
                | MethodSpec::Rk2
                | MethodSpec::Rk4
                | MethodSpec::RkN(_)
                | MethodSpec::ExactEfla
        )
    }

    /// Truncation order of the polynomial methods.
    pub fn order(self) -> Option<u32> {
        match self {
            MethodSpec::DeltaEuler => Some(1),
            MethodSpec::Rk2 => Some(2),
            MethodSpec::Rk4 => Some(4),
            MethodSpec::RkN(n) => Some(n),
            _ => None,
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodSpec::VanillaLinear => f.write_str("vanilla"),
            MethodSpec::DeltaEuler => f.write_str("euler"),
            MethodSpec::Rk2 => f.write_str("rk2"),
            MethodSpec::Rk4 => f.write_str("rk4"),
            MethodSpec::RkN(n) => write!(f, "rkn:{n}"),
            MethodSpec::ExactEfla => f.write_str("efla"),
            MethodSpec::Reference(n) => write!(f, "reference:{n}"),
        }
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    /// Accepts `vanilla`, `euler` (or `delta`), `rk2`, `rk4`, `rk<N>`,
    /// `rkn:<N>`, `efla` (or `exact`) and `reference:<substeps>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let bad = || Error::InvalidArgument(format!("unknown method {s:?}"));
        let parse_n = |t: &str| t.parse::<u32>().map_err(|_| bad());
        let method = match lower.as_str() {
            "vanilla" | "linear" => MethodSpec::VanillaLinear,
            "euler" | "delta" | "deltanet" => MethodSpec::DeltaEuler,
            "rk2" => MethodSpec::Rk2,
            "rk4" => MethodSpec::Rk4,
            "efla" | "exact" => MethodSpec::ExactEfla,
            other => {
                if let Some(n) = other.strip_prefix("rkn:") {
                    MethodSpec::RkN(parse_n(n)?)
                } else if let Some(n) = other
                    .strip_prefix("reference:")
                    .or_else(|| other.strip_prefix("ref:"))
                {
                    MethodSpec::Reference(parse_n(n)?)
                } else if let Some(n) = other.strip_prefix("rk") {
                    MethodSpec::RkN(parse_n(n)?)
                } else {
                    return Err(bad());
                }
            }
        };
        method.validate()
    }
}

/// Scalar collapse of one step: `S' = S − c_transition·k(kᵀS) + c_input·k vᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients<T> {
    pub c_transition: T,
    pub c_input: T,
}

/// Truncated series `(φ₀, φ₁)` with
/// `φ₀ = Σ_{n=0}^{N} (−x)ⁿ/n!` and `φ₁ = Σ_{n=0}^{N−1} (−x)ⁿ/(n+1)!`,
/// both evaluated by Horner's scheme from the highest term down.
pub fn series_phi<T: Scalar>(order: u32, x: T) -> Result<(T, T)> {
    if order == 0 {
        return Err(Error::InvalidArgument("series order must be at least 1".into()));
    }
    let neg_x = -x;
    let mut phi0 = T::one();
    for n in (1..=order).rev() {
        phi0 = T::one() + neg_x / T::from_u32(n).unwrap() * phi0;
    }
    let mut phi1 = T::one();
    for n in (2..=order).rev() {
        phi1 = T::one() + neg_x / T::from_u32(n).unwrap() * phi1;
    }
    Ok((phi0, phi1))
}

fn check_non_negative<T: Scalar>(name: &'static str, value: T) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::NonFinite(name));
    }
    if value < T::zero() {
        return Err(Error::Negative {
            name,
            value: value.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

pub fn coefficients<T: Scalar>(method: MethodSpec, beta: T, lambda: T) -> Result<StepCoefficients<T>> {
    check_non_negative("beta", beta)?;
    check_non_negative("lambda", lambda)?;
    let x = beta * lambda;
    let both = |c: T| StepCoefficients {
        c_transition: c,
        c_input: c,
    };
    Ok(match method.validate()? {
        MethodSpec::VanillaLinear => StepCoefficients {
            c_transition: T::zero(),
            c_input: T::one(),
        },
        MethodSpec::DeltaEuler => both(beta),
        MethodSpec::Rk2 => both(beta * (T::one() - x * T::lit(0.5))),
        MethodSpec::Rk4 => {
            let phi1 = T::one() - x / T::lit(2.0) + x * x / T::lit(6.0) - x * x * x / T::lit(24.0);
            both(beta * phi1)
        }
        MethodSpec::RkN(n) => both(beta * series_phi(n, x)?.1),
        MethodSpec::ExactEfla => both(decay_gate(beta, lambda)?.alpha),
        m @ MethodSpec::Reference(_) => return Err(Error::NoCoefficients(m.to_string())),
    })
}

fn check_step_shapes<T: Scalar>(s: &Matrix<T>, input: &StepInput<T>) -> Result<()> {
    if s.shape() != (input.k.len(), input.v.len()) {
        return Err(shape(
            "step",
            format!("state {}x{}", input.k.len(), input.v.len()),
            format!("{}x{}", s.rows(), s.cols()),
        ));
    }
    if !s.is_finite() {
        return Err(Error::NonFinite("state"));
    }
    Ok(())
}

/// Advances `S` by one token.
pub fn step<T: Scalar>(method: MethodSpec, s: &Matrix<T>, input: &StepInput<T>) -> Result<Matrix<T>> {
    check_step_shapes(s, input)?;
    let mut next = s.clone();
    advance(method.validate()?, &mut next, input)?;
    Ok(next)
}

/// In-place step without the finiteness check on `S`, used by the scans so
/// that a diverging state can keep being advanced and measured.
pub(crate) fn advance<T: Scalar>(method: MethodSpec, s: &mut Matrix<T>, input: &StepInput<T>) -> Result<()> {
    if let MethodSpec::Reference(substeps) = method {
        *s = reference::reference_unchecked(s, input, substeps);
        return Ok(());
    }
    let c = coefficients(method, input.beta, input.lambda())?;
    rank1_update(s, input.k.as_slice(), c.c_transition, c.c_input, input.v.as_slice());
    Ok(())
}
