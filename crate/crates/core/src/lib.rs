//! Linear-attention state recurrences viewed as integrators of the rank-1 ODE
//!
//! ```text
//! dS/dt = -k kᵀ S + k vᵀ
//! ```
//!
//! held constant over each token's step `β`. The crate provides every
//! one-step integrator of that ODE (vanilla accumulation, the delta rule as
//! explicit Euler, Runge-Kutta truncations of any order, and the exact
//! closed-form update), a sequential scan, a chunkwise-parallel scan built on
//! WY factors, and the experiment harness used to compare them.
//!
//! All kernels are generic over [`Scalar`] (`f32` or `f64`). The `f64`
//! aliases at the crate root are what the harness and CLI use.

pub mod chunkwise;
pub mod error;
pub mod harness;
pub mod integrators;
pub mod numerics;
pub mod rank1;
pub mod scalar;
pub mod scan;

pub use chunkwise::{ChunkFactors, ChunkPlan};
pub use error::{Error, Result};
pub use integrators::{MethodSpec, StepCoefficients};
pub use numerics::{Matrix, Vector};
pub use rank1::{DecayGate, StepInput};
pub use scalar::Scalar;
pub use scan::{ScanResult, SequenceBatch};

/// Double-precision vector.
pub type RealVector = Vector<f64>;
/// Double-precision row-major matrix.
pub type RealMatrix = Matrix<f64>;
/// The `d_k × d_v` fast-weight state `S_t`.
pub type MemoryState<T = f64> = Matrix<T>;
pub type RealStepInput = StepInput<f64>;
pub type RealDecayGate = DecayGate<f64>;
pub type RealStepCoefficients = StepCoefficients<f64>;
pub type RealSequenceBatch = SequenceBatch<f64>;
pub type RealScanResult = ScanResult<f64>;
pub type RealChunkFactors = ChunkFactors<f64>;
