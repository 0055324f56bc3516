//! Deterministic experiment generators and metrics: associative-recall
//! tasks under perturbation, stability sweeps, RK-order convergence, and CSV
//! emission.

pub mod batches;
pub mod output;
pub mod recall;
pub mod rng;
pub mod sweeps;

pub use batches::{random_batch, BatchShape};
pub use output::{emit_csv, write_csv, CsvRecord};
pub use recall::{eval_recall, gen_recall, perturb, KeyScheme, Perturbation, RecallSpec, RecallTask, TrialReport};
pub use rng::{rng_from_seed, trial_seed, HarnessRng};
pub use sweeps::{predicted_growth, rk_convergence, stability_sweep, strictly_decreasing_until, ConvergenceRow, StabilityRow};
