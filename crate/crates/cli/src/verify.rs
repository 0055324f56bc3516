//! Property suites behind `efla verify`.
//!
//! Each suite measures its worst deviation and compares it against a default
//! tolerance, or against `--tolerance` when one is given.

use efla::chunkwise::{chunk_forward, ut_transform, wy_sequential};
use efla::harness::{
    eval_recall, gen_recall, random_batch, rk_convergence, rng_from_seed, stability_sweep, strictly_decreasing_until,
    trial_seed, BatchShape, KeyScheme, Perturbation, RecallSpec,
};
use efla::integrators::{coefficients, reference_step, step};
use efla::numerics::{Matrix, Vector};
use efla::rank1::{apply_transition, decay_gate};
use efla::scan::recurrent_forward;
use efla::{ChunkPlan, MethodSpec, SequenceBatch, StepInput};
use rand::Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub max_error: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub suites: Vec<SuiteOutcome>,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    methods: Vec<MethodSpec>,
    tolerance: Option<f64>,
}

impl Ctx<'_> {
    fn tol(&self, default: f64) -> f64 {
        self.tolerance.unwrap_or(default)
    }

    fn seed(&self, suite: u64, i: usize) -> u64 {
        trial_seed(trial_seed(self.cfg.seed, suite), i as u64)
    }
}

fn outcome(name: &'static str, max_error: f64, tolerance: f64, extra_ok: bool, detail: impl Into<String>) -> SuiteOutcome {
    SuiteOutcome {
        name,
        passed: extra_ok && max_error <= tolerance,
        max_error,
        tolerance,
        detail: detail.into(),
    }
}

type Suite = fn(&Ctx) -> Result<SuiteOutcome, CliError>;

const SUITES: &[Suite] = &[
    gate,
    exactness,
    rk_order,
    stability,
    delta_rule,
    directional_decay,
    fixed_point,
    zero_key,
    causality,
    chunk_equivalence,
    ut_transform_suite,
    recall,
];

pub fn run(cfg: &RunConfig) -> Result<VerifyReport, CliError> {
    let ctx = Ctx {
        cfg,
        methods: cfg.methods()?,
        tolerance: cfg.tolerance,
    };
    let suites = SUITES.iter().map(|s| s(&ctx)).collect::<Result<Vec<_>, _>>()?;
    Ok(VerifyReport {
        passed: suites.iter().all(|s| s.passed),
        suites,
    })
}

fn max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

fn gate(ctx: &Ctx) -> Result<SuiteOutcome, CliError> {
    let grid: Vec<f64> = (0..20).map(|i| 0.01 * 1000f64.powf(i as f64 / 19.0)).collect();
    let mut worst = 0.0;
    let mut below = true;
    for &beta in &grid {
        below &= decay_gate(beta, 0.0)?.alpha == beta;
        for &lambda in &grid {
            let g = decay_gate(beta, lambda)?;
            below &= g.alpha < beta;
            let expected = beta * saturation_oracle(beta * lambda);
            worst = max(worst, (expected - g.alpha).abs() / g.alpha);
        }
    }
    Ok(outcome("gate", worst, ctx.tol(1e-14), below, "alpha < beta on a 20x20 grid, alpha(beta, 0) = beta"))
}

/// `(1 − e^{−x})/x` by direct formula, or by a 25-term series where the
/// formula would cancel.
fn saturation_oracle(x: f64) -> f64 {
    if x >= 0.1 {
        return (1.0 - (-x).exp()) / x;
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..25 {
        term *= -x / (n + 1) as f64;
        sum += term;
    }
    sum
}

fn random_state(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn random_vector(rng: &mut impl Rng, n: usize) -> Vector<f64> {
    Vector::from_fn(n, |_| rng.random_range(-1.0..1.0))
}

fn random_key(rng: &mut impl Rng, n: usize, lambda: f64) -> Vector<f64> {
    let dir = random_vector(rng, n);
    dir.scaled(lambda.sqrt() / dir.norm())
}

fn exactness(ctx: &Ctx) -> Result<SuiteOutcome, CliError> {
    let mut rng = rng_from_seed(ctx.seed(1, 0));
    let mut worst = 0.0;
    for _ in 0..ctx.cfg.trials {
        let d = 8;
        let beta = rng.random_range(0.1..2.0);
        let x = rng.random_range(0.0..5.0);
        let input = StepInput::new(random_key(&mut rng, d, x / beta), random_vector(&mut rng, 4), beta)?;
        let s = random_state(&mut rng, d, 4);
        let exact = step(MethodSpec::ExactEfla, &s, &input)?;
        let oracle = reference_step(&s, &input, 10_000)?;
        worst = max(worst, exact.max_abs_diff(&oracle));
    }
    Ok(outcome("exactness", worst, ctx.tol(1e-8), true, "exact step vs RK4 with 1e4 substeps"))
}

fn rk_order(ctx: &Ctx) -> Result<SuiteOutcome, CliError> {
    let orders: Vec<u32> = (1..=15).collect();
    let rows = rk_convergence(&orders, 1.0, 1.0)?;
    let exact = 1.0 - (-1.0f64).exp();
    let ladder = [(1, 1.0), (2, 0.5), (4, 0.625)];
    let worst = ladder
        .iter()
        .map(|&(n, truncated)| (rows[n - 1].abs_error - (exact - truncated).abs()).abs())
        .fold(0.0, max);
    let ok = strictly_decreasing_until(&rows, 1e-15) && rows.iter().all(|r| r.bound_ratio <= 1.0);
    Ok(outcome("rk_order", worst, ctx.tol(1e-12), ok, "errors at x = 1 for N = 1..15"))
}

fn stability(ctx: &Ctx) -> Result<SuiteOutcome, CliError> {
    let methods: Vec<MethodSpec> = ctx
        .methods
        .iter()
        .copied()
        .filter(|m| !matches!(m, MethodSpec::Reference(_)))
        .collect();
    let rows = stability_sweep(&ctx.cfg.x_values, ctx.cfg.steps, &methods)?;
    let worst = rows.iter().map(|r| r.abs_error).fold(0.0, max);
    Ok(outcome("stability", worst, ctx.tol(1e-12), true, "per-step growth along k"))
}

fn delta_rule(ctx: &Ctx) -> Result<SuiteOutcome, CliError> {
    let mut rng = rng_from_seed(ctx.seed(2, 0));
    let mut worst = 0.0;
    for _ in 0..ctx.cfg.trials.max(20) {
        let lambda = rng.random_range(0.0..=1e-8);
        let input = StepInput::new(random_key(&mut rng, 8, lambda), random_vector(&mut rng, 4), rng.random_range(0.0..1.0))?;
        let s = random_state(&mut rng, 8, 4);
        let euler = step(MethodSpec::DeltaEuler, &s, &input)?;
        let exact = step(MethodSpec::ExactEfla, &s, &input)?;
        worst = max(worst, exact.max_abs_diff(&euler) / euler.max_abs());
    }
    Ok(outcome("delta_rule", worst, ctx.tol(1e-12), true, "lambda <= 1e-8: exact vs Euler, relative"))
}

fn directional_decay(ctx: &Ctx) -> Result<SuiteOutcome, CliError> {
    let mut rng = rng_from_seed(ctx.seed(3, 0));
    let (mut along, mut across) = (0.0, 0.0);
    for _ in 0..ctx.cfg.trials.max(20) {
        let d = 6;
        let beta = rng.random_range(0.1..2.0);
        let lambda = rng.random_range(0.0..2.5);
        let k = random_key(&mut rng, d, lambda);
        let s = random_state(&mut rng, d, 3);
        let alpha = decay_gate(beta, lambda)?.alpha;
        let out = apply_transition(&k, alpha, &s)?;
        let unit = k.scaled(1.0 / k.norm());
        let project = |m: &Matrix<f64>| Vector::from_fn(3, |j| (0..d).map(|i| unit[i] * m[(i, j)]).sum::<f64>());
        let (before, after) = (project(&s), project(&out));
        let expected = before.scaled((-beta * lambda).exp());
        along = max(along, after.max_abs_diff(&expected) / expected.norm());
        let residual = |m: &Matrix<f64>, p: &Vector<f64>| Matrix::from_fn(d, 3, |i, j| m[(i, j)] - unit[i] * p[j]);
        across = max(across, residual(&out, &after).max_abs_diff(&residual(&s, &before)));
    }
    let ok = across <= ctx.tol(1e-12);
    Ok(outcome(
        "directional_decay",
        along,
        ctx.tol(1e-10),
        ok,
        format!("key component scales by exp(-beta lambda); orthogonal drift {across:.3e}"),
    ))
}

fn fixed_point(ctx: &Ctx) -> Result<SuiteOutcome, CliError> {
    let mut rng = rng_from_seed(ctx.seed(4, 0));
    let mut worst = 0.0;
    for _ in 0..ctx.cfg.trials {
        let lambda = rng.random_range(0.2..3.0);
        let k = random_key(&mut rng, 5, lambda);
        let mut s = random_state(&mut rng, 5, 3);
        let v = Vector::from_fn(3, |j| (0..5).map(|i| s[(i, j)] * k[i]).sum::<f64>());
        let input = StepInput::new(k, v, rng.random_range(0.1..2.0))?;
        for _ in 0..10 {
            let next = step(MethodSpec::ExactEfla, &s, &input)?;
            worst = max(worst, next.max_abs_diff(&s));
            s = next;
        }
    }
    Ok(outcome("fixed_point", worst, ctx.tol(1e-12), true, "S with S^T k = v is left in place"))
}

fn zero_key(ctx: &Ctx) -> Result<SuiteOutcome, CliError> {
    let mut rng = rng_from_seed(ctx.seed(5, 0));
    let s = random_state(&mut rng, 4, 3);
    let input = StepInput::new(Vector::zeros(4), random_vector(&mut rng, 3), 1.5)?;
    let mut worst = 0.0;
    let mut ok = true;
    for &m in &ctx.methods {
        let next = step(m, &s, &input)?;
        ok &= next == s;
        worst = max(worst, next.max_abs_diff(&s));
    }
    Ok(outcome("zero_key", worst, ctx.tol(1e-300), ok, "zero key leaves the state bitwise unchanged"))
}

fn stable_batch(ctx: &Ctx, seed: u64) -> Result<SequenceBatch<f64>, CliError> {
    let shape = BatchShape {
        beta: (0.0, 1.0),
        key_norm: (0.0, 1.0),
        ..BatchShape::new(ctx.cfg.seq_len, ctx.cfg.d_k, ctx.cfg.d_v)
    };
    Ok(random_batch(seed, shape)?)
}

fn causality(ctx: &Ctx) -> Result<SuiteOutcome, CliError> {
    let batch = stable_batch(ctx, ctx.seed(6, 0))?;
    let other = stable_batch(ctx, ctx.seed(6, 1))?;
    let cut = batch.len() / 2;
    let (q, k, v, beta) = batch.clone().into_parts();
    let (q2, k2, v2, beta2) = other.into_parts();
    let splice = |a: Vec<Vector<f64>>, b: Vec<Vector<f64>>| a.into_iter().take(cut).chain(b.into_iter().skip(cut)).collect();
    let mixed = SequenceBatch::new(
        splice(q, q2),
        splice(k, k2),
        splice(v, v2),
        beta.into_iter().take(cut).chain(beta2.into_iter().skip(cut)).collect(),
    )?;
    let mut ok = true;
    for &m in &ctx.methods {
        let a = recurrent_forward(m, &batch, None)?;
        let b = recurrent_forward(m, &mixed, None)?;
        ok &= a.outputs[..cut] == b.outputs[..cut];
    }
    Ok(outcome("causality", 0.0, ctx.tol(1e-300), ok, "outputs before t ignore tokens after t"))
}

fn chunk_equivalence(ctx: &Ctx) -> Result<SuiteOutcome, CliError> {
    let batch = stable_batch(ctx, ctx.seed(7, 0))?;
    let mut worst = 0.0;
    for &m in &ctx.methods {
        if matches!(m, MethodSpec::Reference(_)) {
            continue;
        }
        let rec = recurrent_forward(m, &batch, None)?;
        for c in [1, ctx.cfg.chunk_size] {
            let chunked = chunk_forward(m, &batch, ChunkPlan::new(c)?, None)?;
            worst = max(worst, chunked.output_matrix().max_abs_diff(&rec.output_matrix()));
            worst = max(worst, chunked.final_state.max_abs_diff(&rec.final_state));
        }
    }
    Ok(outcome("chunk_equivalence", worst, ctx.tol(1e-9), true, "chunkwise vs recurrent outputs and final state"))
}

fn ut_transform_suite(ctx: &Ctx) -> Result<SuiteOutcome, CliError> {
    let mut worst = 0.0;
    for trial in 0..ctx.cfg.trials {
        let batch = stable_batch(ctx, ctx.seed(8, trial))?.truncated(16.min(ctx.cfg.seq_len))?;
        let keys: Vec<_> = batch.step_inputs().iter().map(|s| s.k.clone()).collect();
        let values: Vec<_> = batch.step_inputs().iter().map(|s| s.v.clone()).collect();
        let alphas = batch
            .step_inputs()
            .iter()
            .map(|s| coefficients(MethodSpec::ExactEfla, s.beta, s.lambda()).map(|c| c.c_transition))
            .collect::<Result<Vec<_>, _>>()?;
        let factors = ut_transform(&keys, &values, &alphas)?;
        let (w, u) = wy_sequential(&keys, &values, &alphas)?;
        worst = max(worst, factors.w.max_abs_diff(&Matrix::from_rows(&w)?));
        worst = max(worst, factors.u.max_abs_diff(&Matrix::from_rows(&u)?));
    }
    Ok(outcome("ut_transform", worst, ctx.tol(1e-10), true, "UT factors vs sequential w/u recurrences"))
}

fn recall(ctx: &Ctx) -> Result<SuiteOutcome, CliError> {
    let spec = RecallSpec::new(ctx.cfg.recall_d_k.min(ctx.cfg.n_pairs), ctx.cfg.recall_d_k, ctx.cfg.recall_d_v, KeyScheme::Orthonormal);
    let mut worst = 0.0;
    for trial in 0..ctx.cfg.trials {
        let seed = ctx.seed(9, trial);
        let task = gen_recall(seed, spec)?;
        for &m in ctx.methods.iter().filter(|m| m.is_ode_family()) {
            let report = eval_recall(m, &task, Perturbation::None, seed)?;
            worst = max(worst, 1.0 - report.cosine);
        }
    }
    Ok(outcome("recall", worst, ctx.tol(1e-12), true, "orthonormal recall keeps direction (1 - cosine)"))
}

