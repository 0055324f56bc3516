//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fails.

use std::time::Instant;

use efla::chunkwise::{chunk_forward, ut_transform, wy_sequential};
use efla::harness::{
    eval_recall, gen_recall, random_batch, rk_convergence, rng_from_seed, stability_sweep, trial_seed, BatchShape,
    KeyScheme, Perturbation, RecallSpec,
};
use efla::integrators::{coefficients, reference_step, step};
use efla::numerics::{Matrix, Vector};
use efla::rank1::decay_gate;
use efla::scan::recurrent_forward;
use efla::{ChunkPlan, MethodSpec, SequenceBatch, StepInput};
use rand::Rng;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn random_vector(rng: &mut impl Rng, n: usize) -> Vector<f64> {
    Vector::from_fn(n, |_| rng.random_range(-1.0..1.0))
}

fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> Matrix<f64> {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn key_with_energy(rng: &mut impl Rng, n: usize, lambda: f64) -> Vector<f64> {
    let dir = random_vector(rng, n);
    dir.scaled(lambda.sqrt() / dir.norm())
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

fn exactness_vs_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = rng_from_seed(1);
    let mut worst = 0.0;
    for _ in 0..100 {
        let beta = rng.random_range(0.05..2.0);
        let x = rng.random_range(0.0..=5.0);
        let input = StepInput::new(key_with_energy(&mut rng, 16, x / beta), random_vector(&mut rng, 16), beta).unwrap();
        let s = random_matrix(&mut rng, 16, 16);
        let exact = step(MethodSpec::ExactEfla, &s, &input).unwrap();
        let oracle = reference_step(&s, &input, 100_000).unwrap();
        worst = nan_max(worst, exact.max_abs_diff(&oracle));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-8 && secs < 10.0,
        format!("exact step vs RK4 oracle (1e5 substeps), 100 cases: max dev {worst:.2e} (<= 1e-8), {secs:.2} s (< 10 s)"),
    )
}

fn rk_ladder() -> Verdict {
    let orders: Vec<u32> = (1..=15).collect();
    let rows = rk_convergence(&orders, 1.0, 1.0).unwrap();
    let expected = [(1, 0.3679), (2, 0.1321), (4, 0.00712)];
    let ladder_dev = expected
        .iter()
        .map(|&(n, e)| (rows[n - 1].abs_error - e).abs())
        .fold(0.0, nan_max);
    let decreasing = rows.windows(2).all(|w| w[1].abs_error < w[0].abs_error);
    verdict(
        ladder_dev <= 1e-4 && decreasing,
        format!(
            "x = 1: e1 {:.6}, e2 {:.6}, e4 {:.6} (max dev {ladder_dev:.1e} <= 1e-4), e15 {:.2e}, strictly decreasing: {decreasing}",
            rows[0].abs_error, rows[1].abs_error, rows[3].abs_error, rows[14].abs_error
        ),
    )
}

fn stability_dichotomy() -> Verdict {
    let cases = [
        (MethodSpec::DeltaEuler, 2.0),
        (MethodSpec::Rk2, 2.5),
        (MethodSpec::Rk4, 1.375),
        (MethodSpec::ExactEfla, 0.049_787_068_367_863_944),
    ];
    let methods: Vec<_> = cases.iter().map(|c| c.0).collect();
    let rows = stability_sweep(&[3.0], 30, &methods).unwrap();
    let mut worst = 0.0;
    let mut parts = Vec::new();
    for ((m, want), row) in cases.iter().zip(&rows) {
        worst = nan_max(worst, (row.measured_factor - want).abs());
        parts.push(format!("{m} {:.6}", row.measured_factor));
    }
    verdict(worst <= 1e-12, format!("x = 3 growth: {} (max dev {worst:.1e} <= 1e-12)", parts.join(", ")))
}

fn chunk_equivalence() -> Verdict {
    let start = Instant::now();
    let methods = [MethodSpec::DeltaEuler, MethodSpec::Rk2, MethodSpec::Rk4, MethodSpec::RkN(6), MethodSpec::ExactEfla];
    let sizes = [1, 2, 7, 16, 64];
    let compare = |m: MethodSpec, b: &SequenceBatch<f64>| {
        let rec = recurrent_forward(m, b, None).unwrap();
        let mut worst = 0.0f64;
        let mut rel = 0.0f64;
        for c in sizes {
            let chunked = chunk_forward(m, b, ChunkPlan::new(c).unwrap(), None).unwrap();
            let dev = nan_max(
                chunked.output_matrix().max_abs_diff(&rec.output_matrix()),
                chunked.final_state.max_abs_diff(&rec.final_state),
            );
            worst = nan_max(worst, dev);
            rel = nan_max(rel, dev / rec.max_state_norm().max(1.0));
        }
        (worst, rel, rec.max_state_norm())
    };
    // β ∈ [0, 2] with ‖k‖ ≤ 1 keeps βλ ≤ 2, inside every explicit method's stable interval.
    let stable = BatchShape {
        beta: (0.0, 2.0),
        key_norm: (0.0, 1.0),
        ..BatchShape::new(256, 32, 32)
    };
    let wide = BatchShape {
        key_norm: (0.0, 3.0),
        ..stable
    };
    let mut worst = 0.0;
    for seed in 0..2 {
        let b = random_batch(trial_seed(4, seed), stable).unwrap();
        for m in methods {
            worst = nan_max(worst, compare(m, &b).0);
        }
    }
    let wide_batch = random_batch(trial_seed(4, 99), wide).unwrap();
    let (wide_exact, _, _) = compare(MethodSpec::ExactEfla, &wide_batch);
    let secs = start.elapsed().as_secs_f64();
    let passed = worst <= 1e-9 && wide_exact <= 1e-9 && secs < 30.0;

    // Not gated: at ‖k‖ up to 3 the explicit methods overflow towards 1e70, so
    // only a deviation relative to the state scale is meaningful there.
    let notes: Vec<String> = methods[..4]
        .iter()
        .map(|&m| {
            let (abs, rel, norm) = compare(m, &wide_batch);
            format!("{m} abs {abs:.1e} rel {rel:.1e} (max |S| {norm:.1e})")
        })
        .collect();
    println!("     note: explicit methods at beta <= 2, |k| <= 3: {}", notes.join("; "));
    verdict(
        passed,
        format!(
            "5 methods x C in {{1,2,7,16,64}}, L = 256, d = 32: max dev {worst:.2e} (beta <= 2, |k| <= 1), exact method at |k| <= 3: {wide_exact:.2e} (<= 1e-9), {secs:.2} s (< 30 s)"
        ),
    )
}

fn ut_vs_sequential() -> Verdict {
    let mut worst = 0.0;
    let shape = BatchShape {
        beta: (0.0, 2.0),
        key_norm: (0.0, 3.0),
        ..BatchShape::new(16, 32, 32)
    };
    for trial in 0..100 {
        let b = random_batch(trial_seed(5, trial), shape).unwrap();
        let keys: Vec<_> = b.step_inputs().iter().map(|s| s.k.clone()).collect();
        let values: Vec<_> = b.step_inputs().iter().map(|s| s.v.clone()).collect();
        let alphas: Vec<f64> = b
            .step_inputs()
            .iter()
            .map(|s| coefficients(MethodSpec::ExactEfla, s.beta, s.lambda()).unwrap().c_transition)
            .collect();
        let f = ut_transform(&keys, &values, &alphas).unwrap();
        let (w, u) = wy_sequential(&keys, &values, &alphas).unwrap();
        for r in 0..16 {
            worst = nan_max(worst, f.w.row_vector(r).max_abs_diff(&w[r]));
            worst = nan_max(worst, f.u.row_vector(r).max_abs_diff(&u[r]));
        }
    }
    verdict(worst <= 1e-10, format!("C = 16, 100 chunks: max row deviation {worst:.2e} (<= 1e-10)"))
}

fn delta_rule_recovery() -> Verdict {
    let mut rng = rng_from_seed(6);
    let mut worst = 0.0;
    for _ in 0..100 {
        let lambda = rng.random_range(0.0..=1e-8);
        let beta = rng.random_range(0.0..=1.0);
        let input = StepInput::new(key_with_energy(&mut rng, 16, lambda), random_vector(&mut rng, 8), beta).unwrap();
        let s = random_matrix(&mut rng, 16, 8);
        let euler = step(MethodSpec::DeltaEuler, &s, &input).unwrap();
        let exact = step(MethodSpec::ExactEfla, &s, &input).unwrap();
        worst = nan_max(worst, exact.max_abs_diff(&euler) / euler.max_abs());
    }
    verdict(worst <= 1e-12, format!("lambda <= 1e-8, 100 cases: max relative dev {worst:.2e} (<= 1e-12)"))
}

fn gate_inequality() -> Verdict {
    let grid: Vec<f64> = (0..20).map(|i| 0.01 * 1000f64.powf(i as f64 / 19.0)).collect();
    let mut below = 0;
    let mut exact_at_zero = true;
    for &beta in &grid {
        exact_at_zero &= decay_gate(beta, 0.0).unwrap().alpha == beta;
        for &lambda in &grid {
            if decay_gate(beta, lambda).unwrap().alpha < beta {
                below += 1;
            }
        }
    }
    verdict(
        below == 400 && exact_at_zero,
        format!("20x20 grid on [0.01, 10]^2: alpha < beta at {below}/400 points; alpha(beta, 0) == beta: {exact_at_zero}"),
    )
}

fn directional_decay() -> Verdict {
    let mut rng = rng_from_seed(8);
    let (mut along, mut across) = (0.0, 0.0);
    let (d, dv) = (16, 8);
    for _ in 0..100 {
        let beta = rng.random_range(0.01..2.0);
        let lambda = rng.random_range(0.01..2.5);
        let k = key_with_energy(&mut rng, d, lambda);
        let s = random_matrix(&mut rng, d, dv);
        let out = step(MethodSpec::ExactEfla, &s, &StepInput::new(k.clone(), Vector::zeros(dv), beta).unwrap()).unwrap();
        let unit = k.scaled(1.0 / k.norm());
        let proj = |m: &Matrix<f64>| Vector::from_fn(dv, |j| (0..d).map(|i| unit[i] * m[(i, j)]).sum::<f64>());
        let (before, after) = (proj(&s), proj(&out));
        let expected = before.scaled((-beta * lambda).exp());
        along = nan_max(along, after.max_abs_diff(&expected) / expected.norm());
        let rest = |m: &Matrix<f64>, p: &Vector<f64>| Matrix::from_fn(d, dv, |i, j| m[(i, j)] - unit[i] * p[j]);
        across = nan_max(across, rest(&out, &after).max_abs_diff(&rest(&s, &before)));
    }
    verdict(
        along <= 1e-10 && across <= 1e-12,
        format!("100 cases: key component rel dev {along:.2e} (<= 1e-10), orthogonal dev {across:.2e} (<= 1e-12)"),
    )
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

fn linear_scaling() -> Verdict {
    let lengths = [1024usize, 2048, 4096, 8192];
    let reps = 9;
    let plan = ChunkPlan::new(64).unwrap();
    let batches: Vec<_> = lengths
        .iter()
        .map(|&len| random_batch(trial_seed(9, len as u64), BatchShape::new(len, 16, 16)).unwrap())
        .collect();
    let run = |b: &SequenceBatch<f64>, chunked: bool| {
        let t = Instant::now();
        if chunked {
            chunk_forward(MethodSpec::ExactEfla, b, plan, None).unwrap();
        } else {
            recurrent_forward(MethodSpec::ExactEfla, b, None).unwrap();
        }
        t.elapsed().as_secs_f64()
    };
    // Repetitions sweep all lengths in turn so slow drift on a shared machine
    // hits every length alike instead of bending the fit.
    let mut samples = vec![(Vec::new(), Vec::new()); lengths.len()];
    for rep in 0..=reps {
        for (b, (rec, chunk)) in batches.iter().zip(samples.iter_mut()) {
            let (r, c) = (run(b, false), run(b, true));
            if rep > 0 {
                rec.push(r);
                chunk.push(c);
            }
        }
    }
    let rec_t: Vec<f64> = samples.iter().map(|s| median(s.0.clone())).collect();
    let chunk_t: Vec<f64> = samples.iter().map(|s| median(s.1.clone())).collect();
    let xs: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    let (a, b) = (slope(&xs, &rec_t), slope(&xs, &chunk_t));
    let band = 0.8..=1.2;
    verdict(
        band.contains(&a) && band.contains(&b),
        format!("L in {{1k,2k,4k,8k}}, median of {reps}: recurrent exponent {a:.3}, chunkwise exponent {b:.3} (in [0.8, 1.2])"),
    )
}

fn robustness_ordering() -> Verdict {
    let spec = RecallSpec::new(4, 8, 8, KeyScheme::Orthonormal).with_repeats(1024);
    let mut ok = true;
    let mut min_cos = f64::INFINITY;
    let mut first_div = Vec::new();
    for trial in 0..3 {
        let seed = trial_seed(10, trial);
        let task = gen_recall(seed, spec).unwrap();
        for s in [1.0, 2.0, 4.0, 8.0] {
            let euler = eval_recall(MethodSpec::DeltaEuler, &task, Perturbation::scale(s), seed).unwrap();
            let exact = eval_recall(MethodSpec::ExactEfla, &task, Perturbation::scale(s), seed).unwrap();
            if s >= 2.0 {
                ok &= euler.divergence_index.is_some();
            }
            ok &= exact.divergence_index.is_none() && exact.cosine >= 0.99;
            min_cos = min_cos.min(exact.cosine);
            if trial == 0 {
                first_div.push(format!("s={s}: {:?}", euler.divergence_index));
            }
        }
    }
    verdict(
        ok,
        format!(
            "repeated-key recall, 3 seeds: Euler divergence index [{}]; exact method never diverges, min cosine {min_cos:.6} (>= 0.99)",
            first_div.join(", ")
        ),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 10] = [
        ("AC1 ", exactness_vs_oracle),
        ("AC2 ", rk_ladder),
        ("AC3 ", stability_dichotomy),
        ("AC4 ", chunk_equivalence),
        ("AC5 ", ut_vs_sequential),
        ("AC6 ", delta_rule_recovery),
        ("AC7 ", gate_inequality),
        ("AC8 ", directional_decay),
        ("AC9 ", linear_scaling),
        ("AC10", robustness_ordering),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let v = check();
        println!("{name} {} {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.passed);
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
