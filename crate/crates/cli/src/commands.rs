//! Sweep, recall and benchmark subcommands.

use std::path::Path;
use std::time::Instant;

use efla::chunkwise::chunk_forward;
use efla::harness::{
    emit_csv, eval_recall, gen_recall, random_batch, rk_convergence, stability_sweep, strictly_decreasing_until,
    trial_seed, write_csv, BatchShape, CsvRecord, RecallSpec, TrialReport,
};
use efla::scan::recurrent_forward;
use efla::{ChunkPlan, MethodSpec};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::{CliError, Outcome};

fn write_records<R: CsvRecord>(records: &[R], out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => emit_csv(records, path).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => write_csv(records, std::io::stdout().lock()).map_err(|e| CliError::Io(e.to_string())),
    }
}

pub fn converge(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let out = cfg
        .out
        .as_deref()
        .ok_or_else(|| CliError::Usage("converge needs an output path (--out)".into()))?;
    if cfg.orders.is_empty() || cfg.betas.is_empty() || cfg.lambdas.is_empty() {
        return Err(CliError::Usage("converge needs non-empty orders, betas and lambdas".into()));
    }
    let mut rows = Vec::new();
    let mut monotone = true;
    for &beta in &cfg.betas {
        for &lambda in &cfg.lambdas {
            let table = rk_convergence(&cfg.orders, beta, lambda)?;
            monotone &= strictly_decreasing_until(&table, 1e-15);
            rows.extend(table);
        }
    }
    write_records(&rows, Some(out))?;
    eprintln!(
        "wrote {} rows to {}{}",
        rows.len(),
        out.display(),
        if monotone { "" } else { " (errors not monotone in N)" }
    );
    Ok(Outcome::Pass)
}

pub fn stability(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let tol = cfg.tolerance.unwrap_or(1e-12);
    let rows = stability_sweep(&cfg.x_values, cfg.steps, &cfg.methods()?)?;
    write_records(&rows, cfg.out.as_deref())?;
    let bad = rows.iter().filter(|r| r.abs_error.is_nan() || r.abs_error > tol).count();
    if bad > 0 {
        eprintln!("{bad} growth factors off by more than {tol:e}");
        return Ok(Outcome::Fail);
    }
    Ok(Outcome::Pass)
}

/// Methods × perturbations × seeds, in that nesting order.
pub fn recall(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let methods = cfg.methods()?;
    let perturbations = cfg.perturbations()?;
    let spec = RecallSpec {
        repeats: cfg.repeats,
        ..RecallSpec::new(cfg.n_pairs, cfg.recall_d_k, cfg.recall_d_v, cfg.key_scheme()?)
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let seeds: Vec<u64> = (0..cfg.trials as u64).map(|i| trial_seed(cfg.seed, i)).collect();
    let tasks = seeds
        .iter()
        .map(|&s| gen_recall(s, spec))
        .collect::<Result<Vec<_>, _>>()?;
    let n_seeds = seeds.len();
    let cells: Vec<(MethodSpec, _, usize)> = methods
        .iter()
        .flat_map(|&m| perturbations.iter().flat_map(move |&p| (0..n_seeds).map(move |i| (m, p, i))))
        .collect();
    let reports: Vec<TrialReport> = cells
        .par_iter()
        .map(|&(m, p, i)| eval_recall(m, &tasks[i], p, seeds[i]))
        .collect::<Result<_, _>>()?;
    write_records(&reports, cfg.out.as_deref())?;
    Ok(Outcome::Pass)
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub path: &'static str,
    pub len: usize,
    pub median_seconds: f64,
    pub tokens_per_second: f64,
}

impl CsvRecord for BenchRow {
    fn header() -> &'static [&'static str] {
        &["path", "len", "median_seconds", "tokens_per_second"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.path.into(),
            self.len.to_string(),
            efla::harness::output::format_float(self.median_seconds),
            efla::harness::output::format_float(self.tokens_per_second),
        ]
    }
}

fn median(mut times: Vec<f64>) -> f64 {
    times.sort_by(f64::total_cmp);
    times[times.len() / 2]
}

fn timed(f: impl FnOnce() -> Result<(), CliError>) -> Result<f64, CliError> {
    let start = Instant::now();
    f()?;
    Ok(start.elapsed().as_secs_f64())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

pub fn bench(cfg: &RunConfig) -> Result<Outcome, CliError> {
    if cfg.bench_lengths.len() < 2 || cfg.bench_lengths.contains(&0) {
        return Err(CliError::Usage("bench needs at least two positive lengths".into()));
    }
    // the exact method when listed, else the first chunkable one
    let methods = cfg.methods()?;
    let method = if methods.contains(&MethodSpec::ExactEfla) {
        MethodSpec::ExactEfla
    } else {
        methods
            .into_iter()
            .find(|m| !matches!(m, MethodSpec::Reference(_)))
            .ok_or_else(|| CliError::Usage("bench needs a method with a chunkwise form".into()))?
    };
    let plan = ChunkPlan::new(cfg.chunk_size)?;
    let unit = ChunkPlan::new(1)?;
    let mut batches = Vec::with_capacity(cfg.bench_lengths.len());
    let mut equivalence = 0.0f64;
    for &len in &cfg.bench_lengths {
        let batch = random_batch(trial_seed(cfg.seed, len as u64), BatchShape::new(len, cfg.bench_d, cfg.bench_d))?;
        let rec = recurrent_forward(method, &batch, None)?;
        let single = chunk_forward(method, &batch, unit, None)?;
        equivalence = equivalence.max(single.output_matrix().max_abs_diff(&rec.output_matrix()));
        batches.push(batch);
    }
    // One untimed warm-up pass, then repetitions that sweep every length in
    // turn, so drift on a busy machine is shared across lengths.
    let mut samples = vec![(Vec::new(), Vec::new()); batches.len()];
    for rep in 0..=cfg.bench_reps {
        for (batch, (rec, chunk)) in batches.iter().zip(samples.iter_mut()) {
            let r = timed(|| recurrent_forward(method, batch, None).map(drop).map_err(CliError::from))?;
            let c = timed(|| chunk_forward(method, batch, plan, None).map(drop).map_err(CliError::from))?;
            if rep > 0 {
                rec.push(r);
                chunk.push(c);
            }
        }
    }
    let mut rows = Vec::new();
    for (&len, (rec, chunk)) in cfg.bench_lengths.iter().zip(samples) {
        for (path, times) in [("recurrent", rec), ("chunkwise", chunk)] {
            let t = median(times);
            rows.push(BenchRow {
                path,
                len,
                median_seconds: t,
                tokens_per_second: len as f64 / t,
            });
        }
    }
    if let Some(out) = cfg.out.as_deref() {
        write_records(&rows, Some(out))?;
    }
    let lens: Vec<f64> = cfg.bench_lengths.iter().map(|&l| l as f64).collect();
    let mut ok = equivalence <= 1e-9;
    println!("method {method}, d = {}, chunk size {}", cfg.bench_d, cfg.chunk_size);
    for path in ["recurrent", "chunkwise"] {
        let times: Vec<f64> = rows.iter().filter(|r| r.path == path).map(|r| r.median_seconds).collect();
        let slope = loglog_slope(&lens, &times);
        let in_band = (0.8..=1.2).contains(&slope);
        ok &= in_band;
        for r in rows.iter().filter(|r| r.path == path) {
            println!("{path:>9}  L = {:>6}  {:.3e} s  {:.3e} tokens/s", r.len, r.median_seconds, r.tokens_per_second);
        }
        println!("{path:>9}  exponent {slope:.3} {}", if in_band { "ok" } else { "OUT OF BAND" });
    }
    println!("C = 1 vs recurrent max deviation {equivalence:.3e}");
    Ok(if ok { Outcome::Pass } else { Outcome::Fail })
}
