//! Seeded sweeps: generate, fit and score one instance per seed.

use std::time::Instant;

use mlr_core::learner::learn_all;
use mlr_core::rng::substream;
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::{bench_instance, check_recovered, csv_error, emit, fit_error, peel_audit, truth_weights};
use crate::config::{version, Format, Resolved, STREAM_FIT};
use crate::error::CliError;
use crate::BenchArgs;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRow {
    pub seed: u64,
    pub status: String,
    pub max_error: Option<f64>,
    pub success: bool,
    /// Smallest round purity from the hidden-label audit.
    pub purity: Option<f64>,
    pub descent_secs: f64,
    pub refine_secs: f64,
    pub total_secs: f64,
    pub rows_drawn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub seeds: usize,
    pub completed: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub eps: f64,
    pub error_min: Option<f64>,
    pub error_median: Option<f64>,
    pub error_p90: Option<f64>,
    pub error_max: Option<f64>,
    pub purity_min: Option<f64>,
    pub mean_descent_secs: f64,
    pub mean_refine_secs: f64,
    pub mean_total_secs: f64,
}

#[derive(Serialize)]
struct BenchReport<'a> {
    version: String,
    config_hash: String,
    aggregate: &'a Aggregate,
    rows: &'a [SeedRow],
}

/// Linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    let last = sorted.len().checked_sub(1)?;
    let pos = q.clamp(0.0, 1.0) * last as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

pub fn aggregate(rows: &[SeedRow], eps: f64) -> Aggregate {
    let done: Vec<&SeedRow> = rows.iter().filter(|r| r.status == "ok").collect();
    let mut errors: Vec<f64> = done.iter().filter_map(|r| r.max_error).collect();
    errors.sort_by(f64::total_cmp);
    let successes = rows.iter().filter(|r| r.success).count();
    let mean = |f: fn(&SeedRow) -> f64| {
        if done.is_empty() {
            0.0
        } else {
            done.iter().map(|r| f(r)).sum::<f64>() / done.len() as f64
        }
    };
    Aggregate {
        seeds: rows.len(),
        completed: done.len(),
        successes,
        success_rate: if rows.is_empty() { 0.0 } else { successes as f64 / rows.len() as f64 },
        eps,
        error_min: quantile(&errors, 0.0),
        error_median: quantile(&errors, 0.5),
        error_p90: quantile(&errors, 0.9),
        error_max: quantile(&errors, 1.0),
        purity_min: done.iter().filter_map(|r| r.purity).reduce(f64::min),
        mean_descent_secs: mean(|r| r.descent_secs),
        mean_refine_secs: mean(|r| r.refine_secs),
        mean_total_secs: mean(|r| r.total_secs),
    }
}

fn failed_row(seed: u64, status: String, secs: f64) -> SeedRow {
    SeedRow {
        seed,
        status,
        max_error: None,
        success: false,
        purity: None,
        descent_secs: 0.0,
        refine_secs: 0.0,
        total_secs: secs,
        rows_drawn: 0,
    }
}

pub fn run_seed(cfg: &Resolved, seed: u64) -> SeedRow {
    let started = Instant::now();
    let attempt = || -> Result<SeedRow, CliError> {
        let (model, data) = bench_instance(cfg, seed)?;
        let (data, z) = data.strip_hidden();
        let learner = cfg.learner_config(model.k(), model.d(), model.bounds)?;
        let mut report = learn_all(&data, &learner, &mut substream(seed, STREAM_FIT)).map_err(fit_error)?;
        check_recovered(&report)?;
        let max_error = report.evaluate(&truth_weights(&model))?.max_error;
        let purity = z.and_then(|z| peel_audit(&report, &z, model.k()).iter().filter_map(|a| a.purity).reduce(f64::min));
        Ok(SeedRow {
            seed,
            status: "ok".into(),
            max_error: Some(max_error),
            success: max_error <= cfg.eps,
            purity,
            descent_secs: report.rounds.iter().map(|r| r.descent_secs).sum(),
            refine_secs: report.rounds.iter().map(|r| r.refine_secs).sum(),
            total_secs: started.elapsed().as_secs_f64(),
            rows_drawn: report.rows_drawn,
        })
    };
    attempt().unwrap_or_else(|e| failed_row(seed, format!("failed (exit {}): {e}", e.exit_code()), started.elapsed().as_secs_f64()))
}

/// Worker count from `MLR_THREADS`, if set.
pub fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var("MLR_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("MLR_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

pub fn bench(args: &BenchArgs) -> Result<(), CliError> {
    let mut cfg = Resolved::from_flags(&args.common)?;
    if let Some(list) = &args.seeds {
        cfg.seeds = list.clone();
    } else if let Some(count) = args.count {
        let start = cfg.first_seed();
        cfg.seeds = (start..start + count as u64).collect();
    }
    cfg.seeds.sort_unstable();
    cfg.seeds.dedup();
    if cfg.seeds.is_empty() {
        return Err(CliError::Usage("bench needs at least one seed".into()));
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Invariant(format!("thread pool: {e}")))?;
    let rows: Vec<SeedRow> = pool.install(|| cfg.seeds.par_iter().map(|&s| run_seed(&cfg, s)).collect());
    let agg = aggregate(&rows, cfg.eps);

    let text = match cfg.format {
        Format::Json => {
            serde_json::to_string_pretty(&BenchReport {
                version: version(),
                config_hash: cfg.hash(),
                aggregate: &agg,
                rows: &rows,
            })
            .expect("report serializes")
                + "\n"
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r).map_err(csv_error)?;
            }
            String::from_utf8(w.into_inner().map_err(|e| CliError::Invariant(e.to_string()))?)
                .expect("csv output is utf-8")
        }
    };
    emit(cfg.out.as_deref(), &text)?;
    eprintln!(
        "{}/{} seeds completed, success rate {:.2}",
        agg.completed, agg.seeds, agg.success_rate
    );
    if agg.completed == 0 {
        return Err(CliError::Insufficient("no seed completed".into()));
    }
    Ok(())
}
