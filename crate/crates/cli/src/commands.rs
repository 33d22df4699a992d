use std::io::Write;
use std::path::{Path, PathBuf};

use mlr_core::error::Partial;
use mlr_core::io::{read_dataset, read_model, write_dataset, write_model};
use mlr_core::learner::{learn_all, recovery_error, FitReport, Matching};
use mlr_core::model::sample_dataset_with_noise;
use mlr_core::rng::substream;
use mlr_core::{Dataset, MixtureModel, MlrError};
use serde::Serialize;
use serde_json::Value;

use crate::config::{fallback_bounds, version, Format, Resolved, STREAM_DATA, STREAM_FIT};
use crate::error::CliError;
use crate::{EvalArgs, FitArgs, GenArgs};

pub fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

pub fn truth_weights(model: &MixtureModel) -> Vec<Vec<f64>> {
    model.weights.iter().map(|w| w.iter().copied().collect()).collect()
}

pub fn gen(args: &GenArgs) -> Result<(), CliError> {
    let cfg = Resolved::from_flags(&args.common)?;
    let seed = cfg.first_seed();
    let model = cfg.build_model(seed)?;
    let data = sample_dataset_with_noise(&model, cfg.n, cfg.noise_std, &mut substream(seed, STREAM_DATA))?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("dataset.csv"));
    let model_out = args.model_out.clone().unwrap_or_else(|| out.with_extension("model.json"));
    write_dataset(&out, &data).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", out.display())))?;
    write_model(&model_out, &model)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", model_out.display())))?;
    println!(
        "wrote {} rows to {} and the model to {} (seed {seed})",
        data.len(),
        out.display(),
        model_out.display()
    );
    Ok(())
}

/// Rows removed in one peeling round, split by hidden component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundAudit {
    pub round: usize,
    pub removed: usize,
    pub removed_by_component: Vec<usize>,
    pub matched_component: Option<usize>,
    /// Share of removed rows that belong to the matched component.
    pub purity: Option<f64>,
}

pub fn peel_audit(report: &FitReport, z: &[usize], k: usize) -> Vec<RoundAudit> {
    report
        .rounds
        .iter()
        .enumerate()
        .map(|(i, round)| {
            let mut by = vec![0usize; k];
            for &row in &round.removed_rows {
                if let Some(slot) = by.get_mut(z[row]) {
                    *slot += 1;
                }
            }
            let matched = report.matched.as_ref().map(|m| m.permutation[i]);
            let purity = matched.map(|j| if round.removed == 0 { 0.0 } else { by[j] as f64 / round.removed as f64 });
            RoundAudit {
                round: round.round,
                removed: round.removed,
                removed_by_component: by,
                matched_component: matched,
                purity,
            }
        })
        .collect()
}

#[derive(Serialize)]
struct FitEnvelope<'a> {
    version: String,
    config_hash: String,
    seed: u64,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    report: &'a FitReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    audit: Option<Vec<RoundAudit>>,
}

/// Errors from a fit on valid input: running dry is a data problem, bad
/// settings are usage problems, anything else broke an internal guarantee.
pub fn fit_error(e: MlrError) -> CliError {
    match e {
        MlrError::Exhausted { .. } => CliError::Insufficient(e.to_string()),
        MlrError::Parameter(_) | MlrError::Shape(_) | MlrError::HiddenLabels => CliError::Usage(e.to_string()),
        other => CliError::Invariant(other.to_string()),
    }
}

pub fn check_recovered(report: &FitReport) -> Result<(), CliError> {
    if report.recovered.iter().flatten().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CliError::Invariant("recovered weights are not finite".into()))
    }
}

pub fn fit(args: &FitArgs) -> Result<(), CliError> {
    let cfg = Resolved::from_flags(&args.common)?;
    let seed = cfg.first_seed();
    let data = read_dataset(&args.data)
        .map_err(|e| CliError::Usage(format!("cannot read dataset {}: {e}", args.data.display())))?;
    let (data, z) = data.strip_hidden();

    let truth = match &args.truth {
        Some(p) => Some(read_model(p)?),
        None => cfg.fixed_model()?,
    };
    if args.eval_with_truth && truth.is_none() {
        return Err(CliError::Usage("--eval-with-truth needs --truth or a model in the config".into()));
    }
    let k = match (args.common.k, &truth) {
        (Some(k), _) => k,
        (None, Some(t)) => t.k(),
        (None, None) => cfg.component_count()?,
    };
    let bounds = truth.as_ref().map_or_else(|| fallback_bounds(k, &args.common), |t| t.bounds);
    let learner = cfg.learner_config(k, data.dim(), bounds)?;

    let (mut report, failure) = match learn_all(&data, &learner, &mut substream(seed, STREAM_FIT)) {
        Ok(r) => (r, None),
        Err(e) => match e.partial() {
            Some(Partial::Fit(r)) => (r.clone(), Some(e)),
            _ => return Err(fit_error(e)),
        },
    };
    let mut audit = None;
    if args.eval_with_truth {
        let truth = truth.as_ref().expect("checked above");
        if failure.is_none() {
            report.evaluate(&truth_weights(truth))?;
        }
        if let Some(z) = &z {
            audit = Some(peel_audit(&report, z, truth.k()));
        }
    }
    let report = if args.common.verbose_trace { report } else { report.without_traces() };
    let envelope = FitEnvelope {
        version: version(),
        config_hash: cfg.hash(),
        seed,
        status: if failure.is_some() { "exhausted" } else { "ok" },
        error: failure.as_ref().map(|e| e.to_string()),
        report: &report,
        audit,
    };
    emit(cfg.out.as_deref(), &to_json(&envelope))?;
    if let Some(e) = failure {
        return Err(fit_error(e));
    }
    check_recovered(&report)
}

/// Weight vectors from a fit report, a model file, or a bare list.
fn load_weights(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let list = if let Some(r) = value.pointer("/report/recovered") {
        r.clone()
    } else if let Some(r) = value.get("recovered") {
        r.clone()
    } else if let Some(w) = value.get("weights") {
        w.clone()
    } else {
        value
    };
    serde_json::from_value(list)
        .map_err(|e| CliError::Usage(format!("{}: expected a list of weight vectors: {e}", path.display())))
}

#[derive(Serialize)]
struct EvalEnvelope {
    version: String,
    #[serde(flatten)]
    matching: Matching,
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let estimates = load_weights(&args.estimates)?;
    let truth = load_weights(&args.truth)?;
    if estimates.len() != truth.len() {
        return Err(CliError::Usage(format!(
            "{} estimates but {} true weights",
            estimates.len(),
            truth.len()
        )));
    }
    let matching = recovery_error(&estimates, &truth)?;
    let text = match args.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&EvalEnvelope {
            version: version(),
            matching,
        }),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["estimate", "truth", "error"]).map_err(csv_error)?;
            for (i, (&j, e)) in matching.permutation.iter().zip(&matching.per_component).enumerate() {
                w.write_record([i.to_string(), j.to_string(), mlr_core::io::format_f64(*e)]).map_err(csv_error)?;
            }
            String::from_utf8(w.into_inner().map_err(|e| CliError::Invariant(e.to_string()))?)
                .expect("csv output is utf-8")
        }
    };
    emit(args.out.as_deref(), &text)
}

pub fn csv_error(e: csv::Error) -> CliError {
    CliError::Invariant(format!("csv encoding failed: {e}"))
}

/// Dataset for one bench seed, plus the model it came from.
pub fn bench_instance(cfg: &Resolved, seed: u64) -> Result<(MixtureModel, Dataset), CliError> {
    let model = cfg.build_model(seed)?;
    let data = sample_dataset_with_noise(&model, cfg.n, cfg.noise_std, &mut substream(seed, STREAM_DATA))?;
    Ok((model, data))
}
