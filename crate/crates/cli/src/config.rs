//! Experiment configuration: an optional JSON file merged with command-line flags.

use std::path::{Path, PathBuf};

use mlr_core::io::{read_model, ModelFile};
use mlr_core::learner::LearnerConfig;
use mlr_core::rng::substream;
use mlr_core::{InstanceSpec, MixtureModel, ModelBounds};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::Common;

pub const DEFAULT_K: usize = 2;
pub const DEFAULT_D: usize = 10;
pub const DEFAULT_N: usize = 400_000;
pub const DEFAULT_EPS: f64 = 0.05;
pub const DEFAULT_SIGMA: f64 = 2.0;
pub const DEFAULT_DELTA: f64 = 1.0;

/// Random stream ids derived from one seed.
pub const STREAM_MODEL: u64 = 0;
pub const STREAM_DATA: u64 = 1;
pub const STREAM_FIT: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Path(PathBuf),
    Instance(InstanceSpec),
    Inline(ModelFile),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Learner knobs a config file may pin. Unset fields keep the learner defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerOverrides {
    pub eps_w: Option<f64>,
    pub eps_g: Option<f64>,
    pub removal_scale: Option<f64>,
    pub descent_m: Option<usize>,
    pub descent_t_max: Option<usize>,
    pub descent_q: Option<usize>,
    pub grad_m: Option<usize>,
    pub grad_t_max: Option<usize>,
    pub grad_eta0: Option<f64>,
    pub zeta: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<ModelChoice>,
    pub n: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub eps: Option<f64>,
    pub noise_std: Option<f64>,
    /// Bounds handed to the learner; taken from the model when absent.
    pub bounds: Option<ModelBounds>,
    pub learner: LearnerOverrides,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Config after flags are applied. Everything that changes results is hashed,
/// except the seeds, which reports carry separately.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub model: ModelChoice,
    pub n: usize,
    pub eps: f64,
    pub noise_std: f64,
    pub bounds: Option<ModelBounds>,
    pub learner: LearnerOverrides,
    #[serde(skip)]
    pub seeds: Vec<u64>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub format: Format,
}

impl Resolved {
    pub fn from_flags(flags: &Common) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let shape_flags = flags.k.is_some() || flags.d.is_some() || flags.sigma.is_some() || flags.delta.is_some();
        let model = match file.model {
            Some(ModelChoice::Instance(mut spec)) => {
                spec.k = flags.k.unwrap_or(spec.k);
                spec.d = flags.d.unwrap_or(spec.d);
                spec.sigma = flags.sigma.unwrap_or(spec.sigma);
                spec.delta = flags.delta.unwrap_or(spec.delta);
                ModelChoice::Instance(spec)
            }
            Some(_) if shape_flags => {
                return Err(CliError::Usage(
                    "--k, --d, --sigma and --delta only apply to generated instances".into(),
                ))
            }
            Some(fixed) => fixed,
            None => ModelChoice::Instance(InstanceSpec::new(
                flags.k.unwrap_or(DEFAULT_K),
                flags.d.unwrap_or(DEFAULT_D),
                flags.sigma.unwrap_or(DEFAULT_SIGMA),
                flags.delta.unwrap_or(DEFAULT_DELTA),
            )),
        };
        let seeds = match (&flags.seed, file.seeds) {
            (Some(s), _) => vec![*s],
            (None, Some(list)) => list,
            (None, None) => vec![0],
        };
        let n = flags.n.or(file.n).unwrap_or(DEFAULT_N);
        if n == 0 {
            return Err(CliError::Usage("--n must be at least 1".into()));
        }
        Ok(Resolved {
            model,
            n,
            eps: flags.eps.or(file.eps).unwrap_or(DEFAULT_EPS),
            noise_std: file.noise_std.unwrap_or(0.0),
            bounds: file.bounds,
            learner: file.learner,
            seeds,
            out: flags.out.clone().or(file.out),
            format: flags.format.or(file.format).unwrap_or(Format::Json),
        })
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn first_seed(&self) -> u64 {
        self.seeds.first().copied().unwrap_or(0)
    }

    /// The model for `seed`; generated instances draw from the model stream.
    pub fn build_model(&self, seed: u64) -> Result<MixtureModel, CliError> {
        Ok(match &self.model {
            ModelChoice::Path(p) => read_model(p)?,
            ModelChoice::Inline(file) => file.clone().into_model()?,
            ModelChoice::Instance(spec) => spec.sample(&mut substream(seed, STREAM_MODEL))?,
        })
    }

    /// A model that does not depend on the seed, if the config names one.
    pub fn fixed_model(&self) -> Result<Option<MixtureModel>, CliError> {
        match &self.model {
            ModelChoice::Instance(_) => Ok(None),
            _ => self.build_model(0).map(Some),
        }
    }

    pub fn component_count(&self) -> Result<usize, CliError> {
        Ok(match &self.model {
            ModelChoice::Instance(spec) => spec.k,
            ModelChoice::Inline(file) => file.k,
            ModelChoice::Path(_) => self.build_model(0)?.k(),
        })
    }

    pub fn learner_config(&self, k: usize, d: usize, bounds: ModelBounds) -> Result<LearnerConfig, CliError> {
        let b = self.bounds.unwrap_or(bounds);
        let mut cfg = LearnerConfig::new(k, d, b.sigma, b.delta, b.pmin, self.eps)?;
        let o = &self.learner;
        if let Some(eps_w) = o.eps_w {
            cfg = LearnerConfig { eps_w, ..cfg };
            cfg.descent = mlr_core::MomentDescentConfig::new(k, b.sigma, b.pmin, eps_w / b.sigma, cfg.delta)?;
        }
        if let Some(eps_g) = o.eps_g {
            cfg.eps_g = eps_g;
            cfg.grad = cfg.grad.clone().with_eps(eps_g);
        }
        if let Some(c) = o.removal_scale {
            cfg.removal_scale = c;
        }
        if let Some(m) = o.descent_m {
            cfg.descent.m = m;
        }
        if let Some(t) = o.descent_t_max {
            cfg.descent.t_max = t;
        }
        if let Some(q) = o.descent_q {
            cfg.descent.q = q;
        }
        if let Some(m) = o.grad_m {
            cfg.grad.m = m;
        }
        if let Some(eta0) = o.grad_eta0 {
            cfg.grad.eta0 = eta0;
            cfg.grad.t_max = cfg.grad.default_steps();
        }
        if let Some(zeta) = o.zeta {
            cfg.grad = cfg.grad.clone().with_zeta(zeta);
        }
        if let Some(t) = o.grad_t_max {
            cfg.grad.t_max = t;
        }
        Ok(cfg)
    }
}

/// Bounds from the model, or defaults for a bare dataset.
pub fn fallback_bounds(k: usize, flags: &Common) -> ModelBounds {
    ModelBounds {
        sigma: flags.sigma.unwrap_or(DEFAULT_SIGMA),
        delta: flags.delta.unwrap_or(DEFAULT_DELTA),
        pmin: flags.pmin.unwrap_or(1.0 / k as f64),
    }
}

pub fn version() -> String {
    match option_env!("MLR_GIT_REV") {
        Some(rev) => format!("v{}-g{rev}", env!("CARGO_PKG_VERSION")),
        None => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}
