//! Learning mixtures of linear regressions whose components draw covariates
//! from Gaussians with different covariances.
//!
//! The pipeline has two phases per component. [`momentdescent`] walks an
//! iterate towards one of the hidden weights using mixed label moments
//! ([`momentsub`], [`polycoeff`]) and a one-dimensional variance estimator
//! ([`onedvar`]). [`graddescent`] then refines the warm start on a smoothed
//! log-residual objective. [`learner`] peels components off one at a time.

pub mod error;
pub mod graddescent;
pub mod io;
pub mod learner;
pub mod model;
pub mod momentdescent;
pub mod momentsub;
pub mod onedvar;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod polycoeff;
pub mod rng;
pub mod sampler;

pub use error::{MlrError, Result};
pub use graddescent::{GradConfig, RefineOutcome};
pub use learner::{FitReport, LearnerConfig};
pub use model::{Dataset, InstanceSpec, MixtureModel, ModelBounds};
pub use momentdescent::{DescentState, MomentDescentConfig};
pub use momentsub::{MomentMatrix, PowerwTolerances, SubspaceEstimate};
pub use onedvar::{OneDConfig, OneDEstimate};
pub use polycoeff::PolynomialSpec;
pub use sampler::{BatchSource, ModelSource, SubsampleSource};
