//! Iterative refinement of the primary estimate.
//!
//! * [`lr`]: multiplicative Lucy-Richardson steps with optional PSF update.
//! * [`lrme`]: additive maximum-entropy variant with a regularizer term.
//! * [`bvdr`]: balanced variations with the dynamic regularization weight.
//! * [`cs`]: curved-space schema with a pointwise weight field.
//!
//! All schemas share [`monitor`] for stopping decisions and record a
//! [`ConvergenceTrace`].

pub mod bvdr;
pub mod cs;
pub mod lambda;
pub mod lr;
pub mod lrme;
pub mod monitor;

use serde::{Deserialize, Serialize};

use crate::conv::RegularizerKind;
use crate::error::{Error, Result};
use crate::image::ImagePlane;

pub use bvdr::{bvdr_run, bvdr_run_from};
pub use cs::{cs_lambda_field, cs_opt_diagnostic, cs_run, cs_run_from};
pub use lambda::{dynamic_lambda, LambdaState, LambdaUpdate, LAMBDA_CAP};
pub use lr::{lr_psf_update, lr_run, lr_step, LrOutcome};
pub use lrme::{lrme_run, lrme_step};
pub use monitor::{stop_decision, Monitor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaKind {
    Lr,
    Lrme,
    Bvdr,
    Cs,
}

impl SchemaKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchemaKind::Lr => "lr",
            SchemaKind::Lrme => "lrme",
            SchemaKind::Bvdr => "bvdr",
            SchemaKind::Cs => "cs",
        }
    }

    pub fn default_max_iters(&self) -> usize {
        match self {
            SchemaKind::Lr => 100,
            SchemaKind::Lrme | SchemaKind::Bvdr | SchemaKind::Cs => 10,
        }
    }
}

impl std::str::FromStr for SchemaKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr" => Ok(SchemaKind::Lr),
            "lrme" => Ok(SchemaKind::Lrme),
            "bvdr" => Ok(SchemaKind::Bvdr),
            "cs" => Ok(SchemaKind::Cs),
            other => Err(Error::Config(format!("unknown schema '{other}'"))),
        }
    }
}

/// Parameters of one schema run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub schema: SchemaKind,
    /// Relaxation step.
    pub dt: f64,
    /// Fixed regularization weight. `None` selects the dynamic rule for
    /// LRME and BVDR and unit weight of the curvature term for CS; zero
    /// switches regularization off.
    pub lambda0: Option<f64>,
    pub regularizer: RegularizerKind,
    /// Steps during which the monotonicity check is suspended.
    pub q: usize,
    /// Required contraction of successive step sizes.
    pub theta: f64,
    /// Stop once the mean squared step falls below this.
    pub eps: f64,
    pub max_iters: usize,
    /// Lower clamp of the LR denominator.
    pub zero_guard: f64,
    /// Multiplicative PSF refinement after each LR step.
    pub update_psf: bool,
}

impl SchemaConfig {
    pub fn for_schema(schema: SchemaKind) -> Self {
        Self {
            schema,
            dt: match schema {
                SchemaKind::Bvdr | SchemaKind::Lrme => 0.1,
                SchemaKind::Cs | SchemaKind::Lr => 1.0,
            },
            lambda0: None,
            regularizer: RegularizerKind::Saf,
            q: 5,
            theta: 1.0,
            eps: 1e-8,
            max_iters: schema.default_max_iters(),
            zero_guard: 1e-6,
            update_psf: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be > 0, got {}", self.eps)));
        }
        if !(self.theta >= 1.0 && self.theta.is_finite()) {
            return Err(Error::Config(format!("theta must be >= 1, got {}", self.theta)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        if !(self.zero_guard > 0.0) {
            return Err(Error::Config("zero_guard must be > 0".into()));
        }
        if let Some(l) = self.lambda0 {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Config("lambda0 must be finite and >= 0".into()));
            }
        }
        self.regularizer.validate()
    }
}

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    NonFinite,
    EpsReached,
    MonotonicityViolated,
    DtBoundViolated,
    IterCap,
}

/// One iteration of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    /// Mean squared change `<(S^(k+1) - S^(k))^2>`.
    pub residual_msq: f64,
    pub lambda: Option<f64>,
    /// Ratio of the previous step size to this one.
    pub theta: Option<f64>,
    /// Smallest admissible relaxation step, `<|dS|> / <|L(S)|>` (CS only).
    pub dt_lower: Option<f64>,
    /// `dt * max|dS|` (CS only).
    pub dt_upper_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
    pub stop_reason: StopReason,
    /// First step at which the monotonicity check was active.
    pub transition_end: Option<usize>,
    /// The dynamic weight hit a degenerate denominator or its clamp.
    pub lambda_degenerate: bool,
}

impl ConvergenceTrace {
    /// Index of the step that broke monotonicity, if any.
    pub fn violation_step(&self) -> Option<usize> {
        match self.stop_reason {
            StopReason::MonotonicityViolated => self.records.last().map(|r| r.k),
            _ => None,
        }
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.lambda).collect()
    }
}

/// Final iterate plus trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaOutcome {
    pub image: ImagePlane,
    pub trace: ConvergenceTrace,
}
