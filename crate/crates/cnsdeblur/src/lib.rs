//! Blind image deblurring built on a 2D autoregressive image model.
//!
//! The blur kernel is recovered as the left null vector of a block operator
//! assembled from the AR stencil of the blurred image. A small inverse
//! kernel regularized by the surface-area functional gives a primary
//! estimate, which one of four iterative schemas then refines.
//!
//! ```no_run
//! use cnsdeblur::{blind_deblur, io, PipelineConfig};
//!
//! let x = io::load_image("blurred.png")?;
//! let out = blind_deblur(&x, &PipelineConfig::default())?;
//! io::save_image(&out.s_hat, "restored.png")?;
//! # Ok::<(), cnsdeblur::Error>(())
//! ```

pub mod ar;
pub mod conv;
pub mod denoise;
pub mod error;
pub mod fixture;
pub mod image;
pub mod io;
pub mod ipsf;
pub mod linalg;
pub mod pipeline;
pub mod psf;
pub mod schemas;
pub mod trace;

pub use ar::{estimate_ar, select_patch, ArFit, ArModel, ArRegularization};
pub use conv::{conv_same, correlate_adjoint, BoundaryMode, RegularizerKind};
pub use denoise::{cascade, impulse_energy, prior_filter, CascadeStage, Orders};
pub use error::{Error, Result};
pub use fixture::{make_fixture, make_psf, texture, NoiseSpec, PsfKind, SyntheticFixture, Texture};
pub use image::{psnr, ImagePlane, Kernel, MultiChannelImage, QualityReport};
pub use ipsf::{build_problem, optimize_ipsf, solve_ls, IpsfConfig, IpsfProblem, IpsfSolveReport};
pub use pipeline::{blind_deblur, deblur_series, evaluate, EvaluationReport, PipelineConfig, PipelineResult};
pub use psf::{cns_estimate, estimate_psf, CnsEstimate};
pub use schemas::{ConvergenceTrace, SchemaConfig, SchemaKind, StopReason, TraceRecord};
pub use trace::TraceDocument;
