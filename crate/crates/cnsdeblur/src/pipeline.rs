//! End-to-end blind deblurring and fixture scoring.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ar::{estimate_ar, select_patch, ArFit, ArRegularization};
use crate::conv::{conv_same, BoundaryMode, RegularizerKind};
use crate::denoise::{prior_filter, Orders, PsfSource};
use crate::error::{Error, Result};
use crate::fixture::SyntheticFixture;
use crate::image::{kernel_ncc, mean_abs, psnr_multi, ImagePlane, Kernel, MultiChannelImage};
use crate::ipsf::{build_problem, optimize_ipsf, IpsfConfig, IpsfSolveReport};
use crate::psf::{estimate_psf, psf_shape_report, ShapeReport};
use crate::schemas::{
    bvdr_run_from, cs_run_from, lr_run, lrme_run, ConvergenceTrace, SchemaConfig, SchemaKind, StopReason,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerChoice {
    Saf,
    Tv,
}

/// Handling of colour input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RgbPolicy {
    /// Estimate the kernels on luminance, refine every channel.
    PerChannel,
    /// Convert to luminance first and produce a gray result.
    Luminance,
}

/// Every setting of a pipeline run as one flat record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub ar_p: usize,
    pub ar_q: usize,
    pub psf_l: usize,
    pub psf_m: usize,
    /// Smoothness weight of an optional regularized AR refit.
    pub ar_reg_lambda: Option<f64>,
    pub ipsf_lambda_grid: Vec<f64>,
    pub ipsf_q: usize,
    pub ipsf_theta: f64,
    pub ipsf_eps: f64,
    pub ipsf_max_iters: usize,
    pub schema: SchemaKind,
    pub dt: f64,
    pub lambda0: Option<f64>,
    pub regularizer: RegularizerChoice,
    pub tv_beta: f64,
    pub transition_q: usize,
    pub theta: f64,
    pub eps: f64,
    /// `None` picks the schema's own cap.
    pub max_iters: Option<usize>,
    pub zero_guard: f64,
    pub update_psf: bool,
    pub denoise_stages: usize,
    pub rgb_policy: RgbPolicy,
    pub output: Option<String>,
    pub psf_out: Option<String>,
    pub ipsf_out: Option<String>,
    pub primary_out: Option<String>,
    pub trace_out: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let ipsf = IpsfConfig::default();
        let schema = SchemaConfig::for_schema(SchemaKind::Cs);
        Self {
            ar_p: 17,
            ar_q: 17,
            psf_l: 7,
            psf_m: 7,
            ar_reg_lambda: None,
            ipsf_lambda_grid: ipsf.lambda_grid,
            ipsf_q: ipsf.q,
            ipsf_theta: ipsf.theta,
            ipsf_eps: ipsf.eps,
            ipsf_max_iters: ipsf.max_iters,
            schema: SchemaKind::Cs,
            dt: schema.dt,
            lambda0: None,
            regularizer: RegularizerChoice::Saf,
            tv_beta: 1e-4,
            transition_q: schema.q,
            theta: schema.theta,
            eps: schema.eps,
            max_iters: None,
            zero_guard: schema.zero_guard,
            update_psf: schema.update_psf,
            denoise_stages: 0,
            rgb_policy: RgbPolicy::PerChannel,
            output: None,
            psf_out: None,
            ipsf_out: None,
            primary_out: None,
            trace_out: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn orders(&self) -> Orders {
        Orders {
            p: self.ar_p,
            q: self.ar_q,
            l: self.psf_l,
            m: self.psf_m,
        }
    }

    pub fn ipsf_config(&self) -> IpsfConfig {
        IpsfConfig {
            lambda_grid: self.ipsf_lambda_grid.clone(),
            q: self.ipsf_q,
            theta: self.ipsf_theta,
            eps: self.ipsf_eps,
            max_iters: self.ipsf_max_iters,
        }
    }

    pub fn ar_regularization(&self) -> Option<ArRegularization> {
        self.ar_reg_lambda.map(|lambda| ArRegularization {
            lambda,
            ..ArRegularization::default()
        })
    }

    pub fn schema_config(&self) -> SchemaConfig {
        SchemaConfig {
            schema: self.schema,
            dt: self.dt,
            lambda0: self.lambda0,
            regularizer: match self.regularizer {
                RegularizerChoice::Saf => RegularizerKind::Saf,
                RegularizerChoice::Tv => RegularizerKind::Tv { beta: self.tv_beta },
            },
            q: self.transition_q,
            theta: self.theta,
            eps: self.eps,
            max_iters: self.max_iters.unwrap_or_else(|| self.schema.default_max_iters()),
            zero_guard: self.zero_guard,
            update_psf: self.update_psf,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.orders().validate()?;
        self.ipsf_config().validate()?;
        self.schema_config().validate()?;
        if let Some(r) = self.ar_regularization() {
            r.validate()?;
        }
        Ok(())
    }
}

/// Kernels and shape of one denoising stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub psf: Kernel,
    pub psf_source: PsfSource,
    pub ipsf_prior: Kernel,
    pub shape: ShapeReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub s_hat: MultiChannelImage,
    /// `G * X` per channel, before refinement.
    pub primary: MultiChannelImage,
    pub psf: Kernel,
    pub psf_source: PsfSource,
    pub ipsf: IpsfSolveReport,
    pub ar: ArFit,
    pub patch_clipped: bool,
    pub denoise: Vec<StageSummary>,
    /// One trace per channel; empty when refinement failed.
    pub traces: Vec<ConvergenceTrace>,
    /// Per-channel PSF after LR refinement.
    pub refined_psfs: Vec<Kernel>,
    /// Set when refinement failed; `s_hat` then equals `primary`.
    pub schema_error: Option<String>,
}

fn denoise_input(x: &MultiChannelImage, stages: usize, orders: &Orders) -> Result<(MultiChannelImage, Vec<StageSummary>)> {
    let mut cur = x.clone();
    let mut summaries = Vec::with_capacity(stages);
    for _ in 0..stages {
        let stage = prior_filter(&cur.luminance(), orders)?;
        let channels = cur
            .channels()
            .iter()
            .map(|c| conv_same(c, &stage.ipsf_prior, BoundaryMode::NeumannReplicate))
            .collect::<Result<Vec<_>>>()?;
        cur = MultiChannelImage::new(channels)?;
        summaries.push(StageSummary {
            shape: psf_shape_report(&stage.psf),
            psf: stage.psf,
            psf_source: stage.psf_source,
            ipsf_prior: stage.ipsf_prior,
        });
    }
    Ok((cur, summaries))
}

type ChannelRun = (ImagePlane, ConvergenceTrace, Option<Kernel>);

fn refine_channel(x: &ImagePlane, s0: &ImagePlane, h: &Kernel, g: &Kernel, cfg: &SchemaConfig) -> Result<ChannelRun> {
    match cfg.schema {
        SchemaKind::Cs => cs_run_from(x, h, g, cfg, s0.clone()).map(|o| (o.image, o.trace, None)),
        SchemaKind::Bvdr => bvdr_run_from(x, h, g, cfg, s0.clone()).map(|o| (o.image, o.trace, None)),
        SchemaKind::Lrme => lrme_run(x, h, g, cfg).map(|o| (o.image, o.trace, None)),
        SchemaKind::Lr => lr_run(x, h, cfg).map(|o| (o.image, o.trace, Some(o.psf))),
    }
}

/// Runs denoising (optional), AR fit, PSF, inverse PSF, primary estimate
/// and the configured refinement schema.
///
/// Failures up to the primary estimate are returned as errors. A failing
/// refinement is reported in [`PipelineResult::schema_error`] so that the
/// kernels and the primary estimate stay available.
pub fn blind_deblur(x: &MultiChannelImage, cfg: &PipelineConfig) -> Result<PipelineResult> {
    cfg.validate()?;
    let orders = cfg.orders();
    let input = match cfg.rgb_policy {
        RgbPolicy::PerChannel => x.clone(),
        RgbPolicy::Luminance => MultiChannelImage::gray(x.luminance()),
    };
    let (input, denoise) = if cfg.denoise_stages > 0 {
        denoise_input(&input, cfg.denoise_stages, &orders)?
    } else {
        (input, Vec::new())
    };

    let lum = input.luminance();
    let patch = select_patch(&lum, orders.p, orders.q)?;
    let ar = estimate_ar(&patch.patch, orders.p, orders.q, cfg.ar_regularization().as_ref())?;
    let center_only = ar.model.coeffs().iter().filter(|v| **v != 0.0).count() == 1;
    let (psf, psf_source) = if ar.degenerate && center_only {
        (Kernel::delta(orders.l, orders.m)?, PsfSource::DeltaFallback)
    } else {
        match estimate_psf(&ar.model, orders.l, orders.m) {
            Ok(est) => (est.psf, PsfSource::NullSpace),
            Err(Error::Ambiguous { .. }) => (Kernel::delta(orders.l, orders.m)?, PsfSource::DeltaFallback),
            Err(e) => return Err(e),
        }
    };

    let problem = build_problem(&lum, &psf)?;
    let ipsf = optimize_ipsf(&problem, &cfg.ipsf_config())?;
    let refined = apply_kernels(&input, &psf, &ipsf.g, &cfg.schema_config())?;
    Ok(PipelineResult {
        s_hat: refined.s_hat,
        primary: refined.primary,
        psf,
        psf_source,
        ipsf,
        ar,
        patch_clipped: patch.clipped,
        denoise,
        traces: refined.traces,
        refined_psfs: refined.refined_psfs,
        schema_error: refined.schema_error,
    })
}

struct Refined {
    s_hat: MultiChannelImage,
    primary: MultiChannelImage,
    traces: Vec<ConvergenceTrace>,
    refined_psfs: Vec<Kernel>,
    schema_error: Option<String>,
}

/// Primary estimate `G * X` and schema refinement with known kernels.
fn apply_kernels(input: &MultiChannelImage, psf: &Kernel, g: &Kernel, scfg: &SchemaConfig) -> Result<Refined> {
    let primary_channels = input
        .channels()
        .iter()
        .map(|c| conv_same(c, g, BoundaryMode::NeumannReplicate))
        .collect::<Result<Vec<_>>>()?;
    let primary = MultiChannelImage::new(primary_channels)?;
    if !primary.channels().iter().all(|c| c.is_finite()) {
        return Err(Error::numerical("primary", "primary estimate is not finite"));
    }

    let runs: Vec<Result<ChannelRun>> = input
        .channels()
        .par_iter()
        .zip(primary.channels().par_iter())
        .map(|(xc, s0)| refine_channel(xc, s0, psf, g, scfg))
        .collect();

    let mut schema_error = None;
    let mut images = Vec::new();
    let mut traces = Vec::new();
    let mut refined_psfs = Vec::new();
    for (c, run) in runs.into_iter().enumerate() {
        match run {
            Ok((img, trace, k)) => {
                if trace.stop_reason == StopReason::NonFinite && schema_error.is_none() {
                    schema_error = Some(format!("channel {c}: iterate became non-finite"));
                }
                images.push(img);
                traces.push(trace);
                refined_psfs.extend(k);
            }
            Err(e) => {
                if schema_error.is_none() {
                    schema_error = Some(format!("channel {c}: {e}"));
                }
            }
        }
    }
    let s_hat = if schema_error.is_some() {
        primary.clone()
    } else {
        MultiChannelImage::new(images)?
    };
    Ok(Refined {
        s_hat,
        primary,
        traces,
        refined_psfs,
        schema_error,
    })
}

/// Deblurs a series of frames that share one blur. Kernels are estimated
/// on the first frame; the remaining frames reuse them and are processed
/// in parallel.
pub fn deblur_series(frames: &[MultiChannelImage], cfg: &PipelineConfig) -> Result<Vec<PipelineResult>> {
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let lead = blind_deblur(first, cfg)?;
    let scfg = cfg.schema_config();
    let rest: Vec<Result<PipelineResult>> = frames[1..]
        .par_iter()
        .map(|frame| {
            let input = match cfg.rgb_policy {
                RgbPolicy::PerChannel => frame.clone(),
                RgbPolicy::Luminance => MultiChannelImage::gray(frame.luminance()),
            };
            let input = lead.denoise.iter().try_fold(input, |cur, stage| {
                cur.channels()
                    .iter()
                    .map(|c| conv_same(c, &stage.ipsf_prior, BoundaryMode::NeumannReplicate))
                    .collect::<Result<Vec<_>>>()
                    .and_then(MultiChannelImage::new)
            })?;
            let refined = apply_kernels(&input, &lead.psf, &lead.ipsf.g, &scfg)?;
            Ok(PipelineResult {
                s_hat: refined.s_hat,
                primary: refined.primary,
                traces: refined.traces,
                refined_psfs: refined.refined_psfs,
                schema_error: refined.schema_error,
                ..lead.clone()
            })
        })
        .collect();
    let mut out = Vec::with_capacity(frames.len());
    out.push(lead);
    for r in rest {
        out.push(r?);
    }
    Ok(out)
}

/// Per-channel summary of a refinement run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub final_residual_msq: Option<f64>,
}

/// Scores of a restoration against its fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// PSNR of the result against the clean image; infinite when equal.
    pub psnr: f64,
    pub psnr_blurred: f64,
    /// `psnr - psnr_blurred`.
    pub improvement_db: f64,
    pub mean_abs_diff: f64,
    pub max_abs_diff: f64,
    pub kernel_ncc: Option<f64>,
    pub traces: Vec<TraceSummary>,
}

/// Compares a restored image (and optionally its PSF) with the fixture.
pub fn evaluate_image(
    fixture: &SyntheticFixture,
    restored: &MultiChannelImage,
    psf: Option<&Kernel>,
    traces: &[ConvergenceTrace],
) -> Result<EvaluationReport> {
    let clean = &fixture.clean;
    if restored.channels().len() != clean.channels().len()
        || restored.width() != clean.width()
        || restored.height() != clean.height()
    {
        return Err(Error::Dimensions(format!(
            "result {}x{}x{} does not match clean {}x{}x{}",
            restored.height(),
            restored.width(),
            restored.channels().len(),
            clean.height(),
            clean.width(),
            clean.channels().len()
        )));
    }
    let psnr = psnr_multi(clean, restored)?;
    let psnr_blurred = psnr_multi(clean, &fixture.blurred)?;
    let improvement_db = if restored == &fixture.blurred { 0.0 } else { psnr - psnr_blurred };
    let mut mad = 0.0;
    let mut max_abs_diff = 0.0f64;
    for (a, b) in clean.channels().iter().zip(restored.channels()) {
        let d = a.sub(b);
        mad += mean_abs(&d);
        max_abs_diff = d.data().iter().fold(max_abs_diff, |m, v| m.max(v.abs()));
    }
    let kernel_ncc = match psf {
        Some(k) => Some(kernel_ncc(k, &fixture.true_psf)?),
        None => None,
    };
    Ok(EvaluationReport {
        psnr,
        psnr_blurred,
        improvement_db,
        mean_abs_diff: mad / clean.channels().len() as f64,
        max_abs_diff,
        kernel_ncc,
        traces: traces
            .iter()
            .map(|t| TraceSummary {
                iterations: t.records.len(),
                stop_reason: t.stop_reason,
                final_residual_msq: t.records.last().map(|r| r.residual_msq),
            })
            .collect(),
    })
}

/// Scores a pipeline result against the fixture it was run on.
pub fn evaluate(fixture: &SyntheticFixture, result: &PipelineResult) -> Result<EvaluationReport> {
    evaluate_image(fixture, &result.s_hat, Some(&result.psf), &result.traces)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!((c.ar_p, c.ar_q, c.psf_l, c.psf_m), (17, 17, 7, 7));
        assert_eq!(c.schema, SchemaKind::Cs);
        assert_eq!(c.dt, 1.0);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn json_round_trip_is_textual_identity() {
        let mut c = PipelineConfig::default();
        c.lambda0 = Some(0.25);
        c.output = Some("out.png".into());
        let t1 = c.to_json();
        let t2 = PipelineConfig::from_json(&t1).unwrap().to_json();
        assert_eq!(t1, t2);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(PipelineConfig::from_json(r#"{"ar_p": 17, "bogus": 1}"#), Err(Error::Config(_))));
        assert!(matches!(PipelineConfig::from_json(r#"{"psf_l": 17}"#), Err(Error::Config(_))));
    }

    #[test]
    fn aerial_regime_accepted() {
        let c = PipelineConfig::from_json(
            r#"{"ar_p": 25, "ar_q": 25, "psf_l": 9, "psf_m": 9, "ar_reg_lambda": 0.001,
                "ipsf_q": 3, "ipsf_eps": 1e-8, "ipsf_theta": 2.0}"#,
        )
        .unwrap();
        assert_eq!(c.ipsf_lambda_grid[0], 0.01);
        assert_eq!(c.ar_regularization().unwrap().q, 3);
    }
}
