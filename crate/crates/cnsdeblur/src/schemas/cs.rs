//! Curved-space schema. Each pixel carries its own weight
//! `Lambda = (X - H*S)^2 / (2 sigma(S))`, with `sigma` the metric
//! determinant of the image surface, and the update is
//! `S <- S + dt (X - H*S + G*(Lambda . L(S)))` with `L` the surface-area
//! operator.

use super::monitor::{rejects_step, Monitor, StepExtras};
use super::{SchemaConfig, SchemaOutcome};
use crate::conv::{conv_same, metric_det, saf_operator, BoundaryMode};
use crate::error::Result;
use crate::image::{mean_abs, ImagePlane, Kernel};

/// Pointwise weight field; nonnegative everywhere.
pub fn cs_lambda_field(s: &ImagePlane, x: &ImagePlane, h: &Kernel) -> Result<ImagePlane> {
    let hs = conv_same(s, h, BoundaryMode::NeumannReplicate)?;
    let sigma = metric_det(s);
    let data = (0..s.len())
        .map(|i| {
            let r = x.data()[i] - hs.data()[i];
            r * r / (2.0 * sigma.data()[i])
        })
        .collect();
    Ok(ImagePlane::from_raw(s.width(), s.height(), data))
}

pub fn cs_run(x: &ImagePlane, h: &Kernel, g: &Kernel, cfg: &SchemaConfig) -> Result<SchemaOutcome> {
    let s0 = conv_same(x, g, BoundaryMode::NeumannReplicate)?;
    cs_run_from(x, h, g, cfg, s0)
}

pub fn cs_run_from(
    x: &ImagePlane,
    h: &Kernel,
    g: &Kernel,
    cfg: &SchemaConfig,
    s0: ImagePlane,
) -> Result<SchemaOutcome> {
    cfg.validate()?;
    let mode = BoundaryMode::NeumannReplicate;
    let weight = cfg.lambda0.unwrap_or(1.0);
    let mut s = s0;
    let mut monitor = Monitor::new(cfg);
    loop {
        let hs = conv_same(&s, h, mode)?;
        let curv = saf_operator(&s);
        let sigma = metric_det(&s);
        let mut forced = ImagePlane::zeros(s.width(), s.height());
        let mut resid = ImagePlane::zeros(s.width(), s.height());
        for i in 0..s.len() {
            let r = x.data()[i] - hs.data()[i];
            resid.data_mut()[i] = r;
            forced.data_mut()[i] = r * r / (2.0 * sigma.data()[i]) * curv.data()[i];
        }
        let smoothed = conv_same(&forced, g, mode)?;
        let mut next = s.clone();
        for i in 0..next.len() {
            next.data_mut()[i] += cfg.dt * (resid.data()[i] + weight * smoothed.data()[i]);
        }
        let step = next.sub(&s);
        let curv_norm = mean_abs(&curv);
        // the bound stems from the curvature term and lapses without it
        let dt_lower = (weight > 0.0 && curv_norm > 0.0).then(|| mean_abs(&step) / curv_norm);
        let max_step = step.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let extras = StepExtras {
            dt_lower: dt_lower.filter(|v| v.is_finite()),
            dt_upper_metric: Some(cfg.dt * max_step).filter(|v| v.is_finite()),
            ..Default::default()
        };
        if let Some(reason) = monitor.observe(&next, &s, extras) {
            if !rejects_step(reason) {
                s = next;
            }
            return Ok(SchemaOutcome {
                image: s,
                trace: monitor.finish(reason),
            });
        }
        s = next;
    }
}

/// Reporting-only estimate of the optimum from the last step,
/// `G*(X - sqrt(2 sigma(S) / L(S) * dS / dt))`, with negative or undefined
/// radicands set to zero.
pub fn cs_opt_diagnostic(
    x: &ImagePlane,
    s_cur: &ImagePlane,
    s_next: &ImagePlane,
    g: &Kernel,
    dt: f64,
) -> Result<ImagePlane> {
    let sigma = metric_det(s_cur);
    let curv = saf_operator(s_cur);
    let data = (0..x.len())
        .map(|i| {
            let ds = s_next.data()[i] - s_cur.data()[i];
            let l = curv.data()[i];
            let v = if l != 0.0 { 2.0 * sigma.data()[i] / l * ds / dt } else { 0.0 };
            let root = if v.is_finite() && v > 0.0 { v.sqrt() } else { 0.0 };
            x.data()[i] - root
        })
        .collect();
    conv_same(&ImagePlane::from_raw(x.width(), x.height(), data), g, BoundaryMode::NeumannReplicate)
}
