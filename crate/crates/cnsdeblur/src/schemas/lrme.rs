//! Maximum-entropy additive schema:
//! `S <- S + dt (H*X - (H*H)*S + lambda L(S))`.

use super::bvdr::PeakTracker;
use super::lambda::{dynamic_lambda, LambdaState};
use super::monitor::{rejects_step, Monitor, StepExtras};
use super::{SchemaConfig, SchemaOutcome};
use crate::conv::{conv_same, kernel_self_convolution, BoundaryMode, RegularizerKind};
use crate::error::Result;
use crate::image::{ImagePlane, Kernel};

pub fn lrme_step(
    s: &ImagePlane,
    x: &ImagePlane,
    h: &Kernel,
    lambda: f64,
    reg: RegularizerKind,
    dt: f64,
) -> Result<ImagePlane> {
    let mode = BoundaryMode::NeumannReplicate;
    let hx = conv_same(x, h, mode)?;
    let hhs = conv_same(s, &kernel_self_convolution(h), mode)?;
    let l = if lambda != 0.0 { Some(reg.apply(s)) } else { None };
    let mut out = s.clone();
    for i in 0..out.len() {
        let r = l.as_ref().map_or(0.0, |l| lambda * l.data()[i]);
        out.data_mut()[i] += dt * (hx.data()[i] - hhs.data()[i] + r);
    }
    Ok(out)
}

/// Runs the schema from `S_0 = G*X`. The weight is `cfg.lambda0` when set,
/// otherwise the dynamic rule (which needs the inverse kernel `g`).
pub fn lrme_run(x: &ImagePlane, h: &Kernel, g: &Kernel, cfg: &SchemaConfig) -> Result<SchemaOutcome> {
    cfg.validate()?;
    let mut s = conv_same(x, g, BoundaryMode::NeumannReplicate)?;
    let mut state = LambdaState::initial(x, cfg.regularizer);
    let mut monitor = Monitor::new(cfg);
    let mut peak = PeakTracker::default();
    for k in 0.. {
        let (lambda, hold) = match cfg.lambda0 {
            Some(l) => (l, false),
            None => {
                let up = dynamic_lambda(&state, &s, x, h, g, cfg.regularizer, cfg.dt, k)?;
                if up.degenerate {
                    monitor.flag_lambda_degenerate();
                }
                state = up.state;
                (up.lambda, peak.hold(k, up.lambda))
            }
        };
        let next = lrme_step(&s, x, h, lambda, cfg.regularizer, cfg.dt)?;
        let extras = StepExtras {
            lambda: Some(lambda),
            hold_transition: hold,
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
    unreachable!("the iteration cap always stops the loop")
}
