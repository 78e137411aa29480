//! Balanced-variations schema with the dynamic weight:
//! `S <- S + dt (X - H*S + lambda_k G*L(S))`, starting from `S_0 = G*X`.

use super::lambda::{dynamic_lambda, LambdaState};
use super::monitor::{rejects_step, Monitor, StepExtras};
use super::{SchemaConfig, SchemaOutcome};
use crate::conv::{conv_same, BoundaryMode};
use crate::error::Result;
use crate::image::{ImagePlane, Kernel};

/// Tracks when the dynamic weight stops rising. The step size follows the
/// weight with a lag of one step, so monotonicity is only enforced from
/// the step after the weight first fails to increase.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct PeakTracker {
    last: Option<f64>,
    passed_at: Option<usize>,
}

impl PeakTracker {
    pub(crate) fn hold(&mut self, k: usize, lambda: f64) -> bool {
        if let (Some(prev), None) = (self.last, self.passed_at) {
            if lambda <= prev {
                self.passed_at = Some(k);
            }
        }
        self.last = Some(lambda);
        match self.passed_at {
            None => true,
            Some(p) => k < p + 1,
        }
    }
}

pub fn bvdr_run(x: &ImagePlane, h: &Kernel, g: &Kernel, cfg: &SchemaConfig) -> Result<SchemaOutcome> {
    let s0 = conv_same(x, g, BoundaryMode::NeumannReplicate)?;
    bvdr_run_from(x, h, g, cfg, s0)
}

/// Same as [`bvdr_run`] from an explicit starting iterate. A set
/// `cfg.lambda0` replaces the dynamic weight by that constant.
pub fn bvdr_run_from(
    x: &ImagePlane,
    h: &Kernel,
    g: &Kernel,
    cfg: &SchemaConfig,
    s0: ImagePlane,
) -> Result<SchemaOutcome> {
    cfg.validate()?;
    let mode = BoundaryMode::NeumannReplicate;
    let mut s = s0;
    let mut state = LambdaState::initial(x, cfg.regularizer);
    let mut monitor = Monitor::new(cfg);
    let mut peak = PeakTracker::default();
    for k in 0.. {
        let (lambda, hold, reg_cur) = match cfg.lambda0 {
            Some(l) => (l, false, None),
            None => {
                let up = dynamic_lambda(&state, &s, x, h, g, cfg.regularizer, cfg.dt, k)?;
                if up.degenerate {
                    monitor.flag_lambda_degenerate();
                }
                state = up.state;
                (up.lambda, peak.hold(k, up.lambda), Some(up.reg_cur))
            }
        };
        let blurred = conv_same(&s, h, mode)?;
        let mut next = s.clone();
        if lambda != 0.0 {
            let l = reg_cur.unwrap_or_else(|| cfg.regularizer.apply(&s));
            let reg = conv_same(&l, g, mode)?;
            for (n, r) in next.data_mut().iter_mut().zip(reg.data()) {
                *n += cfg.dt * lambda * r;
            }
        }
        for i in 0..next.len() {
            next.data_mut()[i] += cfg.dt * (x.data()[i] - blurred.data()[i]);
        }
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
