//! Stopping rules shared by the schemas.

use super::{ConvergenceTrace, SchemaConfig, StopReason, TraceRecord};
use crate::image::{mean_sq, ImagePlane};

/// Decision for the newest step.
///
/// Order of precedence: a non-finite iterate, the step-size threshold,
/// growth of the step size once monotonicity is enforced, a violated
/// relaxation lower bound, and finally the iteration cap.
#[allow(clippy::too_many_arguments)]
pub fn stop_decision(
    r_prev: Option<f64>,
    r_k: f64,
    finite: bool,
    monotonicity_active: bool,
    dt_bound_violated: bool,
    cap_reached: bool,
    eps: f64,
    theta: f64,
) -> Option<StopReason> {
    if !finite || !r_k.is_finite() {
        return Some(StopReason::NonFinite);
    }
    if r_k < eps {
        return Some(StopReason::EpsReached);
    }
    if monotonicity_active {
        if let Some(rp) = r_prev {
            if r_k * theta > rp {
                return Some(StopReason::MonotonicityViolated);
            }
        }
    }
    if dt_bound_violated {
        return Some(StopReason::DtBoundViolated);
    }
    if cap_reached {
        return Some(StopReason::IterCap);
    }
    None
}

/// Extra per-step quantities a schema may attach to its record.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepExtras {
    pub lambda: Option<f64>,
    pub dt_lower: Option<f64>,
    pub dt_upper_metric: Option<f64>,
    /// Keep the monotonicity check suspended for this step even past `q`.
    pub hold_transition: bool,
}

/// Accumulates trace records and applies [`stop_decision`].
#[derive(Debug, Clone)]
pub struct Monitor {
    cfg: SchemaConfig,
    records: Vec<TraceRecord>,
    transition_end: Option<usize>,
    lambda_degenerate: bool,
}

impl Monitor {
    pub fn new(cfg: &SchemaConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            records: Vec::new(),
            transition_end: None,
            lambda_degenerate: false,
        }
    }

    pub fn flag_lambda_degenerate(&mut self) {
        self.lambda_degenerate = true;
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    /// Records the step `s_cur -> s_next` and returns a stop reason, if any.
    pub fn observe(&mut self, s_next: &ImagePlane, s_cur: &ImagePlane, extras: StepExtras) -> Option<StopReason> {
        let k = self.records.len();
        let finite = s_next.is_finite();
        let r_k = if finite { mean_sq(&s_next.sub(s_cur)) } else { f64::NAN };
        let r_prev = self.records.last().map(|r| r.residual_msq);
        let theta = match r_prev {
            Some(rp) if r_k > 0.0 && r_k.is_finite() => Some(rp / r_k),
            _ => None,
        };
        let active = k >= self.cfg.q.max(1) && !extras.hold_transition;
        if active && self.transition_end.is_none() {
            self.transition_end = Some(k);
        }
        let dt_violated = matches!(extras.dt_lower, Some(lb) if self.cfg.dt < lb);
        self.records.push(TraceRecord {
            k,
            residual_msq: r_k,
            lambda: extras.lambda,
            theta,
            dt_lower: extras.dt_lower,
            dt_upper_metric: extras.dt_upper_metric,
        });
        stop_decision(
            r_prev,
            r_k,
            finite,
            active,
            dt_violated,
            k + 1 >= self.cfg.max_iters,
            self.cfg.eps,
            self.cfg.theta,
        )
    }

    pub fn finish(self, stop_reason: StopReason) -> ConvergenceTrace {
        ConvergenceTrace {
            records: self.records,
            stop_reason,
            transition_end: self.transition_end,
            lambda_degenerate: self.lambda_degenerate,
        }
    }
}

/// True when the stop reason rejects the newest step, so the run should
/// return the iterate it started from.
pub fn rejects_step(reason: StopReason) -> bool {
    matches!(
        reason,
        StopReason::NonFinite | StopReason::MonotonicityViolated | StopReason::DtBoundViolated
    )
}
