//! Dynamic regularization weight for the additive schemas.
//!
//! With `<.>` the mean absolute value and `D_k = dt <|G * L(S_k)|>`:
//!
//! ```text
//! lambda_0 = <|H*(S_0 - X)|> / D_0 / (exp(<|G*(L(S_0) - L(X))|> / D_0) - 1)
//! lambda_k = (lambda_{k-1} + <|H*(S_k - S_{k-1})|> / D_k) * exp(-<|G*(L(S_k) - L(S_{k-1}))|> / D_k)
//! ```
//!
//! where the recursion starts from `S_{-1} = X`.

use crate::conv::{conv_same, BoundaryMode, RegularizerKind};
use crate::error::Result;
use crate::image::{mean_abs, ImagePlane, Kernel};

/// Upper clamp of the weight.
pub const LAMBDA_CAP: f64 = 1e3;
/// Denominators below this make the weight undefined.
pub const LAMBDA_DENOM_FLOOR: f64 = 1e-14;

/// Previous iterate and its regularizer image.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaState {
    pub lambda_prev: f64,
    pub s_prev: ImagePlane,
    pub reg_prev: ImagePlane,
}

impl LambdaState {
    /// State before the first step: the previous iterate is the observation.
    pub fn initial(x: &ImagePlane, reg: RegularizerKind) -> Self {
        Self {
            lambda_prev: 0.0,
            s_prev: x.clone(),
            reg_prev: reg.apply(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaUpdate {
    pub lambda: f64,
    pub state: LambdaState,
    /// Regularizer image of the current iterate, reused by the caller.
    pub reg_cur: ImagePlane,
    /// The denominator vanished or the value was clamped.
    pub degenerate: bool,
}

/// Evaluates the weight for step `k` with the current iterate `s_cur`.
#[allow(clippy::too_many_arguments)]
pub fn dynamic_lambda(
    state: &LambdaState,
    s_cur: &ImagePlane,
    _x: &ImagePlane,
    h: &Kernel,
    g: &Kernel,
    reg: RegularizerKind,
    dt: f64,
    k: usize,
) -> Result<LambdaUpdate> {
    let mode = BoundaryMode::NeumannReplicate;
    let reg_cur = reg.apply(s_cur);
    let denom = dt * mean_abs(&conv_same(&reg_cur, g, mode)?);
    let next_state = LambdaState {
        lambda_prev: 0.0,
        s_prev: s_cur.clone(),
        reg_prev: reg_cur.clone(),
    };
    if !(denom >= LAMBDA_DENOM_FLOOR * dt) || !denom.is_finite() {
        return Ok(LambdaUpdate {
            lambda: 0.0,
            state: next_state,
            reg_cur,
            degenerate: true,
        });
    }
    let data_term = mean_abs(&conv_same(&s_cur.sub(&state.s_prev), h, mode)?) / denom;
    let reg_term = mean_abs(&conv_same(&reg_cur.sub(&state.reg_prev), g, mode)?) / denom;
    let raw = if k == 0 {
        data_term / reg_term.exp_m1()
    } else {
        (state.lambda_prev + data_term) * (-reg_term).exp()
    };
    let mut degenerate = false;
    let lambda = if raw.is_nan() {
        degenerate = true;
        0.0
    } else if raw > LAMBDA_CAP {
        degenerate = true;
        LAMBDA_CAP
    } else if raw < 0.0 {
        degenerate = true;
        0.0
    } else {
        raw
    };
    Ok(LambdaUpdate {
        lambda,
        state: LambdaState {
            lambda_prev: lambda,
            ..next_state
        },
        reg_cur,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wavy(w: usize, h: usize, phase: f64) -> ImagePlane {
        ImagePlane::from_fn(w, h, |r, c| 0.5 + 0.3 * ((r as f64 * 0.4 + phase).sin() * (c as f64 * 0.3).cos()))
    }

    #[test]
    fn stalled_iterate_keeps_lambda() {
        let x = wavy(16, 16, 0.0);
        let s = wavy(16, 16, 0.3);
        let h = Kernel::from_fn(3, 3, |_, _| 1.0 / 9.0).unwrap();
        let g = Kernel::delta(3, 3).unwrap();
        let reg = RegularizerKind::Saf;
        let state = LambdaState {
            lambda_prev: 0.25,
            s_prev: s.clone(),
            reg_prev: reg.apply(&s),
        };
        let up = dynamic_lambda(&state, &s, &x, &h, &g, reg, 0.1, 3).unwrap();
        assert_eq!(up.lambda, 0.25);
        assert!(!up.degenerate);
    }

    #[test]
    fn flat_iterate_is_degenerate() {
        let x = wavy(8, 8, 0.0);
        let s = ImagePlane::filled(8, 8, 0.5);
        let k = Kernel::delta(3, 3).unwrap();
        let up = dynamic_lambda(&LambdaState::initial(&x, RegularizerKind::Saf), &s, &x, &k, &k, RegularizerKind::Saf, 0.1, 0).unwrap();
        assert_eq!(up.lambda, 0.0);
        assert!(up.degenerate);
    }
}
