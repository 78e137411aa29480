//! Inverse PSF on the kernel support by regularized least squares.
//!
//! The observed image is blurred once more with the estimated PSF, `Y = H*X`,
//! and the inverse kernel `g` is fitted so that `g` applied to `Y` reproduces
//! `X`. The surface-area regularizer enters through its linearization
//! `dR(g)` and the fixed-point iteration `g <- (R_YY - lambda dR(g))^{-1} r_YX`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ar::{msq_diff, window_gram};
use crate::conv::{self, BoundaryMode};
use crate::error::{Error, Result};
use crate::image::{ImagePlane, Kernel};
use crate::linalg::pinv_solve_symmetric;

/// Relative singular-value cutoff of the least-squares pseudo-inverse.
pub const LS_PINV_CUTOFF: f64 = 1e-10;

/// Difference operators of the image module as matrices acting on a
/// row-major `rows x cols` grid.
#[derive(Debug, Clone)]
pub struct GridOperators {
    pub rows: usize,
    pub cols: usize,
    pub dx: DMatrix<f64>,
    pub dy: DMatrix<f64>,
    pub dxx: DMatrix<f64>,
    pub dyy: DMatrix<f64>,
    pub dxy: DMatrix<f64>,
}

impl GridOperators {
    pub fn new(rows: usize, cols: usize) -> Self {
        let n = rows * cols;
        let apply = |f: &dyn Fn(&ImagePlane) -> ImagePlane| {
            let mut m = DMatrix::zeros(n, n);
            for j in 0..n {
                let mut basis = ImagePlane::zeros(cols, rows);
                basis.data_mut()[j] = 1.0;
                let out = f(&basis);
                for (i, v) in out.data().iter().enumerate() {
                    m[(i, j)] = *v;
                }
            }
            m
        };
        Self {
            rows,
            cols,
            dx: apply(&conv::grad_x),
            dy: apply(&conv::grad_y),
            dxx: apply(&|p| conv::second_derivs(p).0),
            dyy: apply(&|p| conv::second_derivs(p).1),
            dxy: apply(&|p| conv::second_derivs(p).2),
        }
    }

    /// Linearized surface-area operator at `g`,
    /// `diag(w) (diag(1+gy^2) Dxx + diag(1+gx^2) Dyy - 2 diag(gx gy) Dxy)`
    /// with `w = (1 + gx^2 + gy^2)^{-3/2}`.
    pub fn delta_r(&self, g: &[f64]) -> DMatrix<f64> {
        let gv = DVector::from_column_slice(g);
        let gx = &self.dx * &gv;
        let gy = &self.dy * &gv;
        let n = g.len();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            let (a, b) = (gx[i], gy[i]);
            let w = (1.0 + a * a + b * b).powf(-1.5);
            let (cxx, cyy, cxy) = (1.0 + b * b, 1.0 + a * a, -2.0 * a * b);
            for j in 0..n {
                out[(i, j)] = w * (cxx * self.dxx[(i, j)] + cyy * self.dyy[(i, j)] + cxy * self.dxy[(i, j)]);
            }
        }
        out
    }
}

/// Linearized surface-area operator on the grid of `g`.
pub fn delta_r(g: &Kernel) -> DMatrix<f64> {
    GridOperators::new(g.rows(), g.cols()).delta_r(g.data())
}

/// Normal equations of the inverse-filter fit.
#[derive(Debug, Clone)]
pub struct IpsfProblem {
    pub y: ImagePlane,
    pub x: ImagePlane,
    pub l: usize,
    pub m: usize,
    pub r_yy: DMatrix<f64>,
    pub r_yx: DVector<f64>,
}

/// Builds `Y = H*X` (replicate boundary) and the Gram sums over every
/// window lying fully inside the image.
pub fn build_problem(x: &ImagePlane, h: &Kernel) -> Result<IpsfProblem> {
    let (l, m) = (h.rows(), h.cols());
    if x.height() < l || x.width() < m {
        return Err(Error::Dimensions(format!(
            "image {}x{} too small for {l}x{m} windows",
            x.height(),
            x.width()
        )));
    }
    let y = conv::conv_same(x, h, BoundaryMode::NeumannReplicate)?;
    let r_yy = window_gram(&y, l, m);
    let (cl, cm) = (l / 2, m / 2);
    let (sn, sm) = (x.height() - l + 1, x.width() - m + 1);
    let mut r_yx = DVector::zeros(l * m);
    for a in 0..l {
        for b in 0..m {
            let mut s = 0.0;
            for i in 0..sn {
                let yr = &y.row(i + a)[b..b + sm];
                let xr = &x.row(i + cl)[cm..cm + sm];
                s += yr.iter().zip(xr).map(|(p, q)| p * q).sum::<f64>();
            }
            r_yx[a * m + b] = s;
        }
    }
    Ok(IpsfProblem {
        y,
        x: x.clone(),
        l,
        m,
        r_yy,
        r_yx,
    })
}

/// Minimum-norm least-squares inverse kernel.
pub fn solve_ls(p: &IpsfProblem) -> Kernel {
    let g = pinv_solve_symmetric(&p.r_yy, &p.r_yx, LS_PINV_CUTOFF);
    Kernel::new(p.l, p.m, g.iter().copied().collect()).expect("finite pseudo-inverse solution")
}

/// Settings of the regularized inverse-filter iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IpsfConfig {
    /// Candidates tried in order; the first that passes the early
    /// convergence test is used.
    pub lambda_grid: Vec<f64>,
    pub q: usize,
    pub theta: f64,
    pub eps: f64,
    pub max_iters: usize,
}

/// Nine log-spaced values from 1e-2 down to 1e-4.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..9).map(|i| 10f64.powf(-2.0 - 0.25 * i as f64)).collect()
}

impl Default for IpsfConfig {
    fn default() -> Self {
        Self {
            lambda_grid: default_lambda_grid(),
            q: 3,
            theta: 2.0,
            eps: 1e-8,
            max_iters: 10,
        }
    }
}

impl IpsfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::Config("lambda grid entries must be finite and >= 0".into()));
        }
        if !(self.theta >= 1.0) || !(self.eps > 0.0) || self.max_iters == 0 {
            return Err(Error::Config("ipsf needs theta >= 1, eps > 0, max_iters >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpsfSolveReport {
    pub g: Kernel,
    pub g_ls: Kernel,
    pub lambda_used: f64,
    pub iterations: usize,
    /// Mean squared change of the kernel at each iteration.
    pub residual_trace: Vec<f64>,
    /// Mean squared change of the starting pair `g0 - 0`, the reference for
    /// the first early-window comparison.
    pub initial_change: f64,
    pub converged: bool,
    pub fallback_ls: bool,
}

enum LambdaOutcome {
    Accepted(Vec<f64>, Vec<f64>, bool),
    Rejected,
}

fn run_lambda(p: &IpsfProblem, ops: &GridOperators, g0: &[f64], lambda: f64, cfg: &IpsfConfig) -> LambdaOutcome {
    let mut prev = vec![0.0; g0.len()];
    let mut cur = g0.to_vec();
    let mut trace = Vec::new();
    for k in 0..cfg.max_iters {
        let a = if lambda == 0.0 {
            p.r_yy.clone()
        } else {
            &p.r_yy - ops.delta_r(&cur) * lambda
        };
        let Some(sol) = a.lu().solve(&p.r_yx) else {
            return LambdaOutcome::Rejected;
        };
        let next: Vec<f64> = sol.iter().copied().collect();
        if next.iter().any(|v| !v.is_finite()) {
            return LambdaOutcome::Rejected;
        }
        let rk = msq_diff(&next, &cur);
        let rprev = msq_diff(&cur, &prev);
        if k < cfg.q && rk * cfg.theta > rprev {
            return LambdaOutcome::Rejected;
        }
        trace.push(rk);
        prev = std::mem::replace(&mut cur, next);
        if rk < cfg.eps {
            return LambdaOutcome::Accepted(cur, trace, true);
        }
    }
    LambdaOutcome::Accepted(cur, trace, false)
}

/// Searches the lambda grid and iterates the regularized normal equations.
/// Falls back to the least-squares kernel when no candidate qualifies.
pub fn optimize_ipsf(p: &IpsfProblem, cfg: &IpsfConfig) -> Result<IpsfSolveReport> {
    cfg.validate()?;
    let g_ls = solve_ls(p);
    let ops = GridOperators::new(p.l, p.m);
    let initial_change = g_ls.data().iter().map(|v| v * v).sum::<f64>() / g_ls.data().len() as f64;
    for &lambda in &cfg.lambda_grid {
        if let LambdaOutcome::Accepted(g, trace, converged) = run_lambda(p, &ops, g_ls.data(), lambda, cfg) {
            return Ok(IpsfSolveReport {
                g: Kernel::new(p.l, p.m, g)?,
                g_ls,
                lambda_used: lambda,
                iterations: trace.len(),
                residual_trace: trace,
                initial_change,
                converged,
                fallback_ls: false,
            });
        }
    }
    Ok(IpsfSolveReport {
        g: g_ls.clone(),
        g_ls,
        lambda_used: 0.0,
        iterations: 0,
        residual_trace: Vec::new(),
        initial_change,
        converged: false,
        fallback_ls: true,
    })
}
