//! Two-dimensional autoregressive model of an image patch.
//!
//! The model is a P x Q stencil `a` whose central element is pinned to one;
//! it is fitted so that correlating every P x Q window of the patch with `a`
//! gives as little energy as possible.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::io;
use crate::linalg;

/// Fitted AR stencil. Element `(p/2, q/2)` is exactly one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    p: usize,
    q: usize,
    coeffs: Vec<f64>,
}

impl ArModel {
    pub fn new(p: usize, q: usize, coeffs: Vec<f64>) -> Result<Self> {
        check_orders(p, q)?;
        if coeffs.len() != p * q {
            return Err(Error::Dimensions(format!(
                "AR grid {p}x{q} needs {} coefficients, got {}",
                p * q,
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("ar_model", "non-finite coefficient"));
        }
        let c = coeffs[(p / 2) * q + q / 2];
        if c == 0.0 {
            return Err(Error::Config("central AR coefficient must be nonzero".into()));
        }
        let coeffs = coeffs.iter().map(|v| v / c).collect();
        let mut model = Self { p, q, coeffs };
        let ci = model.center_index();
        model.coeffs[ci] = 1.0;
        Ok(model)
    }

    /// Stencil with only the pinned element.
    pub fn center_only(p: usize, q: usize) -> Result<Self> {
        check_orders(p, q)?;
        let mut coeffs = vec![0.0; p * q];
        coeffs[(p / 2) * q + q / 2] = 1.0;
        Ok(Self { p, q, coeffs })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.coeffs[i * self.q + k]
    }

    /// Row-major index of the pinned element.
    pub fn center_index(&self) -> usize {
        (self.p / 2) * self.q + self.q / 2
    }

    /// Same stencil with every coefficient multiplied by `c` (the pinned
    /// element then equals `c`); used to probe scale invariance downstream.
    pub fn scaled_coeffs(&self, c: f64) -> Vec<f64> {
        self.coeffs.iter().map(|v| v * c).collect()
    }

    pub fn to_text(&self) -> String {
        io::grid_to_text(self.p, self.q, &self.coeffs)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (p, q, data) = io::grid_from_text(text)?;
        Self::new(p, q, data)
    }
}

fn check_orders(p: usize, q: usize) -> Result<()> {
    if p == 0 || q == 0 || p % 2 == 0 || q % 2 == 0 {
        return Err(Error::Dimensions(format!(
            "AR orders must be odd and positive, got {p}x{q}"
        )));
    }
    Ok(())
}

/// Patch chosen for fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSelection {
    pub patch: ImagePlane,
    /// Set when the image was smaller than the requested side.
    pub clipped: bool,
}

/// Requested patch side for orders `p x q`.
pub fn patch_side(p: usize, q: usize) -> usize {
    (2 * p * q).max(4 * p.max(q))
}

/// Centered square patch of side `max(2PQ, 4 max(P, Q))`, clipped to the image.
pub fn select_patch(img: &ImagePlane, p: usize, q: usize) -> Result<PatchSelection> {
    check_orders(p, q)?;
    if img.height() < p || img.width() < q {
        return Err(Error::Dimensions(format!(
            "image {}x{} smaller than AR order {p}x{q}",
            img.height(),
            img.width()
        )));
    }
    let side = patch_side(p, q);
    let h = side.min(img.height());
    let w = side.min(img.width());
    let clipped = h < side || w < side;
    let r0 = (img.height() - h) / 2;
    let c0 = (img.width() - w) / 2;
    Ok(PatchSelection {
        patch: img.crop(r0, c0, h, w)?,
        clipped,
    })
}

/// Explicit extended data matrix: one row per window shift, one column per
/// stencil element. Only practical for small images; the fitter works on
/// its Gram matrix directly.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedDataMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ExtendedDataMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

pub fn build_extended(img: &ImagePlane, p: usize, q: usize) -> Result<ExtendedDataMatrix> {
    check_orders(p, q)?;
    if p > img.height() || q > img.width() {
        return Err(Error::Dimensions(format!(
            "AR order {p}x{q} exceeds patch {}x{}",
            img.height(),
            img.width()
        )));
    }
    let sn = img.height() - p + 1;
    let sm = img.width() - q + 1;
    let mut data = Vec::with_capacity(sn * sm * p * q);
    for n in 0..sn {
        for m in 0..sm {
            for i in 0..p {
                for k in 0..q {
                    data.push(img.get(n + i, m + k));
                }
            }
        }
    }
    Ok(ExtendedDataMatrix {
        rows: sn * sm,
        cols: p * q,
        data,
    })
}

/// Gram matrix of all `p x q` windows of `img`, `sum_w vec(w) vec(w)^T`.
///
/// Entry `(a, b)` depends on the lag between the two stencil positions, so
/// each lag's product image is summed once through a 2D prefix table and
/// every entry becomes a rectangle lookup.
pub fn window_gram(img: &ImagePlane, p: usize, q: usize) -> DMatrix<f64> {
    let (h, w) = (img.height(), img.width());
    assert!(p <= h && q <= w, "window larger than image");
    let (sn, sm) = (h - p + 1, w - q + 1);
    // Lags with di >= 0; for di == 0 only dk >= 0 is needed.
    let lags: Vec<(usize, isize)> = (0..p)
        .flat_map(|di| {
            let lo = if di == 0 { 0 } else { -(q as isize - 1) };
            (lo..q as isize).map(move |dk| (di, dk))
        })
        .collect();
    let entries: Vec<Vec<(usize, usize, f64)>> = lags
        .par_iter()
        .map(|&(di, dk)| {
            // t[(u+1)*(w+1) + v+1] sums x(r,c) x(r+di, c+dk) over r <= u, c <= v
            let mut t = vec![0.0; (h + 1) * (w + 1)];
            for u in 0..h {
                let mut run = 0.0;
                for v in 0..w {
                    let vv = v as isize + dk;
                    if u + di < h && vv >= 0 && (vv as usize) < w {
                        run += img.get(u, v) * img.get(u + di, vv as usize);
                    }
                    t[(u + 1) * (w + 1) + v + 1] = t[u * (w + 1) + v + 1] + run;
                }
            }
            let mut out = Vec::new();
            for ia in 0..p - di {
                for ka in 0..q {
                    let kb = ka as isize + dk;
                    if kb < 0 || kb >= q as isize {
                        continue;
                    }
                    let a = ia * q + ka;
                    let b = (ia + di) * q + kb as usize;
                    // window origins span [0, sn) x [0, sm); the first factor sits at (n0+ia, m0+ka)
                    let (r0, r1, c0, c1) = (ia, ia + sn, ka, ka + sm);
                    let s = t[r1 * (w + 1) + c1] - t[r0 * (w + 1) + c1] - t[r1 * (w + 1) + c0]
                        + t[r0 * (w + 1) + c0];
                    out.push((a, b, s));
                }
            }
            out
        })
        .collect();
    let n = p * q;
    let mut g = DMatrix::<f64>::zeros(n, n);
    for (a, b, s) in entries.into_iter().flatten() {
        g[(a, b)] = s;
        g[(b, a)] = s;
    }
    g
}

/// Optional smoothness regularization of the AR fit, iterated like the
/// inverse-filter solver on the P x Q coefficient grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArRegularization {
    pub lambda: f64,
    pub q: usize,
    pub theta: f64,
    pub eps: f64,
    pub max_iters: usize,
}

impl Default for ArRegularization {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            q: 3,
            theta: 2.0,
            eps: 1e-8,
            max_iters: 10,
        }
    }
}

impl ArRegularization {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("AR lambda must be finite and >= 0".into()));
        }
        if !(self.theta >= 1.0) || !(self.eps > 0.0) || self.max_iters == 0 {
            return Err(Error::Config("AR regularization needs theta >= 1, eps > 0, max_iters >= 1".into()));
        }
        Ok(())
    }
}

/// Result of an AR fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ArFit {
    pub model: ArModel,
    /// The normal system was singular or ill-conditioned.
    pub degenerate: bool,
    /// Regularized iteration was requested but failed its convergence check.
    pub regularization_rejected: bool,
    /// Mean squared output of the stencil over all windows.
    pub residual_msq: f64,
}

/// Condition number above which the pseudo-inverse replaces the direct solve.
pub const AR_CONDITION_LIMIT: f64 = 1e12;

/// Fits the AR stencil with pinned center to every window of `img`.
pub fn estimate_ar(
    img: &ImagePlane,
    p: usize,
    q: usize,
    reg: Option<&ArRegularization>,
) -> Result<ArFit> {
    check_orders(p, q)?;
    if p > img.height() || q > img.width() {
        return Err(Error::Dimensions(format!(
            "AR order {p}x{q} exceeds patch {}x{}",
            img.height(),
            img.width()
        )));
    }
    let windows = (img.height() - p + 1) * (img.width() - q + 1);
    if windows < p * q {
        return Err(Error::Dimensions(format!(
            "{windows} windows cannot determine {} coefficients",
            p * q
        )));
    }
    let first = img.data()[0];
    if img.data().iter().all(|&v| v == first) {
        let model = ArModel::center_only(p, q)?;
        let residual_msq = first * first;
        return Ok(ArFit {
            model,
            degenerate: true,
            regularization_rejected: false,
            residual_msq,
        });
    }

    let g = window_gram(img, p, q);
    let n = p * q;
    let c = (p / 2) * q + q / 2;
    let rest: Vec<usize> = (0..n).filter(|&i| i != c).collect();
    let r_mat = DMatrix::from_fn(n - 1, n - 1, |i, j| g[(rest[i], rest[j])]);
    let rhs = DVector::from_fn(n - 1, |i, _| -g[(rest[i], c)]);

    let (sol, degenerate) = linalg::solve_spd_or_pinv(&r_mat, &rhs, AR_CONDITION_LIMIT);
    let mut coeffs = vec![0.0; n];
    coeffs[c] = 1.0;
    for (i, &idx) in rest.iter().enumerate() {
        coeffs[idx] = sol[i];
    }

    let mut regularization_rejected = false;
    if let Some(reg) = reg {
        reg.validate()?;
        match regularized_refit(&r_mat, &rhs, &rest, c, p, q, &coeffs, reg) {
            Some(c2) => coeffs = c2,
            None => regularization_rejected = true,
        }
    }

    let model = ArModel { p, q, coeffs };
    let residual_msq = stencil_energy(&g, model.coeffs()) / windows as f64;
    Ok(ArFit {
        model,
        degenerate,
        regularization_rejected,
        residual_msq,
    })
}

/// `a^T G a`, the total squared stencil output.
fn stencil_energy(g: &DMatrix<f64>, a: &[f64]) -> f64 {
    let v = DVector::from_column_slice(a);
    (v.transpose() * g * &v)[(0, 0)].max(0.0)
}

#[allow(clippy::too_many_arguments)]
fn regularized_refit(
    r_mat: &DMatrix<f64>,
    rhs: &DVector<f64>,
    rest: &[usize],
    c: usize,
    p: usize,
    q: usize,
    start: &[f64],
    reg: &ArRegularization,
) -> Option<Vec<f64>> {
    let ops = crate::ipsf::GridOperators::new(p, q);
    let n = p * q;
    let mut cur = start.to_vec();
    let mut prev = vec![0.0; n];
    for k in 0..reg.max_iters {
        let dr = ops.delta_r(&cur);
        let a = DMatrix::from_fn(n - 1, n - 1, |i, j| r_mat[(i, j)] - reg.lambda * dr[(rest[i], rest[j])]);
        let b = DVector::from_fn(n - 1, |i, _| rhs[i] + reg.lambda * dr[(rest[i], c)]);
        let sol = a.lu().solve(&b)?;
        let mut next = vec![0.0; n];
        next[c] = 1.0;
        for (i, &idx) in rest.iter().enumerate() {
            next[idx] = sol[i];
        }
        if next.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let rk = msq_diff(&next, &cur);
        let rprev = msq_diff(&cur, &prev);
        if k < reg.q && rk * reg.theta > rprev {
            return None;
        }
        prev = std::mem::replace(&mut cur, next);
        if rk < reg.eps {
            break;
        }
    }
    Some(cur)
}

pub(crate) fn msq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Mean squared stencil output over all windows of `img`.
pub fn residual_msq(model: &ArModel, img: &ImagePlane) -> Result<f64> {
    let (p, q) = (model.p(), model.q());
    if p > img.height() || q > img.width() {
        return Err(Error::Dimensions("AR order exceeds patch".into()));
    }
    let (sn, sm) = (img.height() - p + 1, img.width() - q + 1);
    let mut acc = 0.0;
    for n in 0..sn {
        for m in 0..sm {
            let mut s = 0.0;
            for i in 0..p {
                for k in 0..q {
                    s += model.get(i, k) * img.get(n + i, m + k);
                }
            }
            acc += s * s;
        }
    }
    Ok(acc / (sn * sm) as f64)
}
