//! Convolution, finite differences and the variational regularizers.
//!
//! Convolutions are correlation-style and anchored at the kernel center:
//! `out(r, c) = sum_{a,b} in(r + a - ca, c + b - cb) * k(a, b)`.
//! The grid spacing is one pixel everywhere.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImagePlane, Kernel};

/// How samples outside the image are supplied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    ZeroPad,
    #[default]
    NeumannReplicate,
}

/// Regularizer whose Euler-Lagrange operator enters the schemas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegularizerKind {
    /// Surface-area functional `sum sqrt(1 + f_x^2 + f_y^2)`.
    Saf,
    /// Total variation with smoothing term `beta` under the root.
    Tv { beta: f64 },
}

impl Default for RegularizerKind {
    fn default() -> Self {
        RegularizerKind::Saf
    }
}

impl RegularizerKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RegularizerKind::Tv { beta } if !(beta >= 0.0 && beta.is_finite()) => {
                Err(Error::Config(format!("tv beta must be finite and >= 0, got {beta}")))
            }
            _ => Ok(()),
        }
    }

    /// Evaluates the regularizer's Euler-Lagrange operator on `img`.
    pub fn apply(&self, img: &ImagePlane) -> ImagePlane {
        match *self {
            RegularizerKind::Saf => saf_operator(img),
            RegularizerKind::Tv { beta } => tv_operator(img, beta),
        }
    }
}

fn check_fits(img: &ImagePlane, k: &Kernel) -> Result<()> {
    if k.rows() > img.height() || k.cols() > img.width() {
        return Err(Error::Dimensions(format!(
            "kernel {}x{} larger than image {}x{}",
            k.rows(),
            k.cols(),
            img.height(),
            img.width()
        )));
    }
    Ok(())
}

/// Copy of `img` with `pr` rows and `pc` columns of border on each side.
fn pad(img: &ImagePlane, pr: usize, pc: usize, mode: BoundaryMode) -> (Vec<f64>, usize) {
    let (h, w) = (img.height() as isize, img.width() as isize);
    let pw = img.width() + 2 * pc;
    let ph = img.height() + 2 * pr;
    let mut out = vec![0.0; pw * ph];
    for r in 0..ph {
        let sr = r as isize - pr as isize;
        let row = &mut out[r * pw..(r + 1) * pw];
        match mode {
            BoundaryMode::ZeroPad => {
                if sr < 0 || sr >= h {
                    continue;
                }
                row[pc..pc + img.width()].copy_from_slice(img.row(sr as usize));
            }
            BoundaryMode::NeumannReplicate => {
                let src = img.row(sr.clamp(0, h - 1) as usize);
                for (c, v) in row.iter_mut().enumerate() {
                    let sc = (c as isize - pc as isize).clamp(0, w - 1);
                    *v = src[sc as usize];
                }
            }
        }
    }
    (out, pw)
}

/// Same-size, center-anchored correlation of `img` with `k`.
pub fn conv_same(img: &ImagePlane, k: &Kernel, mode: BoundaryMode) -> Result<ImagePlane> {
    check_fits(img, k)?;
    let (ca, cb) = k.center();
    let (padded, pw) = pad(img, ca, cb, mode);
    let w = img.width();
    let mut out = vec![0.0; img.len()];
    out.par_chunks_mut(w).enumerate().for_each(|(r, orow)| {
        for a in 0..k.rows() {
            let prow = &padded[(r + a) * pw..(r + a + 1) * pw];
            for b in 0..k.cols() {
                let kv = k.get(a, b);
                if kv == 0.0 {
                    continue;
                }
                for (o, p) in orow.iter_mut().zip(&prow[b..b + w]) {
                    *o += kv * p;
                }
            }
        }
    });
    Ok(ImagePlane::from_raw(w, img.height(), out))
}

/// Adjoint of [`conv_same`]: correlation with the point-reflected kernel.
/// Exact adjoint under `ZeroPad`.
pub fn correlate_adjoint(img: &ImagePlane, k: &Kernel, mode: BoundaryMode) -> Result<ImagePlane> {
    conv_same(img, &k.flipped(), mode)
}

/// Full 2D convolution of two kernels; used for the `H*H` operator.
pub fn kernel_self_convolution(h: &Kernel) -> Kernel {
    let (l, m) = (h.rows(), h.cols());
    let (rl, rm) = (2 * l - 1, 2 * m - 1);
    let mut data = vec![0.0; rl * rm];
    for a in 0..l {
        for b in 0..m {
            let va = h.get(a, b);
            for c in 0..l {
                for d in 0..m {
                    data[(a + c) * rm + b + d] += va * h.get(c, d);
                }
            }
        }
    }
    Kernel::new(rl, rm, data).expect("odd sizes are preserved")
}

fn diff_along(img: &ImagePlane, horizontal: bool) -> ImagePlane {
    let (h, w) = (img.height(), img.width());
    let n = if horizontal { w } else { h };
    let mut out = ImagePlane::zeros(w, h);
    if n < 2 {
        return out;
    }
    for r in 0..h {
        for c in 0..w {
            let i = if horizontal { c } else { r };
            let at = |j: usize| if horizontal { img.get(r, j) } else { img.get(j, c) };
            let v = if i == 0 {
                at(1) - at(0)
            } else if i == n - 1 {
                at(n - 1) - at(n - 2)
            } else {
                0.5 * (at(i + 1) - at(i - 1))
            };
            out.set(r, c, v);
        }
    }
    out
}

/// Derivative along columns (x = column index).
pub fn grad_x(img: &ImagePlane) -> ImagePlane {
    diff_along(img, true)
}

/// Derivative along rows (y = row index).
pub fn grad_y(img: &ImagePlane) -> ImagePlane {
    diff_along(img, false)
}

fn second_along(img: &ImagePlane, horizontal: bool) -> ImagePlane {
    let (h, w) = (img.height(), img.width());
    ImagePlane::from_fn(w, h, |r, c| {
        if horizontal {
            let l = img.get(r, c.saturating_sub(1));
            let rr = img.get(r, (c + 1).min(w - 1));
            l + rr - 2.0 * img.get(r, c)
        } else {
            let u = img.get(r.saturating_sub(1), c);
            let d = img.get((r + 1).min(h - 1), c);
            u + d - 2.0 * img.get(r, c)
        }
    })
}

/// Second derivatives `(Ixx, Iyy, Ixy)`; the cross term is `grad_y(grad_x)`.
pub fn second_derivs(img: &ImagePlane) -> (ImagePlane, ImagePlane, ImagePlane) {
    (
        second_along(img, true),
        second_along(img, false),
        grad_y(&grad_x(img)),
    )
}

/// Determinant of the image-surface metric, `1 + Ix^2 + Iy^2`.
pub fn metric_det(img: &ImagePlane) -> ImagePlane {
    grad_x(img).zip_map(&grad_y(img), |gx, gy| 1.0 + gx * gx + gy * gy)
}

/// Euler-Lagrange operator of the surface-area functional:
/// `w^{-3/2} ((1 + Iy^2) Ixx + (1 + Ix^2) Iyy - 2 Ix Iy Ixy)`, `w = 1 + Ix^2 + Iy^2`.
pub fn saf_operator(img: &ImagePlane) -> ImagePlane {
    let gx = grad_x(img);
    let gy = grad_y(img);
    let (ixx, iyy, ixy) = second_derivs(img);
    let data = (0..img.len())
        .map(|i| {
            let (fx, fy) = (gx.data()[i], gy.data()[i]);
            let w = 1.0 + fx * fx + fy * fy;
            let num = (1.0 + fy * fy) * ixx.data()[i] + (1.0 + fx * fx) * iyy.data()[i]
                - 2.0 * fx * fy * ixy.data()[i];
            num / (w * w.sqrt())
        })
        .collect();
    ImagePlane::from_raw(img.width(), img.height(), data)
}

/// Divergence of the normalized gradient, `div(grad I / sqrt(|grad I|^2 + beta))`.
/// Where the denominator vanishes the flux is taken as zero.
pub fn tv_operator(img: &ImagePlane, beta: f64) -> ImagePlane {
    let gx = grad_x(img);
    let gy = grad_y(img);
    let mut fx = gx.clone();
    let mut fy = gy.clone();
    for i in 0..img.len() {
        let (a, b) = (gx.data()[i], gy.data()[i]);
        let n = (a * a + b * b + beta).sqrt();
        if n > 0.0 {
            fx.data_mut()[i] = a / n;
            fy.data_mut()[i] = b / n;
        } else {
            fx.data_mut()[i] = 0.0;
            fy.data_mut()[i] = 0.0;
        }
    }
    grad_x(&fx).add(&grad_y(&fy))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_x(w: usize, h: usize) -> ImagePlane {
        ImagePlane::from_fn(w, h, |_, c| c as f64)
    }

    #[test]
    fn identity_kernel_is_identity() {
        let img = ImagePlane::from_fn(5, 4, |r, c| (r * 5 + c) as f64 * 0.1);
        let one = Kernel::new(1, 1, vec![1.0]).unwrap();
        for mode in [BoundaryMode::ZeroPad, BoundaryMode::NeumannReplicate] {
            assert_eq!(conv_same(&img, &one, mode).unwrap(), img);
            let d = Kernel::delta(3, 5).unwrap();
            assert_eq!(conv_same(&img, &d, mode).unwrap(), img);
            assert_eq!(correlate_adjoint(&img, &d, mode).unwrap(), img);
        }
    }

    #[test]
    fn constant_is_fixed_under_replicate() {
        let img = ImagePlane::filled(6, 6, 0.37);
        let k = Kernel::from_fn(3, 3, |a, b| 1.0 + (a * 3 + b) as f64).unwrap().normalized().unwrap();
        let out = conv_same(&img, &k, BoundaryMode::NeumannReplicate).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.37).abs() < 1e-15));
    }

    #[test]
    fn oversized_kernel_rejected() {
        let img = ImagePlane::zeros(3, 3);
        assert!(conv_same(&img, &Kernel::delta(5, 1).unwrap(), BoundaryMode::ZeroPad).is_err());
    }

    #[test]
    fn gradients_of_ramps() {
        let img = ramp_x(6, 5);
        assert!(grad_x(&img).data().iter().all(|v| (v - 1.0).abs() < 1e-15));
        assert!(grad_y(&img).data().iter().all(|v| *v == 0.0));
        let c = ImagePlane::filled(4, 4, 2.0);
        assert!(grad_x(&c).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn second_derivatives_of_polynomials() {
        let sq = ImagePlane::from_fn(7, 5, |_, c| (c * c) as f64);
        let (ixx, iyy, _) = second_derivs(&sq);
        for r in 0..5 {
            for c in 1..6 {
                assert_eq!(ixx.get(r, c), 2.0);
            }
        }
        assert!(iyy.data().iter().all(|v| *v == 0.0));
        let xy = ImagePlane::from_fn(7, 7, |r, c| (r * c) as f64);
        let (_, _, ixy) = second_derivs(&xy);
        for r in 1..6 {
            for c in 1..6 {
                assert!((ixy.get(r, c) - 1.0).abs() < 1e-15);
            }
        }
        let lin = ImagePlane::from_fn(6, 6, |r, c| 0.5 * r as f64 - 0.25 * c as f64 + 1.0);
        let (a, b, cxy) = second_derivs(&lin);
        for p in [a, b, cxy] {
            for r in 1..5 {
                for c in 1..5 {
                    assert!(p.get(r, c).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn metric_det_of_unit_ramp() {
        let m = metric_det(&ramp_x(5, 5));
        assert!(m.data().iter().all(|v| (v - 2.0).abs() < 1e-15));
        assert!(metric_det(&ImagePlane::filled(3, 3, 1.0)).data().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn regularizers_vanish_on_flat_and_linear() {
        let flat = ImagePlane::filled(8, 8, 0.4);
        assert!(saf_operator(&flat).data().iter().all(|v| *v == 0.0));
        assert!(tv_operator(&flat, 1.0).data().iter().all(|v| *v == 0.0));
        assert!(tv_operator(&flat, 0.0).data().iter().all(|v| *v == 0.0));
        let lin = ImagePlane::from_fn(8, 8, |r, c| 0.1 * r as f64 + 0.2 * c as f64);
        let s = saf_operator(&lin);
        let t = tv_operator(&lin, 1e-4);
        for r in 2..6 {
            for c in 2..6 {
                assert!(s.get(r, c).abs() < 1e-14);
                assert!(t.get(r, c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn self_convolution_matches_double_application() {
        let h = Kernel::from_fn(3, 3, |a, b| [1.0, 2.0, 0.5][a] * [0.2, 1.0, 0.7][b]).unwrap();
        let k2 = kernel_self_convolution(&h);
        assert_eq!((k2.rows(), k2.cols()), (5, 5));
        let img = ImagePlane::from_fn(9, 9, |r, c| if (3..6).contains(&r) && (3..6).contains(&c) { (r + c) as f64 } else { 0.0 });
        let twice = conv_same(&conv_same(&img, &h, BoundaryMode::ZeroPad).unwrap(), &h, BoundaryMode::ZeroPad).unwrap();
        let once = conv_same(&img, &k2, BoundaryMode::ZeroPad).unwrap();
        for (a, b) in twice.data().iter().zip(once.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
