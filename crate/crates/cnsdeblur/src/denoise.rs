//! Prior denoising with the unoptimized least-squares inverse filter.
//!
//! A stage estimates the PSF of its input, solves the plain least-squares
//! inverse kernel and filters the input with it. Stages can be chained so
//! that every filter is fitted to the previous stage's output.

use serde::{Deserialize, Serialize};

use crate::ar::{estimate_ar, select_patch};
use crate::conv::{conv_same, BoundaryMode};
use crate::error::{Error, Result};
use crate::image::{mean_abs, ImagePlane, Kernel};
use crate::ipsf::{build_problem, solve_ls};
use crate::psf::estimate_psf;

/// AR order and PSF support used by a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Orders {
    pub p: usize,
    pub q: usize,
    pub l: usize,
    pub m: usize,
}

impl Orders {
    pub fn validate(&self) -> Result<()> {
        let all = [self.p, self.q, self.l, self.m];
        if all.iter().any(|v| *v == 0 || v % 2 == 0) {
            return Err(Error::Config(format!("orders must be odd and positive: {self:?}")));
        }
        if self.l >= self.p || self.m >= self.q {
            return Err(Error::Config(format!(
                "PSF size {}x{} must be below AR order {}x{}",
                self.l, self.m, self.p, self.q
            )));
        }
        Ok(())
    }
}

/// How the PSF of a stage was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsfSource {
    NullSpace,
    /// The AR fit or the null space carried no blur information; a delta
    /// kernel was used.
    DeltaFallback,
}

/// PSF of a plane from its AR model, falling back to a delta kernel when
/// the model is degenerate or the null space is ambiguous.
pub fn psf_or_delta(x: &ImagePlane, orders: &Orders) -> Result<(Kernel, PsfSource)> {
    orders.validate()?;
    let patch = select_patch(x, orders.p, orders.q)?;
    let fit = estimate_ar(&patch.patch, orders.p, orders.q, None)?;
    if fit.degenerate && fit.model.coeffs().iter().filter(|v| **v != 0.0).count() == 1 {
        return Ok((Kernel::delta(orders.l, orders.m)?, PsfSource::DeltaFallback));
    }
    match estimate_psf(&fit.model, orders.l, orders.m) {
        Ok(est) => Ok((est.psf, PsfSource::NullSpace)),
        Err(Error::Ambiguous { .. }) => Ok((Kernel::delta(orders.l, orders.m)?, PsfSource::DeltaFallback)),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeStage {
    pub psf: Kernel,
    pub psf_source: PsfSource,
    pub ipsf_prior: Kernel,
    pub x_out: ImagePlane,
}

/// One denoising stage.
pub fn prior_filter(x: &ImagePlane, orders: &Orders) -> Result<CascadeStage> {
    let (psf, psf_source) = psf_or_delta(x, orders)?;
    let problem = build_problem(x, &psf)?;
    let g = solve_ls(&problem);
    let x_out = conv_same(x, &g, BoundaryMode::NeumannReplicate)?;
    if !x_out.is_finite() {
        return Err(Error::numerical("prior_filter", "filtered image is not finite"));
    }
    Ok(CascadeStage {
        psf,
        psf_source,
        ipsf_prior: g,
        x_out,
    })
}

/// Applies `stages` prior filters in sequence, each fitted to the output
/// of the one before.
pub fn cascade(x: &ImagePlane, stages: usize, orders: &Orders) -> Result<(ImagePlane, Vec<CascadeStage>)> {
    if stages == 0 {
        return Err(Error::Config("cascade needs at least one stage".into()));
    }
    let mut cur = x.clone();
    let mut records = Vec::with_capacity(stages);
    for _ in 0..stages {
        let stage = prior_filter(&cur, orders)?;
        cur = stage.x_out.clone();
        records.push(stage);
    }
    Ok((cur, records))
}

/// 3x3 median with replicated borders.
pub fn median3(img: &ImagePlane) -> ImagePlane {
    let (h, w) = (img.height() as isize, img.width() as isize);
    ImagePlane::from_fn(img.width(), img.height(), |r, c| {
        let mut v = [0.0; 9];
        let mut i = 0;
        for dr in -1..=1 {
            for dc in -1..=1 {
                let rr = (r as isize + dr).clamp(0, h - 1) as usize;
                let cc = (c as isize + dc).clamp(0, w - 1) as usize;
                v[i] = img.get(rr, cc);
                i += 1;
            }
        }
        v.sort_by(f64::total_cmp);
        v[4]
    })
}

/// Mean absolute deviation from the 3x3 median; large for isolated spikes.
pub fn impulse_energy(img: &ImagePlane) -> f64 {
    mean_abs(&img.sub(&median3(img)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_removes_single_spike() {
        let mut img = ImagePlane::filled(5, 5, 0.2);
        img.set(2, 2, 1.0);
        assert!(median3(&img).data().iter().all(|v| *v == 0.2));
        assert!(impulse_energy(&img) > 0.0);
        assert_eq!(impulse_energy(&ImagePlane::filled(5, 5, 0.2)), 0.0);
    }

    #[test]
    fn order_rules() {
        assert!(Orders { p: 33, q: 33, l: 17, m: 17 }.validate().is_ok());
        assert!(Orders { p: 7, q: 7, l: 7, m: 5 }.validate().is_err());
        assert!(Orders { p: 8, q: 7, l: 3, m: 5 }.validate().is_err());
    }

    #[test]
    fn constant_input_uses_delta() {
        let x = ImagePlane::filled(40, 40, 0.5);
        let (k, src) = psf_or_delta(&x, &Orders { p: 5, q: 5, l: 3, m: 3 }).unwrap();
        assert_eq!(src, PsfSource::DeltaFallback);
        assert_eq!(k, Kernel::delta(3, 3).unwrap());
    }
}
