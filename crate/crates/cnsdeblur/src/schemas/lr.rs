//! Lucy-Richardson iteration with the multiplicative PSF refinement.

use super::monitor::{rejects_step, Monitor, StepExtras};
use super::{ConvergenceTrace, SchemaConfig};
use crate::conv::{conv_same, correlate_adjoint, BoundaryMode};
use crate::error::{Error, Result};
use crate::image::{ImagePlane, Kernel};

fn ratio(s: &ImagePlane, x: &ImagePlane, h: &Kernel, guard: f64) -> Result<ImagePlane> {
    let hs = conv_same(s, h, BoundaryMode::NeumannReplicate)?;
    Ok(x.zip_map(&hs, |xv, d| xv / d.max(guard)))
}

/// `S <- S . (H^T * (X / max(H*S, guard)))`. A PSF with negative lobes can
/// push the correction factor below zero; such factors are clipped so the
/// iterate stays nonnegative.
pub fn lr_step(s: &ImagePlane, x: &ImagePlane, h: &Kernel, guard: f64) -> Result<ImagePlane> {
    let r = ratio(s, x, h, guard)?;
    let corr = correlate_adjoint(&r, h, BoundaryMode::NeumannReplicate)?;
    Ok(s.zip_map(&corr, |sv, c| sv * c.max(0.0)))
}

/// Dual update on the kernel support:
/// `h(o) <- h(o) sum_p S(p + o - c) r(p) / sum S`, renormalized to unit sum.
pub fn lr_psf_update(s: &ImagePlane, x: &ImagePlane, h: &Kernel, guard: f64) -> Result<Kernel> {
    let r = ratio(s, x, h, guard)?;
    let total = s.sum();
    if !(total.abs() > 0.0) {
        return Err(Error::numerical("lr_psf_update", "iterate has zero flux"));
    }
    let (l, m) = (h.rows(), h.cols());
    let (cl, cm) = h.center();
    let (hh, ww) = (s.height() as isize, s.width() as isize);
    let at = |row: isize, col: isize| s.get(row.clamp(0, hh - 1) as usize, col.clamp(0, ww - 1) as usize);
    let mut data = Vec::with_capacity(l * m);
    for a in 0..l {
        for b in 0..m {
            let (da, db) = (a as isize - cl as isize, b as isize - cm as isize);
            let mut acc = 0.0;
            for pr in 0..s.height() {
                for pc in 0..s.width() {
                    acc += at(pr as isize + da, pc as isize + db) * r.get(pr, pc);
                }
            }
            data.push(h.get(a, b) * acc / total);
        }
    }
    Kernel::new(l, m, data)?.normalized()
}

/// Final LR iterate, refined PSF and per-step PSF changes.
#[derive(Debug, Clone, PartialEq)]
pub struct LrOutcome {
    pub image: ImagePlane,
    pub psf: Kernel,
    /// Relative L1 change of the PSF at each update.
    pub psf_changes: Vec<f64>,
    pub trace: ConvergenceTrace,
}

/// Runs LR from `S_0 = X`, refining the PSF after every image step when
/// `cfg.update_psf` is set.
pub fn lr_run(x: &ImagePlane, h: &Kernel, cfg: &SchemaConfig) -> Result<LrOutcome> {
    cfg.validate()?;
    let mut s = x.clone();
    let mut psf = h.clone();
    let mut monitor = Monitor::new(cfg);
    let mut psf_changes = Vec::new();
    loop {
        let next = lr_step(&s, x, &psf, cfg.zero_guard)?;
        let reason = monitor.observe(&next, &s, StepExtras::default());
        let accepted = !matches!(reason, Some(r) if rejects_step(r));
        if accepted {
            s = next;
            if cfg.update_psf {
                let updated = lr_psf_update(&s, x, &psf, cfg.zero_guard)?;
                let norm: f64 = psf.data().iter().map(|v| v.abs()).sum();
                psf_changes.push(updated.l1_distance(&psf) / norm);
                psf = updated;
            }
        }
        if let Some(reason) = reason {
            return Ok(LrOutcome {
                image: s,
                psf,
                psf_changes,
                trace: monitor.finish(reason),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(n: usize) -> ImagePlane {
        ImagePlane::from_fn(n, n, |r, c| {
            if (4..n - 4).contains(&r) && (4..n - 4).contains(&c) {
                0.2 + 0.1 * ((r * 3 + c) % 5) as f64
            } else {
                0.0
            }
        })
    }

    #[test]
    fn delta_fixed_point() {
        let x = ImagePlane::from_fn(9, 9, |r, c| 0.1 + 0.05 * (r + c) as f64);
        let d = Kernel::delta(3, 3).unwrap();
        let out = lr_step(&x, &x, &d, 1e-6).unwrap();
        for (a, b) in out.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_fixed_point() {
        let c = ImagePlane::filled(9, 9, 0.6);
        let h = Kernel::from_fn(3, 3, |a, b| (1 + a + b) as f64).unwrap().normalized().unwrap();
        let out = lr_step(&c, &c, &h, 1e-6).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.6).abs() < 1e-14));
    }

    #[test]
    fn psf_update_keeps_exact_kernel() {
        let s = blob(20);
        let h = Kernel::from_fn(3, 3, |a, b| [1.0, 2.0, 1.0][a] * [1.0, 3.0, 2.0][b]).unwrap().normalized().unwrap();
        let x = conv_same(&s, &h, BoundaryMode::ZeroPad).unwrap();
        let up = lr_psf_update(&s, &x, &h, 1e-6).unwrap();
        assert!(up.l1_distance(&h) < 1e-10);
        assert!((up.sum() - 1.0).abs() < 1e-12);
    }
}
