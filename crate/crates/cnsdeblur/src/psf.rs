//! PSF estimation as the left null vector of the block AR operator.
//!
//! Each of the L*M rows of the operator carries the AR stencil shifted by
//! `(l, m)` inside a `(P+L-1) x (Q+M-1)` grid. The PSF is the direction that
//! row space annihilates best: the eigenvector of `A A^T` with the smallest
//! eigenvalue.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ar::ArModel;
use crate::error::{Error, Result};
use crate::image::Kernel;
use crate::linalg::sorted_symmetric_eigen;

/// Relative gap below which the two smallest singular values are treated
/// as a repeated value.
pub const NULL_GAP_TOLERANCE: f64 = 1e-10;
/// Sum of the unit null vector, relative to `sqrt(L*M)`, below which it
/// cannot be scaled to a unit-sum PSF.
pub const ZERO_SUM_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct BlockArOperator {
    source: ArModel,
    l: usize,
    m: usize,
    matrix: DMatrix<f64>,
}

impl BlockArOperator {
    pub fn source(&self) -> &ArModel {
        &self.source
    }

    pub fn psf_rows(&self) -> usize {
        self.l
    }

    pub fn psf_cols(&self) -> usize {
        self.m
    }

    /// `L*M x (P+L-1)(Q+M-1)` operator matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Width of the column grid, `Q + M - 1`.
    pub fn grid_cols(&self) -> usize {
        self.source.q() + self.m - 1
    }

    pub fn grid_rows(&self) -> usize {
        self.source.p() + self.l - 1
    }
}

pub fn build_block_operator(model: &ArModel, l: usize, m: usize) -> Result<BlockArOperator> {
    let (p, q) = (model.p(), model.q());
    if l == 0 || m == 0 || l % 2 == 0 || m % 2 == 0 {
        return Err(Error::Dimensions(format!("PSF size must be odd, got {l}x{m}")));
    }
    if l >= p || m >= q {
        return Err(Error::Dimensions(format!(
            "PSF size {l}x{m} must be smaller than AR order {p}x{q}"
        )));
    }
    let gr = p + l - 1;
    let gc = q + m - 1;
    let mut matrix = DMatrix::zeros(l * m, gr * gc);
    for dl in 0..l {
        for dm in 0..m {
            let row = dl * m + dm;
            for i in 0..p {
                for k in 0..q {
                    matrix[(row, (dl + i) * gc + dm + k)] = model.get(i, k);
                }
            }
        }
    }
    Ok(BlockArOperator {
        source: model.clone(),
        l,
        m,
        matrix,
    })
}

/// Output of the null-space step.
#[derive(Debug, Clone)]
pub struct CnsEstimate {
    /// Unit-sum PSF.
    pub psf: Kernel,
    /// Unit-norm eigenvector before sum normalization, sign fixed so that
    /// its sum is positive.
    pub null_vector: Vec<f64>,
    pub sigma_min: f64,
    /// Second-smallest singular value; infinite when the operator has a
    /// single row.
    pub sigma_next: f64,
    pub sigma_max: f64,
}

pub fn cns_estimate(op: &BlockArOperator) -> Result<CnsEstimate> {
    let a = op.matrix();
    let gram = a * a.transpose();
    let eig = sorted_symmetric_eigen(&gram);
    let sig = |v: f64| v.max(0.0).sqrt();
    let sigma_min = sig(eig.values[0]);
    let sigma_max = sig(*eig.values.last().expect("non-empty"));
    let sigma_next = eig.values.get(1).map(|&v| sig(v)).unwrap_or(f64::INFINITY);
    let n = a.nrows();
    let column = |i: usize| -> Vec<f64> { (0..n).map(|r| eig.vectors[(r, i)]).collect() };
    if sigma_next - sigma_min <= NULL_GAP_TOLERANCE * sigma_max {
        return Err(Error::Ambiguous {
            sigma_min,
            sigma_next,
            candidates: Box::new([column(0), column(1)]),
        });
    }
    let mut h = column(0);
    let s: f64 = h.iter().sum();
    // a unit vector sums to at most sqrt(n); far below that the sign and
    // scale of the sum are rounding noise
    if s.abs() <= ZERO_SUM_TOLERANCE * (n as f64).sqrt() {
        return Err(Error::numerical("cns", "null vector has zero sum and cannot be normalized"));
    }
    if s < 0.0 {
        h.iter_mut().for_each(|v| *v = -*v);
    }
    let psf = Kernel::new(op.l, op.m, h.clone())?.normalized()?;
    Ok(CnsEstimate {
        psf,
        null_vector: h,
        sigma_min,
        sigma_next,
        sigma_max,
    })
}

/// Blind PSF from an AR model in one call.
pub fn estimate_psf(model: &ArModel, l: usize, m: usize) -> Result<CnsEstimate> {
    cns_estimate(&build_block_operator(model, l, m)?)
}

/// Shape diagnostics of a PSF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeReport {
    /// Center of mass minus grid center, as (row, col).
    pub com_offset: (f64, f64),
    /// Ratio of the principal second moments (major / minor). `None` when
    /// both vanish; infinite when only the minor one does.
    pub anisotropy: Option<f64>,
    /// Fraction of absolute mass on the outermost rows and columns.
    pub boundary_mass: f64,
}

pub fn psf_shape_report(h: &Kernel) -> ShapeReport {
    let (l, m) = (h.rows(), h.cols());
    let (cl, cm) = h.center();
    let total: f64 = h.data().iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        return ShapeReport {
            com_offset: (0.0, 0.0),
            anisotropy: None,
            boundary_mass: 0.0,
        };
    }
    let w = |a: usize, b: usize| h.get(a, b).abs() / total;
    let (mut mr, mut mc) = (0.0, 0.0);
    for a in 0..l {
        for b in 0..m {
            mr += w(a, b) * a as f64;
            mc += w(a, b) * b as f64;
        }
    }
    let (mut srr, mut scc, mut src, mut border) = (0.0, 0.0, 0.0, 0.0);
    for a in 0..l {
        for b in 0..m {
            let (dr, dc) = (a as f64 - mr, b as f64 - mc);
            srr += w(a, b) * dr * dr;
            scc += w(a, b) * dc * dc;
            src += w(a, b) * dr * dc;
            if a == 0 || b == 0 || a == l - 1 || b == m - 1 {
                border += w(a, b);
            }
        }
    }
    let tr = srr + scc;
    let disc = ((srr - scc) * (srr - scc) + 4.0 * src * src).sqrt();
    let major = 0.5 * (tr + disc);
    let minor = (0.5 * (tr - disc)).max(0.0);
    let tiny = 1e-14;
    let anisotropy = if major <= tiny {
        None
    } else if minor <= tiny * major {
        Some(f64::INFINITY)
    } else {
        Some(major / minor)
    };
    // a 1x1 kernel is all border but carries no boundary information
    let boundary_mass = if l == 1 && m == 1 { 0.0 } else { border };
    ShapeReport {
        com_offset: (mr - cl as f64, mc - cm as f64),
        anisotropy,
        boundary_mass,
    }
}
