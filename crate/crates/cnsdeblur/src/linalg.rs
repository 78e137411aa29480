//! Dense symmetric solves shared by the AR fit, the PSF null-space step and
//! the inverse-filter solver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigen-decomposition sorted by ascending eigenvalue.
pub struct SortedEigen {
    pub values: Vec<f64>,
    /// Column `i` pairs with `values[i]`.
    pub vectors: DMatrix<f64>,
}

pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> SortedEigen {
    let se = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let n = m.nrows();
    let vectors = DMatrix::from_fn(n, n, |r, c| se.eigenvectors[(r, order[c])]);
    SortedEigen {
        values: order.iter().map(|&i| se.eigenvalues[i]).collect(),
        vectors,
    }
}

/// Minimum-norm solution of a symmetric system, discarding eigenvalues whose
/// magnitude is below `rel_cutoff` times the largest magnitude.
pub fn pinv_solve_symmetric(m: &DMatrix<f64>, rhs: &DVector<f64>, rel_cutoff: f64) -> DVector<f64> {
    let se = SymmetricEigen::new(m.clone());
    let top = se.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut out = DVector::zeros(m.nrows());
    if top == 0.0 {
        return out;
    }
    for (i, &lam) in se.eigenvalues.iter().enumerate() {
        if lam.abs() > rel_cutoff * top {
            let v = se.eigenvectors.column(i);
            let coef = v.dot(rhs) / lam;
            out.axpy(coef, &v, 1.0);
        }
    }
    out
}

/// Solves a symmetric positive semidefinite system by Cholesky when it is
/// well conditioned, otherwise through the pseudo-inverse. The flag reports
/// the fallback.
pub fn solve_spd_or_pinv(m: &DMatrix<f64>, rhs: &DVector<f64>, cond_limit: f64) -> (DVector<f64>, bool) {
    let se = SymmetricEigen::new(m.clone());
    let max = se.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = se.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    let well_posed = max > 0.0 && min > 0.0 && max / min <= cond_limit;
    if well_posed {
        if let Some(ch) = m.clone().cholesky() {
            return (ch.solve(rhs), false);
        }
    }
    (pinv_solve_symmetric(m, rhs, 1e-10), true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_rank_one_is_minimum_norm() {
        let m = DMatrix::from_element(3, 3, 1.0);
        let rhs = DVector::from_element(3, 3.0);
        let x = pinv_solve_symmetric(&m, &rhs, 1e-10);
        for v in x.iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spd_path_matches_exact_solution() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let rhs = DVector::from_row_slice(&[1.0, 2.0]);
        let (x, degenerate) = solve_spd_or_pinv(&m, &rhs, 1e12);
        assert!(!degenerate);
        assert!(((&m * &x) - &rhs).norm() < 1e-14);
    }

    #[test]
    fn eigen_is_sorted() {
        let m = DMatrix::from_row_slice(3, 3, &[3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        let e = sorted_symmetric_eigen(&m);
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
        assert!((e.vectors[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }
}
