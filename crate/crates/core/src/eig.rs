//! Right eigendecomposition `M = V diag(lambda) V^-1` of general complex
//! matrices, with an explicit conditioning check.

use std::cmp::Ordering;

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::operator::{C64, ZERO};

/// Eigenvector matrices with `cond_1(V)` above this are treated as defective.
pub const MAX_CONDITION: f64 = 1e12;
/// Allowed relative Frobenius residual of the reconstruction.
pub const RECONSTRUCTION_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    /// Sorted by descending real part, ties broken by ascending `|Im|`.
    pub eigenvalues: Vec<C64>,
    /// Unit-norm right eigenvectors as columns.
    pub vectors: Mat<C64>,
    pub inverse: Mat<C64>,
    /// 1-norm condition number of `vectors`.
    pub condition: f64,
    pub residual: f64,
    pub steady_index: Option<usize>,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, l| m.max(l.norm()))
    }

    /// `V f(D) V^-1 v` for a diagonal weight vector.
    pub fn apply_diag(&self, weights: &[C64], v: &[C64]) -> Vec<C64> {
        let coeffs = matvec(self.inverse.as_ref(), v);
        let scaled: Vec<C64> = coeffs.iter().zip(weights).map(|(c, w)| c * w).collect();
        matvec(self.vectors.as_ref(), &scaled)
    }
}

pub(crate) fn matvec(m: MatRef<'_, C64>, v: &[C64]) -> Vec<C64> {
    assert_eq!(m.ncols(), v.len());
    let mut out = vec![ZERO; m.nrows()];
    for (j, &vj) in v.iter().enumerate() {
        if vj == ZERO {
            continue;
        }
        let col = m.col(j);
        for (i, o) in out.iter_mut().enumerate() {
            *o += col[i] * vj;
        }
    }
    out
}

/// Row vector times matrix, `v^T m`.
pub(crate) fn vecmat(v: &[C64], m: MatRef<'_, C64>) -> Vec<C64> {
    assert_eq!(m.nrows(), v.len());
    (0..m.ncols())
        .map(|j| {
            let col = m.col(j);
            v.iter().enumerate().map(|(i, &vi)| vi * col[i]).sum()
        })
        .collect()
}

fn induced_norm_1(m: MatRef<'_, C64>) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn ordering(a: &(f64, f64), b: &(f64, f64)) -> Ordering {
    // (quantized real part, |imag|): descending real, ascending |imag|
    b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1))
}

pub fn eig_general(m: MatRef<'_, C64>) -> Result<SpectralDecomposition> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    for j in 0..n {
        for i in 0..n {
            if !m[(i, j)].is_finite() {
                return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
            }
        }
    }
    let evd = m.eigen().map_err(|_| Error::EigenSolverFailed)?;
    let raw_vals = evd.S().column_vector();
    let raw_vecs = evd.U();

    let scale = (0..n).fold(0.0_f64, |s, j| s.max(raw_vals[j].norm()));
    // Real parts equal to ~1e-12 relative are treated as ties so that the
    // |Im| tie-break is stable against rounding.
    let quantum = if scale > 0.0 { 1e-12 * scale } else { 1.0 };
    let mut order: Vec<usize> = (0..n).collect();
    let key = |j: usize| {
        let l = raw_vals[j];
        ((l.re / quantum).round(), l.im.abs())
    };
    order.sort_by(|&a, &b| ordering(&key(a), &key(b)).then(raw_vals[a].im.total_cmp(&raw_vals[b].im)));

    let eigenvalues: Vec<C64> = order.iter().map(|&j| raw_vals[j]).collect();
    let vectors = Mat::from_fn(n, n, |i, k| raw_vecs[(i, order[k])]);
    let mut vectors = vectors;
    for k in 0..n {
        let norm = (0..n).map(|i| vectors[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            for i in 0..n {
                vectors[(i, k)] /= norm;
            }
        }
    }

    let inverse = vectors.partial_piv_lu().inverse();
    let condition = induced_norm_1(vectors.as_ref()) * induced_norm_1(inverse.as_ref());
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::DefectiveMatrix { cond: condition });
    }

    let scaled = Mat::from_fn(n, n, |i, k| vectors[(i, k)] * eigenvalues[k]);
    let recon = &scaled * &inverse;
    let residual = (&recon - m).norm_l2();
    let bound = RECONSTRUCTION_TOL * m.norm_l2();
    if residual > bound {
        return Err(Error::InaccurateDecomposition { residual, bound });
    }

    Ok(SpectralDecomposition {
        eigenvalues,
        vectors,
        inverse,
        condition,
        residual,
        steady_index: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::c;
    use rand::{Rng, SeedableRng};

    fn random_mat(n: usize, seed: u64) -> Mat<C64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn diagonal_input() {
        let m = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => c(-2.0, 3.0),
            (1, 1) => c(-1.0, 0.0),
            _ => ZERO,
        });
        let d = eig_general(m.as_ref()).unwrap();
        assert!((d.eigenvalues[0] - c(-1.0, 0.0)).norm() < 1e-14);
        assert!((d.eigenvalues[1] - c(-2.0, 3.0)).norm() < 1e-14);
        // columns are a permutation of the identity up to phase
        assert!((d.vectors[(1, 0)].norm() - 1.0).abs() < 1e-14);
        assert!((d.vectors[(0, 1)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn hermitian_input_has_real_spectrum() {
        let a = random_mat(6, 3);
        let h = Mat::from_fn(6, 6, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5);
        let d = eig_general(h.as_ref()).unwrap();
        for l in &d.eigenvalues {
            assert!(l.im.abs() < 1e-10);
        }
        for w in d.eigenvalues.windows(2) {
            assert!(w[0].re >= w[1].re - 1e-12);
        }
    }

    #[test]
    fn jordan_block_is_rejected() {
        let m = Mat::from_fn(2, 2, |i, j| if (i, j) == (0, 1) { c(1.0, 0.0) } else { ZERO });
        assert!(matches!(eig_general(m.as_ref()), Err(Error::DefectiveMatrix { .. })));
    }

    #[test]
    fn ties_sorted_by_imaginary_magnitude() {
        let vals = [c(-1.0, 2.0), c(-1.0, -0.5), c(0.0, 0.0), c(-1.0, 0.0)];
        let m = Mat::from_fn(4, 4, |i, j| if i == j { vals[i] } else { ZERO });
        let d = eig_general(m.as_ref()).unwrap();
        let got: Vec<C64> = d.eigenvalues.clone();
        assert_eq!(got, vec![c(0.0, 0.0), c(-1.0, 0.0), c(-1.0, -0.5), c(-1.0, 2.0)]);
    }

    #[test]
    fn random_reconstruction_and_trace() {
        for seed in 0..10 {
            let m = random_mat(9, seed);
            let d = eig_general(m.as_ref()).unwrap();
            let tr: C64 = (0..9).map(|i| m[(i, i)]).sum();
            let sum: C64 = d.eigenvalues.iter().sum();
            assert!((tr - sum).norm() <= 1e-8 * m.norm_l2());
            assert!(d.residual <= 1e-8 * m.norm_l2());
            let v: Vec<C64> = (0..9).map(|i| c(i as f64, 1.0)).collect();
            let w: Vec<C64> = vec![c(1.0, 0.0); 9];
            let back = d.apply_diag(&w, &v);
            for (p, q) in back.iter().zip(&v) {
                assert!((p - q).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_non_square() {
        let m = Mat::<C64>::zeros(2, 3);
        assert!(eig_general(m.as_ref()).is_err());
    }
}
