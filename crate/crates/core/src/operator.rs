//! Dense complex operators on a finite Hilbert space and superoperators
//! acting on their column-stacked vectorizations.
//!
//! Vectorization convention: entry `(i, j)` of a `d x d` operator lands in
//! slot `j * d + i`, so that `vec(A X B) = (B^T (x) A) vec(X)`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

pub type C64 = faer::c64;

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub(crate) const I: C64 = C64 { re: 0.0, im: 1.0 };

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Square complex matrix acting on a `dim`-dimensional Hilbert space.
#[derive(Clone, PartialEq)]
pub struct Operator {
    mat: Mat<C64>,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Operator({}x{}) [", self.dim(), self.dim())?;
        for i in 0..self.dim() {
            write!(f, "  ")?;
            for j in 0..self.dim() {
                let z = self.get(i, j);
                write!(f, "{:>10.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Operator {
    pub fn zeros(dim: usize) -> Self {
        Self {
            mat: Mat::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: Mat::identity(dim, dim),
        }
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self {
            mat: Mat::from_fn(dim, dim, f),
        }
    }

    /// Builds an operator from row-major nested rows.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "expected {dim} entries in every row"
            )));
        }
        let op = Self::from_fn(dim, |i, j| rows[i][j]);
        if !op.is_finite() {
            return Err(Error::InvalidArgument("operator has non-finite entries".into()));
        }
        Ok(op)
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| c(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn diag(entries: &[C64]) -> Self {
        Self::from_fn(entries.len(), |i, j| if i == j { entries[i] } else { ZERO })
    }

    pub fn from_mat(mat: Mat<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "operator must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Self { mat })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.mat[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: C64) {
        self.mat[(i, j)] = value;
    }

    pub fn as_mat(&self) -> MatRef<'_, C64> {
        self.mat.as_ref()
    }

    pub fn into_mat(self) -> Mat<C64> {
        self.mat
    }

    pub fn adjoint(&self) -> Self {
        Self {
            mat: self.mat.adjoint().to_owned(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            mat: self.mat.transpose().to_owned(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_fn(self.dim(), |i, j| self.get(i, j) * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(c(s, 0.0))
    }

    pub fn matmul(&self, rhs: &Operator) -> Self {
        assert_eq!(self.dim(), rhs.dim(), "operator dimension mismatch");
        Self {
            mat: &self.mat * &rhs.mat,
        }
    }

    pub fn commutator(&self, rhs: &Operator) -> Self {
        &self.matmul(rhs) - &rhs.matmul(self)
    }

    pub fn anticommutator(&self, rhs: &Operator) -> Self {
        &self.matmul(rhs) + &rhs.matmul(self)
    }

    /// `(X + X^dagger) / 2`
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.dim(), |i, j| (self.get(i, j) + self.get(j, i).conj()) * 0.5)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.norm_l2()
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.norm_max()
    }

    pub fn hermitian_deviation(&self) -> f64 {
        let d = self.dim();
        let mut dev = 0.0_f64;
        for i in 0..d {
            for j in 0..d {
                dev = dev.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    pub fn is_finite(&self) -> bool {
        let d = self.dim();
        (0..d).all(|j| (0..d).all(|i| self.get(i, j).is_finite()))
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<f64>> {
        self.hermitian_part()
            .mat
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|_| Error::EigenSolverFailed)
    }

    /// Largest absolute eigenvalue of the Hermitian part.
    pub fn spectral_radius_hermitian(&self) -> Result<f64> {
        Ok(self
            .hermitian_eigenvalues()?
            .into_iter()
            .fold(0.0, |m, x| m.max(x.abs())))
    }

    /// Matrix exponential `exp(s * X)` for Hermitian `X` and scalar `s`.
    pub fn exp_hermitian(&self, s: C64) -> Result<Operator> {
        let herm = self.hermitian_part();
        let evd = herm
            .mat
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| Error::EigenSolverFailed)?;
        let u = evd.U();
        let w = evd.S().column_vector();
        let d = self.dim();
        let scaled = Mat::from_fn(d, d, |i, j| u[(i, j)] * (s * w[j]).exp());
        Ok(Self {
            mat: &scaled * u.adjoint(),
        })
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim(), rhs.dim(), "operator dimension mismatch");
        Operator {
            mat: &self.mat + &rhs.mat,
        }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim(), rhs.dim(), "operator dimension mismatch");
        Operator {
            mat: &self.mat - &rhs.mat,
        }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.matmul(rhs)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale_real(-1.0)
    }
}

/// A validated density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(Operator);

impl DensityMatrix {
    pub const HERMITIAN_TOL: f64 = 1e-10;
    pub const TRACE_TOL: f64 = 1e-10;
    pub const POSITIVITY_TOL: f64 = -1e-8;

    pub fn new(op: Operator) -> Result<Self> {
        if !op.is_finite() {
            return Err(Error::InvalidDensityMatrix("non-finite entries".into()));
        }
        let herm = op.hermitian_deviation();
        if herm > Self::HERMITIAN_TOL {
            return Err(Error::InvalidDensityMatrix(format!(
                "not Hermitian (deviation {herm:.3e})"
            )));
        }
        let tr = op.trace();
        if (tr - ONE).norm() > Self::TRACE_TOL {
            return Err(Error::InvalidDensityMatrix(format!(
                "trace {:.6}{:+.3e}i differs from 1",
                tr.re, tr.im
            )));
        }
        let min_eig = op
            .hermitian_eigenvalues()?
            .first()
            .copied()
            .unwrap_or(0.0);
        if min_eig < Self::POSITIVITY_TOL {
            return Err(Error::InvalidDensityMatrix(format!(
                "negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(Self(op))
    }

    /// Divides by the (complex) trace, then Hermitizes, before validation.
    /// Eigenvectors come with an arbitrary phase, so the order matters.
    pub fn normalized(op: &Operator) -> Result<Self> {
        let tr = op.trace();
        if tr.norm() < 1e-300 || !tr.is_finite() {
            return Err(Error::InvalidDensityMatrix("zero trace".into()));
        }
        let h = op.scale(ONE / tr).hermitian_part();
        let tr = h.trace().re;
        Self::new(h.scale_real(1.0 / tr))
    }

    /// Wraps without validation; callers guarantee a Hermitian unit-trace input.
    pub(crate) fn from_operator_unchecked(op: Operator) -> Self {
        Self(op)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(Operator::identity(dim).scale_real(1.0 / dim as f64))
    }

    /// `(I + r . sigma) / 2` for a Bloch vector with `|r| <= 1`.
    pub fn from_bloch(r: [f64; 3]) -> Result<Self> {
        let [x, y, z] = pauli();
        let op = &(&Operator::identity(2) + &x.scale_real(r[0]))
            + &(&y.scale_real(r[1]) + &z.scale_real(r[2]));
        Self::new(op.scale_real(0.5))
    }

    pub fn as_operator(&self) -> &Operator {
        &self.0
    }

    pub fn into_operator(self) -> Operator {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.0.hermitian_eigenvalues()?.first().copied().unwrap_or(0.0))
    }
}

/// Pauli matrices `[sigma_x, sigma_y, sigma_z]`.
pub fn pauli() -> [Operator; 3] {
    let sx = Operator::from_fn(2, |i, j| if i != j { ONE } else { ZERO });
    let sy = Operator::from_fn(2, |i, j| match (i, j) {
        (0, 1) => -I,
        (1, 0) => I,
        _ => ZERO,
    });
    let sz = Operator::diag(&[ONE, -ONE]);
    [sx, sy, sz]
}

/// Spin matrices `[S_x, S_y, S_z]` for spin `s = twice_spin / 2`, basis
/// ordered by descending magnetic quantum number.
pub fn spin_matrices(twice_spin: u32) -> [Operator; 3] {
    let s = twice_spin as f64 / 2.0;
    let dim = twice_spin as usize + 1;
    let m = |k: usize| s - k as f64;
    // S_+ |m> = sqrt(s(s+1) - m(m+1)) |m+1>, and |m+1> sits one row above.
    let raise = |i: usize, j: usize| {
        if i + 1 == j {
            let mj = m(j);
            (s * (s + 1.0) - mj * (mj + 1.0)).sqrt()
        } else {
            0.0
        }
    };
    let sx = Operator::from_fn(dim, |i, j| c(0.5 * (raise(i, j) + raise(j, i)), 0.0));
    let sy = Operator::from_fn(dim, |i, j| c(0.0, -0.5 * (raise(i, j) - raise(j, i))));
    let sz = Operator::from_fn(dim, |i, j| if i == j { c(m(i), 0.0) } else { ZERO });
    [sx, sy, sz]
}

/// Kronecker product `a (x) b`; `(a (x) b)[(i*db + k, j*db + l)] = a[i,j] b[k,l]`.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    let db = b.dim();
    Operator::from_fn(a.dim() * db, |r, s| {
        a.get(r / db, s / db) * b.get(r % db, s % db)
    })
}

/// Column-stacking vectorization.
pub fn vectorize(x: &Operator) -> Vec<C64> {
    let d = x.dim();
    let mut out = Vec::with_capacity(d * d);
    for j in 0..d {
        for i in 0..d {
            out.push(x.get(i, j));
        }
    }
    out
}

pub fn devectorize(v: &[C64]) -> Result<Operator> {
    let d = integer_sqrt(v.len()).ok_or(Error::NotSquareLength(v.len()))?;
    Ok(Operator::from_fn(d, |i, j| v[j * d + i]))
}

pub(crate) fn integer_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

/// Linear map on vectorized operators of a `hilbert_dim`-dimensional space.
#[derive(Clone, PartialEq)]
pub struct SuperOperator {
    mat: Mat<C64>,
    hilbert_dim: usize,
}

impl fmt::Debug for SuperOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "SuperOperator(d = {}, {}x{}, |.|_F = {:.4e})",
            self.hilbert_dim,
            self.side(),
            self.side(),
            self.frobenius_norm()
        )
    }
}

impl SuperOperator {
    pub fn from_mat(mat: Mat<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "superoperator must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let hilbert_dim = integer_sqrt(mat.nrows()).ok_or(Error::NotSquareLength(mat.nrows()))?;
        Ok(Self { mat, hilbert_dim })
    }

    pub fn zeros(hilbert_dim: usize) -> Self {
        let n = hilbert_dim * hilbert_dim;
        Self {
            mat: Mat::zeros(n, n),
            hilbert_dim,
        }
    }

    pub fn identity(hilbert_dim: usize) -> Self {
        let n = hilbert_dim * hilbert_dim;
        Self {
            mat: Mat::identity(n, n),
            hilbert_dim,
        }
    }

    /// Matrix of the linear map `f`, assembled column by column from its
    /// action on the matrix units `E_ij`.
    pub fn from_linear_map(hilbert_dim: usize, f: impl Fn(&Operator) -> Operator) -> Self {
        let d = hilbert_dim;
        let n = d * d;
        let mut mat = Mat::zeros(n, n);
        for j in 0..d {
            for i in 0..d {
                let mut unit = Operator::zeros(d);
                unit.set(i, j, ONE);
                let image = vectorize(&f(&unit));
                let col = j * d + i;
                for (row, v) in image.into_iter().enumerate() {
                    mat[(row, col)] = v;
                }
            }
        }
        Self { mat, hilbert_dim }
    }

    pub fn hilbert_dim(&self) -> usize {
        self.hilbert_dim
    }

    pub fn side(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_mat(&self) -> MatRef<'_, C64> {
        self.mat.as_ref()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.mat[(i, j)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.norm_l2()
    }

    pub fn apply_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.side(), "vector length mismatch");
        let n = self.side();
        let mut out = vec![ZERO; n];
        for (j, &vj) in v.iter().enumerate() {
            if vj == ZERO {
                continue;
            }
            let col = self.mat.col_as_slice(j);
            for (o, &m) in out.iter_mut().zip(col) {
                *o += m * vj;
            }
        }
        out
    }

    pub fn apply(&self, x: &Operator) -> Result<Operator> {
        if x.dim() != self.hilbert_dim {
            return Err(Error::DimensionMismatch(format!(
                "superoperator on d = {} applied to operator of dim {}",
                self.hilbert_dim,
                x.dim()
            )));
        }
        devectorize(&self.apply_vec(&vectorize(x)))
    }

    pub fn scale(&self, s: C64) -> Self {
        let n = self.side();
        Self {
            mat: Mat::from_fn(n, n, |i, j| self.mat[(i, j)] * s),
            hilbert_dim: self.hilbert_dim,
        }
    }

    pub fn compose(&self, rhs: &SuperOperator) -> Self {
        assert_eq!(self.side(), rhs.side(), "superoperator dimension mismatch");
        Self {
            mat: &self.mat * &rhs.mat,
            hilbert_dim: self.hilbert_dim,
        }
    }

    /// Inverse of the matrix; only meaningful for invertible maps.
    pub fn inverse(&self) -> Self {
        Self {
            mat: self.mat.partial_piv_lu().inverse(),
            hilbert_dim: self.hilbert_dim,
        }
    }
}

impl Add for &SuperOperator {
    type Output = SuperOperator;
    fn add(self, rhs: &SuperOperator) -> SuperOperator {
        assert_eq!(self.side(), rhs.side(), "superoperator dimension mismatch");
        SuperOperator {
            mat: &self.mat + &rhs.mat,
            hilbert_dim: self.hilbert_dim,
        }
    }
}

impl Sub for &SuperOperator {
    type Output = SuperOperator;
    fn sub(self, rhs: &SuperOperator) -> SuperOperator {
        assert_eq!(self.side(), rhs.side(), "superoperator dimension mismatch");
        SuperOperator {
            mat: &self.mat - &rhs.mat,
            hilbert_dim: self.hilbert_dim,
        }
    }
}

/// Matrix of `X -> l X r`, i.e. `r^T (x) l`.
pub fn sandwich_superop(l: &Operator, r: &Operator) -> Result<SuperOperator> {
    if l.dim() != r.dim() {
        return Err(Error::DimensionMismatch(format!(
            "sandwich operands have dims {} and {}",
            l.dim(),
            r.dim()
        )));
    }
    let k = kron(&r.transpose(), l);
    SuperOperator::from_mat(k.into_mat())
}

/// Which factor of a bipartite space `C^d1 (x) C^d2` a partial trace keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Keep {
    First,
    Second,
}

pub fn partial_trace(x: &Operator, dims: (usize, usize), keep: Keep) -> Result<Operator> {
    let (d1, d2) = dims;
    if d1 * d2 != x.dim() || d1 == 0 || d2 == 0 {
        return Err(Error::DimensionMismatch(format!(
            "dims ({d1}, {d2}) do not factor an operator of dimension {}",
            x.dim()
        )));
    }
    Ok(match keep {
        Keep::First => Operator::from_fn(d1, |i, j| {
            (0..d2).map(|k| x.get(i * d2 + k, j * d2 + k)).sum()
        }),
        Keep::Second => Operator::from_fn(d2, |k, l| {
            (0..d1).map(|i| x.get(i * d2 + k, i * d2 + l)).sum()
        }),
    })
}

/// Checks `vec(A X B) = (B^T (x) A) vec(X)` on a fixed non-symmetric triple.
/// Runs once per process; the result is cached.
pub fn vectorization_self_test() -> Result<()> {
    static RESULT: OnceLock<std::result::Result<(), String>> = OnceLock::new();
    RESULT
        .get_or_init(|| {
            let mk = |seed: f64| {
                Operator::from_fn(3, |i, j| {
                    let t = seed + (i * 3 + j) as f64;
                    c((1.3 * t).sin(), (0.7 * t + 0.2).cos())
                })
            };
            let (a, x, b) = (mk(0.1), mk(2.0), mk(5.5));
            let lhs = vectorize(&a.matmul(&x).matmul(&b));
            let rhs = sandwich_superop(&a, &b)
                .map_err(|e| e.to_string())?
                .apply_vec(&vectorize(&x));
            let err = lhs
                .iter()
                .zip(&rhs)
                .map(|(p, q)| (p - q).norm())
                .fold(0.0, f64::max);
            if err <= 1e-12 {
                Ok(())
            } else {
                Err(format!("vectorization convention self-test failed ({err:.3e})"))
            }
        })
        .clone()
        .map_err(Error::InvalidArgument)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_op(d: usize, seed: u64) -> Operator {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Operator::from_fn(d, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn max_diff(a: &Operator, b: &Operator) -> f64 {
        (a - b).max_abs()
    }

    #[test]
    fn kron_examples() {
        let [sx, _, sz] = pauli();
        let id = Operator::identity(2);
        let k = kron(&sz, &id);
        assert_eq!(k, Operator::diag(&[ONE, ONE, -ONE, -ONE]));
        let k = kron(&id, &sx);
        for blk in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(k.get(2 * blk + i, 2 * blk + j), sx.get(i, j));
                }
            }
        }
        assert_eq!(k.get(0, 2), ZERO);
        let big = kron(&Operator::identity(10), &Operator::identity(2));
        assert_eq!(big.dim(), 20);
    }

    #[test]
    fn vectorize_is_column_stacking() {
        let x = Operator::from_real_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let v = vectorize(&x);
        let re: Vec<f64> = v.iter().map(|z| z.re).collect();
        assert_eq!(re, vec![1.0, 3.0, 2.0, 4.0]);
        assert_eq!(devectorize(&v).unwrap(), x);
        assert!(matches!(devectorize(&[ONE; 3]), Err(Error::NotSquareLength(3))));
    }

    #[test]
    fn vec_of_product_matches_kron_oracle() {
        // Oracle: direct triple product, compared against (B^T (x) A) vec X.
        for seed in 0..5 {
            let (a, x, b) = (random_op(3, seed), random_op(3, seed + 100), random_op(3, seed + 200));
            let direct = vectorize(&(&(&a * &x) * &b));
            let via = sandwich_superop(&a, &b).unwrap().apply_vec(&vectorize(&x));
            for (p, q) in direct.iter().zip(&via) {
                assert!((p - q).norm() < 1e-12);
            }
        }
        vectorization_self_test().unwrap();
    }

    #[test]
    fn sandwich_examples() {
        let [sx, _, sz] = pauli();
        let id = Operator::identity(2);
        let got = sandwich_superop(&sz, &id).unwrap().apply(&sx).unwrap();
        assert!(max_diff(&got, &(&sz * &sx)) < 1e-15);
        let ident = sandwich_superop(&id, &id).unwrap();
        assert_eq!(ident, SuperOperator::identity(2));
        let h = random_op(3, 7).hermitian_part();
        let id3 = Operator::identity(3);
        let comm = &sandwich_superop(&h, &id3).unwrap() - &sandwich_superop(&id3, &h).unwrap();
        assert!(comm.apply(&h).unwrap().max_abs() < 1e-14);
        assert!(sandwich_superop(&id, &id3).is_err());
    }

    #[test]
    fn partial_trace_examples() {
        let rho_n = DensityMatrix::from_bloch([0.2, -0.3, 0.5]).unwrap();
        let rho_e = DensityMatrix::from_bloch([0.0, 0.6, -0.1]).unwrap();
        let joint = kron(rho_n.as_operator(), rho_e.as_operator());
        let kept = partial_trace(&joint, (2, 2), Keep::First).unwrap();
        assert!(max_diff(&kept, rho_n.as_operator()) < 1e-15);
        let kept = partial_trace(&joint, (2, 2), Keep::Second).unwrap();
        assert!(max_diff(&kept, rho_e.as_operator()) < 1e-15);

        // Bell state (|00> + |11>)/sqrt(2)
        let bell = Operator::from_fn(4, |i, j| {
            if (i == 0 || i == 3) && (j == 0 || j == 3) { c(0.5, 0.0) } else { ZERO }
        });
        let half = Operator::identity(2).scale_real(0.5);
        for keep in [Keep::First, Keep::Second] {
            assert!(max_diff(&partial_trace(&bell, (2, 2), keep).unwrap(), &half) < 1e-15);
        }
        assert!(partial_trace(&bell, (3, 2), Keep::First).is_err());
    }

    #[test]
    fn spin_algebra() {
        for twice in [1u32, 9] {
            let [sx, sy, sz] = spin_matrices(twice);
            let s = twice as f64 / 2.0;
            let comm = sx.commutator(&sy);
            assert!(max_diff(&comm, &sz.scale(I)) < 1e-12);
            let casimir = &(&(&sx * &sx) + &(&sy * &sy)) + &(&sz * &sz);
            let expect = Operator::identity(twice as usize + 1).scale_real(s * (s + 1.0));
            assert!(max_diff(&casimir, &expect) < 1e-12);
        }
        let [sx, sy, sz] = spin_matrices(1);
        let [px, py, pz] = pauli();
        assert!(max_diff(&sx.scale_real(2.0), &px) < 1e-15);
        assert!(max_diff(&sy.scale_real(2.0), &py) < 1e-15);
        assert!(max_diff(&sz.scale_real(2.0), &pz) < 1e-15);
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(Operator::identity(2)).is_err());
        assert!(DensityMatrix::new(Operator::diag(&[c(1.5, 0.0), c(-0.5, 0.0)])).is_err());
        assert!(DensityMatrix::from_bloch([0.0, 0.0, 1.0]).is_ok());
        let nh = Operator::from_fn(2, |i, j| if (i, j) == (0, 1) { c(0.1, 0.0) } else if i == j { c(0.5, 0.0) } else { ZERO });
        assert!(DensityMatrix::new(nh).is_err());
    }

    #[test]
    fn hermitian_exponential() {
        let [_, _, sz] = pauli();
        let u = sz.exp_hermitian(c(0.0, -0.3)).unwrap();
        assert!((u.get(0, 0) - c(0.0, -0.3).exp()).norm() < 1e-14);
        assert!((u.get(1, 1) - c(0.0, 0.3).exp()).norm() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn kron_mixed_product(seed in 0u64..10_000, da in 2usize..4, db in 2usize..4) {
            let a = random_op(da, seed);
            let b = random_op(db, seed + 1);
            let cc = random_op(da, seed + 2);
            let dd = random_op(db, seed + 3);
            let lhs = &kron(&a, &b) * &kron(&cc, &dd);
            let rhs = kron(&(&a * &cc), &(&b * &dd));
            prop_assert!(max_diff(&lhs, &rhs) < 1e-12);
            let assoc_l = kron(&kron(&a, &b), &cc);
            let assoc_r = kron(&a, &kron(&b, &cc));
            prop_assert!(max_diff(&assoc_l, &assoc_r) < 1e-12);
        }

        #[test]
        fn sandwich_consistency(seed in 0u64..10_000, d in 2usize..4) {
            let (l, x, r) = (random_op(d, seed), random_op(d, seed + 11), random_op(d, seed + 17));
            let via = sandwich_superop(&l, &r).unwrap().apply(&x).unwrap();
            prop_assert!(max_diff(&via, &(&(&l * &x) * &r)) < 1e-12);
            prop_assert_eq!(devectorize(&vectorize(&x)).unwrap(), x);
        }

        #[test]
        fn partial_trace_linear_and_trace_preserving(seed in 0u64..10_000, d1 in 1usize..4, d2 in 1usize..4, alpha in -2.0f64..2.0) {
            let x = random_op(d1 * d2, seed);
            let y = random_op(d1 * d2, seed + 5);
            for keep in [Keep::First, Keep::Second] {
                let px = partial_trace(&x, (d1, d2), keep).unwrap();
                prop_assert!((px.trace() - x.trace()).norm() < 1e-12);
                let comb = &x.scale_real(alpha) + &y;
                let lhs = partial_trace(&comb, (d1, d2), keep).unwrap();
                let rhs = &px.scale_real(alpha) + &partial_trace(&y, (d1, d2), keep).unwrap();
                prop_assert!(max_diff(&lhs, &rhs) < 1e-12);
            }
        }
    }
}
