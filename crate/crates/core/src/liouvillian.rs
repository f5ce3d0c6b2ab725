//! Liouvillian assembly (coherent part, environmental dissipators and
//! measurement damping), steady state, and the propagators `G(t)`,
//! `G'(t)` and `G'(omega)`.

use std::sync::OnceLock;

use faer::Mat;

use crate::eig::{eig_general, matvec, vecmat, SpectralDecomposition};
use crate::error::{Error, Result};
use crate::operator::{
    devectorize, kron, partial_trace, sandwich_superop, vectorization_self_test, vectorize,
    DensityMatrix, Keep, Operator, SuperOperator, C64, I, ONE, ZERO,
};

/// Relative steady-state threshold on `|lambda|`.
pub const STEADY_REL_TOL: f64 = 1e-9;
/// Absolute floor used when every eigenvalue is tiny.
pub const STEADY_ABS_FLOOR: f64 = 1e-12;
pub const HERMITIAN_INPUT_TOL: f64 = 1e-10;

/// Factor of `C^d1 (x) C^d2` a relaxation acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Whole,
    First,
    Second,
}

#[derive(Clone, Debug)]
pub enum DissipatorKind {
    /// `D rho = -gamma (rho - (traced-out rest) (x) rho_final)`
    IsotropicRelaxation {
        dims: (usize, usize),
        target: Target,
        rho_final: DensityMatrix,
    },
    /// Arbitrary superoperator, scaled by `rate`.
    Custom(SuperOperator),
}

#[derive(Clone, Debug)]
pub struct DissipatorSpec {
    pub kind: DissipatorKind,
    pub rate: f64,
}

impl DissipatorSpec {
    pub fn relaxation(dims: (usize, usize), target: Target, rate: f64, rho_final: DensityMatrix) -> Self {
        Self {
            kind: DissipatorKind::IsotropicRelaxation {
                dims,
                target,
                rho_final,
            },
            rate,
        }
    }

    /// Single-system relaxation toward `rho_final`.
    pub fn relaxation_whole(rate: f64, rho_final: DensityMatrix) -> Self {
        let d = rho_final.dim();
        Self::relaxation((1, d), Target::Whole, rate, rho_final)
    }

    pub fn custom(rate: f64, superop: SuperOperator) -> Self {
        Self {
            kind: DissipatorKind::Custom(superop),
            rate,
        }
    }

    pub fn to_superop(&self, dim: usize) -> Result<SuperOperator> {
        if !(self.rate >= 0.0) || !self.rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "dissipator rate must be finite and non-negative, got {}",
                self.rate
            )));
        }
        match &self.kind {
            DissipatorKind::IsotropicRelaxation {
                dims,
                target,
                rho_final,
            } => {
                let d = match target {
                    Target::Whole => rho_final.dim(),
                    _ => dims.0 * dims.1,
                };
                if d != dim {
                    return Err(Error::DimensionMismatch(format!(
                        "relaxation acts on dimension {d}, system has {dim}"
                    )));
                }
                isotropic_spin_dissipator(*dims, *target, self.rate, rho_final)
            }
            DissipatorKind::Custom(s) => {
                if s.hilbert_dim() != dim {
                    return Err(Error::DimensionMismatch(format!(
                        "custom dissipator acts on dimension {}, system has {dim}",
                        s.hilbert_dim()
                    )));
                }
                Ok(s.scale(C64::new(self.rate, 0.0)))
            }
        }
    }
}

/// Relaxation of one factor (or the whole system) toward `rho_final` at
/// rate `gamma`, leaving the reduced state of the other factor untouched.
pub fn isotropic_spin_dissipator(
    dims: (usize, usize),
    target: Target,
    gamma: f64,
    rho_final: &DensityMatrix,
) -> Result<SuperOperator> {
    let (d1, d2) = dims;
    let rf = rho_final.as_operator();
    let dim = match target {
        Target::Whole => rf.dim(),
        Target::First => {
            if rf.dim() != d1 {
                return Err(Error::DimensionMismatch(format!(
                    "rho_final has dimension {}, first factor has {d1}",
                    rf.dim()
                )));
            }
            d1 * d2
        }
        Target::Second => {
            if rf.dim() != d2 {
                return Err(Error::DimensionMismatch(format!(
                    "rho_final has dimension {}, second factor has {d2}",
                    rf.dim()
                )));
            }
            d1 * d2
        }
    };
    let g = C64::new(-gamma, 0.0);
    // Partial traces of matrix units are themselves matrix units, so the
    // map is assembled from its action on the basis.
    let map = |x: &Operator| -> Operator {
        let fixed = match target {
            Target::Whole => rf.scale(x.trace()),
            Target::First => kron(rf, &partial_trace(x, dims, Keep::Second).expect("dims checked")),
            Target::Second => kron(&partial_trace(x, dims, Keep::First).expect("dims checked"), rf),
        };
        (x - &fixed).scale(g)
    };
    Ok(SuperOperator::from_linear_map(dim, map))
}

/// Standard Lindblad dissipator `L rho L^dag - {L^dag L, rho}/2` for one
/// jump operator.
pub fn lindblad_dissipator(jump: &Operator) -> Result<SuperOperator> {
    let d = jump.dim();
    let id = Operator::identity(d);
    let ldl = jump.adjoint().matmul(jump);
    let half = C64::new(0.5, 0.0);
    let a = sandwich_superop(jump, &jump.adjoint())?;
    let b = sandwich_superop(&ldl, &id)?.scale(half);
    let c = sandwich_superop(&id, &ldl)?.scale(half);
    Ok(&(&a - &b) - &c)
}

/// `-i [H, .]` as a superoperator.
pub fn coherent_superop(h: &Operator) -> Result<SuperOperator> {
    let id = Operator::identity(h.dim());
    let comm = &sandwich_superop(h, &id)? - &sandwich_superop(&id, h)?;
    Ok(comm.scale(-I))
}

/// `beta^2 (A . A - {A^2, .}/2) = -(beta^2/2) [A, [A, .]]`.
pub fn measurement_damping_superop(a: &Operator, beta: f64) -> Result<SuperOperator> {
    let id = Operator::identity(a.dim());
    let a2 = a.matmul(a);
    let half = C64::new(0.5, 0.0);
    let s = &(&sandwich_superop(a, a)? - &sandwich_superop(&a2, &id)?.scale(half))
        - &sandwich_superop(&id, &a2)?.scale(half);
    Ok(s.scale(C64::new(beta * beta, 0.0)))
}

/// `(a x + x a)/2 - offset x`; `offset = 0` gives the measurement
/// superoperator, `offset = Tr(a rho0)` its mean-subtracted variant.
pub fn a_super_apply(a: &Operator, offset: f64, x: &Operator) -> Result<Operator> {
    if a.dim() != x.dim() {
        return Err(Error::DimensionMismatch(format!(
            "measurement operator has dimension {}, argument {}",
            a.dim(),
            x.dim()
        )));
    }
    let anti = a.anticommutator(x).scale_real(0.5);
    Ok(&anti - &x.scale_real(offset))
}

/// Matrix of [`a_super_apply`].
pub fn a_super_matrix(a: &Operator, offset: f64) -> Result<SuperOperator> {
    let id = Operator::identity(a.dim());
    let half = C64::new(0.5, 0.0);
    let s = &sandwich_superop(a, &id)? + &sandwich_superop(&id, a)?;
    let s = s.scale(half);
    Ok(&s - &SuperOperator::identity(a.dim()).scale(C64::new(offset, 0.0)))
}

/// Quantities reused by every frequency-domain evaluation, all expressed in
/// the eigenbasis of the Liouvillian.
#[derive(Debug)]
pub struct SpectralEngine {
    pub eigenvalues: Vec<C64>,
    /// True for modes removed from `G'`.
    pub kernel: Vec<bool>,
    /// `l_j = Tr((A - a) devec(V_j))`
    pub left: Vec<C64>,
    /// `V^-1 vec(A' rho0)`
    pub right: Vec<C64>,
    /// `V^-1 S_A' V`
    pub a_tilde: Mat<C64>,
}

impl SpectralEngine {
    /// Diagonal of `G'(omega)` in the eigenbasis.
    pub fn resolvent(&self, omega: f64) -> Vec<C64> {
        self.eigenvalues
            .iter()
            .zip(&self.kernel)
            .map(|(&l, &k)| if k { ZERO } else { ONE / (-l - C64::new(0.0, omega)) })
            .collect()
    }

    /// Diagonal of `G'(t)` in the eigenbasis.
    pub fn decay(&self, t: f64) -> Vec<C64> {
        self.eigenvalues
            .iter()
            .zip(&self.kernel)
            .map(|(&l, &k)| if k { ZERO } else { (l * t).exp() })
            .collect()
    }

    pub fn a_tilde_times(&self, v: &[C64]) -> Vec<C64> {
        matvec(self.a_tilde.as_ref(), v)
    }

    pub fn times_a_tilde(&self, v: &[C64]) -> Vec<C64> {
        vecmat(v, self.a_tilde.as_ref())
    }
}

#[derive(Debug)]
pub struct Liouvillian {
    matrix: SuperOperator,
    decomposition: SpectralDecomposition,
    rho0: DensityMatrix,
    meas: Operator,
    beta: f64,
    a_mean: f64,
    kernel: Vec<bool>,
    engine: OnceLock<SpectralEngine>,
}

impl Liouvillian {
    /// Builds `-i[H, .] + sum D + beta^2 (A . A - {A^2, .}/2)`, diagonalizes it
    /// and extracts the unique steady state.
    pub fn build(h: &Operator, dissipators: &[DissipatorSpec], a: &Operator, beta: f64) -> Result<Self> {
        let matrix = assemble(h, dissipators, a, beta)?;
        Self::from_matrix(matrix, a, beta)
    }

    /// As [`Liouvillian::build`], optionally leaving the measurement
    /// dephasing out of the generator while keeping `beta` for prefactors.
    pub fn build_with_damping(
        h: &Operator,
        dissipators: &[DissipatorSpec],
        a: &Operator,
        beta: f64,
        measurement_damping: bool,
    ) -> Result<Self> {
        let matrix = assemble(h, dissipators, a, if measurement_damping { beta } else { 0.0 })?;
        Self::from_matrix(matrix, a, beta)
    }

    /// Wraps an already assembled generator. The measurement strength only
    /// enters spectral prefactors here; any measurement damping must already
    /// be part of `matrix`.
    pub fn from_matrix(matrix: SuperOperator, a: &Operator, beta: f64) -> Result<Self> {
        check_common(&matrix, a, beta)?;
        let mut decomposition = eig_general(matrix.as_mat())?;
        let kernel = kernel_mask(&decomposition);
        let count = kernel.iter().filter(|&&k| k).count();
        let m = match count {
            0 => {
                let smallest = decomposition.eigenvalues.iter().fold(f64::INFINITY, |m, l| m.min(l.norm()));
                return Err(Error::NoSteadyState {
                    smallest,
                    threshold: steady_threshold(&decomposition),
                });
            }
            1 => kernel.iter().position(|&k| k).unwrap_or(0),
            n => return Err(Error::MultipleSteadyStates { count: n }),
        };
        for (j, l) in decomposition.eigenvalues.iter().enumerate() {
            if j != m && l.re >= 0.0 {
                return Err(Error::UnstableMode { re: l.re, im: l.im });
            }
        }
        decomposition.steady_index = Some(m);
        let column: Vec<C64> = (0..decomposition.len()).map(|i| decomposition.vectors[(i, m)]).collect();
        let rho0 = DensityMatrix::normalized(&devectorize(&column)?)?;
        let residual = matrix.apply(rho0.as_operator())?.frobenius_norm();
        if residual > 1e-9 * matrix.frobenius_norm().max(f64::MIN_POSITIVE) {
            return Err(Error::NoSteadyState {
                smallest: residual,
                threshold: 1e-9 * matrix.frobenius_norm(),
            });
        }
        Ok(Self::assemble_struct(matrix, decomposition, rho0, a, beta, kernel))
    }

    /// Like [`Liouvillian::build`] but with a caller-supplied stationary state
    /// and no uniqueness requirement. Every eigenvalue passing the steady
    /// threshold is dropped from `G'`. Intended for undamped dynamics.
    pub fn build_with_state(
        h: &Operator,
        dissipators: &[DissipatorSpec],
        a: &Operator,
        beta: f64,
        rho0: DensityMatrix,
    ) -> Result<Self> {
        let matrix = assemble(h, dissipators, a, beta)?;
        check_common(&matrix, a, beta)?;
        if rho0.dim() != a.dim() {
            return Err(Error::DimensionMismatch("rho0 and measurement operator differ".into()));
        }
        let residual = matrix.apply(rho0.as_operator())?.frobenius_norm();
        if residual > 1e-9 * matrix.frobenius_norm().max(1.0) {
            return Err(Error::InvalidDensityMatrix(format!(
                "supplied state is not stationary (|L rho| = {residual:.3e})"
            )));
        }
        let decomposition = eig_general(matrix.as_mat())?;
        let kernel = kernel_mask(&decomposition);
        Ok(Self::assemble_struct(matrix, decomposition, rho0, a, beta, kernel))
    }

    fn assemble_struct(
        matrix: SuperOperator,
        decomposition: SpectralDecomposition,
        rho0: DensityMatrix,
        a: &Operator,
        beta: f64,
        kernel: Vec<bool>,
    ) -> Self {
        let a_mean = a.matmul(rho0.as_operator()).trace().re;
        Self {
            matrix,
            decomposition,
            rho0,
            meas: a.clone(),
            beta,
            a_mean,
            kernel,
            engine: OnceLock::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.meas.dim()
    }

    pub fn matrix(&self) -> &SuperOperator {
        &self.matrix
    }

    pub fn decomposition(&self) -> &SpectralDecomposition {
        &self.decomposition
    }

    pub fn steady_state(&self) -> &DensityMatrix {
        &self.rho0
    }

    pub fn measurement(&self) -> &Operator {
        &self.meas
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `Tr(A rho0)`
    pub fn a_mean(&self) -> f64 {
        self.a_mean
    }

    pub fn kernel(&self) -> &[bool] {
        &self.kernel
    }

    pub fn eigenvalues(&self) -> &[C64] {
        &self.decomposition.eigenvalues
    }

    /// Largest `|Re lambda|`, the fastest deterministic rate.
    pub fn max_decay_rate(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0, |m, l| m.max(l.re.abs()))
    }

    /// Slowest non-kernel decay rate.
    pub fn slowest_decay_rate(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .zip(&self.kernel)
            .filter(|(_, &k)| !k)
            .fold(f64::INFINITY, |m, (l, _)| m.min(l.re.abs()))
    }

    fn check_dim(&self, x: &Operator) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "operator of dimension {} applied to a system of dimension {}",
                x.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `e^{L t} x` for `t >= 0`; returns `x` unchanged at `t = 0`.
    pub fn propagate(&self, t: f64, x: &Operator) -> Result<Operator> {
        self.check_dim(x)?;
        if t < 0.0 || !t.is_finite() {
            return Err(Error::NegativeTime(t));
        }
        if t == 0.0 {
            return Ok(x.clone());
        }
        devectorize(&self.propagate_vec(t, &vectorize(x)))
    }

    pub(crate) fn propagate_vec(&self, t: f64, v: &[C64]) -> Vec<C64> {
        let w: Vec<C64> = self.eigenvalues().iter().map(|&l| (l * t).exp()).collect();
        self.decomposition.apply_diag(&w, v)
    }

    /// `G'(t) x = e^{L t} x - rho0 Tr(x)` for `t > 0`.
    pub fn gprime_apply_time(&self, t: f64, x: &Operator) -> Result<Operator> {
        self.check_dim(x)?;
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::NonPositiveTime(t));
        }
        let w = self.engine().decay(t);
        devectorize(&self.decomposition.apply_diag(&w, &vectorize(x)))
    }

    /// `G'(omega) x = int_0^inf e^{i omega t} G'(t) x dt`.
    pub fn gprime_apply_freq(&self, omega: f64, x: &Operator) -> Result<Operator> {
        self.check_dim(x)?;
        let w = self.engine().resolvent(omega);
        devectorize(&self.decomposition.apply_diag(&w, &vectorize(x)))
    }

    /// Measurement superoperator; `centered` subtracts `Tr(A rho0)`.
    pub fn a_super(&self, x: &Operator, centered: bool) -> Result<Operator> {
        a_super_apply(&self.meas, if centered { self.a_mean } else { 0.0 }, x)
    }

    /// Lazily built eigenbasis data shared by all spectra of this generator.
    pub fn engine(&self) -> &SpectralEngine {
        self.engine.get_or_init(|| {
            let d = &self.decomposition;
            let n = d.len();
            let dim = self.dim();
            let centered = {
                let mut c = self.meas.clone();
                for i in 0..dim {
                    c.set(i, i, c.get(i, i) - C64::new(self.a_mean, 0.0));
                }
                c
            };
            // Tr(B devec(v)) = sum_{ij} B_ji v_{j d + i} = vec(B^T) . v
            let bt = vectorize(&centered.transpose());
            let left = vecmat(&bt, d.vectors.as_ref());
            let a_prime_rho = a_super_apply(&self.meas, self.a_mean, self.rho0.as_operator())
                .expect("dimensions are consistent");
            let right = matvec(d.inverse.as_ref(), &vectorize(&a_prime_rho));
            let sa = a_super_matrix(&self.meas, self.a_mean).expect("dimensions are consistent");
            let a_tilde = &d.inverse * (sa.as_mat() * &d.vectors);
            debug_assert_eq!(a_tilde.nrows(), n);
            SpectralEngine {
                eigenvalues: d.eigenvalues.clone(),
                kernel: self.kernel.clone(),
                left,
                right,
                a_tilde,
            }
        })
    }
}

fn steady_threshold(d: &SpectralDecomposition) -> f64 {
    (STEADY_REL_TOL * d.max_abs_eigenvalue()).max(STEADY_ABS_FLOOR)
}

fn kernel_mask(d: &SpectralDecomposition) -> Vec<bool> {
    let thr = steady_threshold(d);
    d.eigenvalues.iter().map(|l| l.norm() <= thr).collect()
}

fn check_common(matrix: &SuperOperator, a: &Operator, beta: f64) -> Result<()> {
    vectorization_self_test()?;
    if matrix.hilbert_dim() != a.dim() {
        return Err(Error::DimensionMismatch(format!(
            "generator acts on dimension {}, measurement operator has {}",
            matrix.hilbert_dim(),
            a.dim()
        )));
    }
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::InvalidArgument(format!("beta must be finite and >= 0, got {beta}")));
    }
    let dev = a.hermitian_deviation();
    if dev > HERMITIAN_INPUT_TOL {
        return Err(Error::NonHermitianInput {
            what: "measurement operator",
            deviation: dev,
        });
    }
    // Tr(L X) = 0 for every X: rows i*d+i of the matrix sum to zero.
    let d = matrix.hilbert_dim();
    let mut worst = 0.0_f64;
    for col in 0..matrix.side() {
        let s: C64 = (0..d).map(|i| matrix.get(i * d + i, col)).sum();
        worst = worst.max(s.norm());
    }
    if worst > 1e-9 * matrix.frobenius_norm().max(1.0) {
        return Err(Error::NotTracePreserving(worst));
    }
    Ok(())
}

/// The generator [`Liouvillian::build`] would diagonalize, without any
/// steady-state requirement.
pub fn assemble_generator(h: &Operator, dissipators: &[DissipatorSpec], a: &Operator, beta: f64) -> Result<SuperOperator> {
    assemble(h, dissipators, a, beta)
}

fn assemble(h: &Operator, dissipators: &[DissipatorSpec], a: &Operator, beta: f64) -> Result<SuperOperator> {
    if h.dim() != a.dim() {
        return Err(Error::DimensionMismatch(format!(
            "Hamiltonian has dimension {}, measurement operator {}",
            h.dim(),
            a.dim()
        )));
    }
    for (what, op) in [("Hamiltonian", h), ("measurement operator", a)] {
        if !op.is_finite() {
            return Err(Error::InvalidArgument(format!("{what} has non-finite entries")));
        }
        let dev = op.hermitian_deviation();
        if dev > HERMITIAN_INPUT_TOL {
            return Err(Error::NonHermitianInput { what, deviation: dev });
        }
    }
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::InvalidArgument(format!("beta must be finite and >= 0, got {beta}")));
    }
    let mut total = coherent_superop(h)?;
    for spec in dissipators {
        total = &total + &spec.to_superop(h.dim())?;
    }
    if beta > 0.0 {
        total = &total + &measurement_damping_superop(a, beta)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{c, pauli};
    use rand::{Rng, SeedableRng};

    fn spin(wx: f64, gamma: f64, beta: f64) -> Liouvillian {
        let [sx, _, sz] = pauli();
        let h = sx.scale_real(wx / 2.0);
        let d = DissipatorSpec::relaxation_whole(gamma, DensityMatrix::maximally_mixed(2));
        Liouvillian::build(&h, &[d], &sz, beta).unwrap()
    }

    fn random_herm(d: usize, rng: &mut impl Rng) -> Operator {
        Operator::from_fn(d, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).hermitian_part()
    }

    fn random_model(d: usize, seed: u64) -> Liouvillian {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let h = random_herm(d, &mut rng);
        let a = random_herm(d, &mut rng);
        let jumps: Vec<DissipatorSpec> = (0..2)
            .map(|_| {
                let l = Operator::from_fn(d, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
                DissipatorSpec::custom(0.5, lindblad_dissipator(&l).unwrap())
            })
            .collect();
        Liouvillian::build(&h, &jumps, &a, 0.7).unwrap()
    }

    fn max_diff(a: &Operator, b: &Operator) -> f64 {
        (a - b).max_abs()
    }

    #[test]
    fn single_spin_generator_action() {
        let [_, sy, sz] = pauli();
        let (wx, g) = (1.3, 0.2);
        let l = spin(wx, g, 0.0);
        let got = l.matrix().apply(&sz).unwrap();
        let expect = &sy.scale_real(-wx) - &sz.scale_real(g);
        assert!(max_diff(&got, &expect) < 1e-14);
    }

    #[test]
    fn zero_generator() {
        let [_, _, sz] = pauli();
        let m = assemble(&Operator::zeros(2), &[], &sz, 0.0).unwrap();
        assert_eq!(m.frobenius_norm(), 0.0);
        assert!(matches!(
            Liouvillian::from_matrix(m, &sz, 0.0),
            Err(Error::MultipleSteadyStates { count: 4 })
        ));
    }

    #[test]
    fn measurement_dephasing_rates() {
        let [sx, sy, sz] = pauli();
        let beta = 0.8;
        let m = assemble(&Operator::zeros(2), &[], &sz, beta).unwrap();
        let id = Operator::identity(2);
        for (op, rate) in [(&id, 0.0), (&sx, -2.0 * beta * beta), (&sy, -2.0 * beta * beta), (&sz, 0.0)] {
            let got = m.apply(op).unwrap();
            assert!(max_diff(&got, &op.scale_real(rate)) < 1e-14);
        }
    }

    #[test]
    fn relaxation_dissipator_properties() {
        let rho_e = DensityMatrix::from_bloch([0.1, 0.2, 0.6]).unwrap();
        let rho_n = DensityMatrix::from_bloch([-0.3, 0.0, 0.2]).unwrap();
        let dims = (2, 2);
        let d = isotropic_spin_dissipator(dims, Target::Second, 0.3, &rho_e).unwrap();
        let fixed = kron(rho_n.as_operator(), rho_e.as_operator());
        assert!(d.apply(&fixed).unwrap().max_abs() < 1e-15);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x = random_herm(4, &mut rng);
        assert!(d.apply(&x).unwrap().trace().norm() < 1e-14);

        let dn = isotropic_spin_dissipator(dims, Target::First, 0.3, &rho_n).unwrap();
        assert!(dn.apply(&fixed).unwrap().max_abs() < 1e-15);

        let half = DensityMatrix::maximally_mixed(2);
        let whole = isotropic_spin_dissipator((1, 2), Target::Whole, 0.4, &half).unwrap();
        let y = random_herm(2, &mut rng);
        let expect = (&y - &Operator::identity(2).scale(y.trace() * 0.5)).scale_real(-0.4);
        assert!(max_diff(&whole.apply(&y).unwrap(), &expect) < 1e-15);
        assert!(isotropic_spin_dissipator((3, 2), Target::First, 0.1, &half).is_err());
    }

    #[test]
    fn single_spin_steady_state_is_mixed() {
        for wx in [0.0, 1.0, 3.0] {
            let l = spin(wx, 0.1, 0.5);
            let rho = l.steady_state().as_operator();
            assert!(max_diff(rho, &Operator::identity(2).scale_real(0.5)) < 1e-12);
        }
    }

    #[test]
    fn undamped_spin_has_degenerate_kernel() {
        let [sx, _, sz] = pauli();
        let r = Liouvillian::build(&sx.scale_real(0.5), &[], &sz, 0.0);
        assert!(matches!(r, Err(Error::MultipleSteadyStates { count: 2 })));
    }

    #[test]
    fn non_hermitian_inputs_rejected() {
        let [sx, sy, sz] = pauli();
        let bad = &sx + &sy.scale(I);
        assert!(matches!(
            Liouvillian::build(&bad, &[], &sz, 0.0),
            Err(Error::NonHermitianInput { .. })
        ));
    }

    #[test]
    fn propagate_examples() {
        let [_, _, sz] = pauli();
        let l = spin(1.0, 0.0001, 0.0);
        let x = Operator::from_fn(2, |i, j| c(i as f64 + 0.3, j as f64 - 0.1));
        assert_eq!(l.propagate(0.0, &x).unwrap(), x);
        assert!(matches!(l.propagate(-1.0, &x), Err(Error::NegativeTime(_))));
        // half a Bloch rotation about x flips sigma_z (damping factor e^{-gamma pi})
        let t = std::f64::consts::PI;
        let got = l.propagate(t, &sz).unwrap();
        let expect = sz.scale_real(-(-0.0001 * t).exp());
        assert!(max_diff(&got, &expect) < 1e-10);
    }

    #[test]
    fn gprime_examples() {
        let l = random_model(3, 11);
        let rho0 = l.steady_state().as_operator().clone();
        for t in [0.1, 1.0, 5.0] {
            assert!(l.gprime_apply_time(t, &rho0).unwrap().max_abs() < 1e-12);
        }
        assert!(l.gprime_apply_freq(0.7, &rho0).unwrap().max_abs() < 1e-12);
        assert!(matches!(l.gprime_apply_time(0.0, &rho0), Err(Error::NonPositiveTime(_))));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x = Operator::from_fn(3, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        for t in [0.2, 2.0] {
            let g = l.gprime_apply_time(t, &x).unwrap();
            assert!(g.trace().norm() < 1e-12);
            let alt = &l.propagate(t, &x).unwrap() - &rho0.scale(x.trace());
            assert!(max_diff(&g, &alt) < 1e-12);
        }
        let far = 60.0 / l.slowest_decay_rate();
        assert!(l.gprime_apply_time(far, &x).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn resolvent_of_single_spin() {
        // Oracle: sigma_z component of int_0^inf e^{-gamma t} (sz cos - sy sin) dt
        let [_, _, sz] = pauli();
        let (wx, g) = (1.0, 0.3);
        let l = spin(wx, g, 0.0);
        let got = l.gprime_apply_freq(0.0, &sz).unwrap();
        let zc = got.matmul(&sz).trace().re / 2.0;
        assert!((zc - g / (g * g + wx * wx)).abs() < 1e-12);
    }

    #[test]
    fn resolvent_matches_time_quadrature() {
        // Oracle: Simpson quadrature of e^{i omega t} G'(t) x over [0, 40/rate].
        let l = random_model(2, 4);
        let x = Operator::from_fn(2, |i, j| c(0.3 + i as f64, 0.2 * j as f64 - 0.4)).hermitian_part();
        let tmax = 40.0 / l.slowest_decay_rate();
        let n = 20_000usize;
        let h = tmax / n as f64;
        for omega in [-1.3, 0.0, 0.4, 2.0] {
            let mut acc = Operator::zeros(2);
            for k in 0..=n {
                let t = k as f64 * h;
                let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                let g = if k == 0 {
                    &x - &l.steady_state().as_operator().scale(x.trace())
                } else {
                    l.gprime_apply_time(t, &x).unwrap()
                };
                acc = &acc + &g.scale(C64::new(0.0, omega * t).exp() * (w * h / 3.0));
            }
            let exact = l.gprime_apply_freq(omega, &x).unwrap();
            assert!((&acc - &exact).max_abs() <= 1e-4 * exact.max_abs().max(1e-3));
            // conjugation symmetry for Hermitian input
            let neg = l.gprime_apply_freq(-omega, &x).unwrap();
            assert!((&neg - &exact.adjoint()).max_abs() < 1e-10);
        }
    }

    #[test]
    fn a_super_examples() {
        let [_, _, sz] = pauli();
        let half = Operator::identity(2).scale_real(0.5);
        let got = a_super_apply(&sz, 0.0, &half).unwrap();
        assert!(max_diff(&got, &sz.scale_real(0.5)) < 1e-15);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let a = random_herm(3, &mut rng);
        let x = Operator::from_fn(3, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let off = 0.37;
        let tr = a_super_apply(&a, off, &x).unwrap().trace();
        let expect = a.matmul(&x).trace() - x.trace() * off;
        assert!((tr - expect).norm() < 1e-14);
        let m = a_super_matrix(&a, off).unwrap();
        assert!(max_diff(&m.apply(&x).unwrap(), &a_super_apply(&a, off, &x).unwrap()) < 1e-14);
        assert!(a_super_apply(&a, 0.0, &sz).is_err());
    }

    #[test]
    fn random_models_satisfy_invariants() {
        for seed in 0..8 {
            let l = random_model(3, seed);
            let rho0 = l.steady_state().as_operator();
            let res = l.matrix().apply(rho0).unwrap().frobenius_norm();
            assert!(res <= 1e-9 * l.matrix().frobenius_norm());
            let kernel = l.kernel().iter().filter(|&&k| k).count();
            assert_eq!(kernel, 1);
            for (lam, k) in l.eigenvalues().iter().zip(l.kernel()) {
                if !k {
                    assert!(lam.re < 0.0);
                }
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 50);
            let x = random_herm(3, &mut rng);
            let (t1, t2) = (0.3, 0.9);
            let two = l.propagate(t1, &l.propagate(t2, &x).unwrap()).unwrap();
            let one = l.propagate(t1 + t2, &x).unwrap();
            assert!(max_diff(&two, &one) < 1e-8);
            assert!(one.hermitian_deviation() < 1e-9);
            assert!((one.trace() - x.trace()).norm() < 1e-9);
            let gg = l.gprime_apply_time(t1, &l.gprime_apply_time(t2, &x).unwrap()).unwrap();
            let g = l.gprime_apply_time(t1 + t2, &x).unwrap();
            assert!(max_diff(&gg, &g) < 1e-8);
        }
    }
}
