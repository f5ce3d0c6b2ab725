//! Multi-time moments, compact cumulants and the polyspectra S2, S3, S4 of
//! the detector output, plus sum-rule, Zeno and susceptibility checks.
//!
//! Frequency-domain evaluations work in the eigenbasis of the Liouvillian:
//! with `D(w)_j = 1/(-lambda_j - i w)` (zero on the kernel),
//! `l_j = Tr((A - a) V_j)`, `r = V^-1 vec(A' rho0)` and `At = V^-1 S_A' V`,
//!
//! ```text
//! S3 = b^6 sum_perm  l D(w_s3) At D(-w_s1) r
//! S4 = b^8 sum_perm { [l D(w_s4) At] D(w_s3 + w_s4) [At D(-w_s1) r]
//!                     + g(w_s4) i/(w_s3 + w_s4) g(-w_s1) }
//! ```
//!
//! with `g(w) = l D(w) r`. The second line restores the crossing and nested
//! pair products that the single propagator chain leaves in the fourth
//! cumulant; `s4_chain` keeps the chain alone for comparison.

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liouvillian::{a_super_apply, Liouvillian, SpectralEngine};
use crate::operator::{DensityMatrix, Operator, C64, I, ZERO};

/// Relative bound on imaginary parts of quantities that must be real.
pub const IMAG_REL_TOL: f64 = 1e-9;

fn check_real(what: &'static str, value: C64, scale: f64) -> Result<f64> {
    let bound = IMAG_REL_TOL * scale.max(value.norm());
    if !value.is_finite() {
        return Err(Error::InvalidArgument(format!("{what} is not finite")));
    }
    if value.im.abs() > bound {
        return Err(Error::ImaginaryResidue {
            what,
            residue: value.im.abs(),
            bound,
        });
    }
    Ok(value.re)
}

fn sorted_distinct(times: &[f64]) -> Result<Vec<f64>> {
    if times.is_empty() {
        return Err(Error::NoTimes);
    }
    if let Some(&t) = times.iter().find(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite time {t}")));
    }
    let mut t = times.to_vec();
    t.sort_by(f64::total_cmp);
    if t.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::EqualTimes);
    }
    Ok(t)
}

fn op_norm(a: &Operator) -> f64 {
    a.spectral_radius_hermitian().unwrap_or_else(|_| a.frobenius_norm())
}

/// `<z(t_n) ... z(t_1)> = b^{2n} Tr[A G(t_n - t_{n-1}) A ... G(t_2 - t_1) A rho0]`
/// for distinct times (any order; sorted internally).
pub fn moment_multitime(l: &Liouvillian, times: &[f64], beta: f64) -> Result<f64> {
    moment_multitime_from(l, l.steady_state(), times, beta)
}

/// As [`moment_multitime`] with the initial state supplied explicitly.
pub fn moment_multitime_from(l: &Liouvillian, rho: &DensityMatrix, times: &[f64], beta: f64) -> Result<f64> {
    let t = sorted_distinct(times)?;
    let a = l.measurement();
    let mut x = rho.as_operator().clone();
    for w in t.windows(2) {
        x = a_super_apply(a, 0.0, &x)?;
        x = l.propagate(w[1] - w[0], &x)?;
    }
    let n = t.len() as i32;
    let value = a.matmul(&x).trace() * beta.powi(2 * n);
    let scale = beta.powi(2 * n) * op_norm(a).powi(n);
    check_real("moment", value, scale)
}

/// All set partitions of `{0, .., n-1}`.
pub fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    let mut current: Vec<Vec<usize>> = Vec::new();
    fn rec(k: usize, n: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if k == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..cur.len() {
            cur[b].push(k);
            rec(k + 1, n, cur, out);
            cur[b].pop();
        }
        cur.push(vec![k]);
        rec(k + 1, n, cur, out);
        cur.pop();
    }
    rec(0, n, &mut current, &mut out);
    out
}

/// Joint cumulant assembled from moments,
/// `C = sum_pi (-1)^{|pi|-1} (|pi|-1)! prod_{B in pi} M(B)`.
pub fn cumulant_from_moments(l: &Liouvillian, times: &[f64], beta: f64, n: usize) -> Result<f64> {
    if !(2..=4).contains(&n) {
        return Err(Error::UnsupportedOrder(n));
    }
    if times.len() != n {
        return Err(Error::InvalidArgument(format!(
            "order {n} cumulant needs {n} times, got {}",
            times.len()
        )));
    }
    let t = sorted_distinct(times)?;
    let mut total = 0.0;
    for partition in set_partitions(n) {
        let k = partition.len();
        let coeff = (1..k).product::<usize>() as f64 * if k % 2 == 1 { 1.0 } else { -1.0 };
        let mut prod = 1.0;
        for block in &partition {
            let bt: Vec<f64> = block.iter().map(|&i| t[i]).collect();
            prod *= moment_multitime(l, &bt, beta)?;
        }
        total += coeff * prod;
    }
    Ok(total)
}

/// `b^{2n} Tr[A' G'(t_n - t_{n-1}) A' ... G'(t_2 - t_1) A' rho0]` for n = 2..4
/// (times sorted internally). For n = 2 and 3 this is the joint cumulant.
pub fn cumulant_chain(l: &Liouvillian, times: &[f64], beta: f64) -> Result<f64> {
    let n = times.len();
    if !(2..=4).contains(&n) {
        return Err(Error::UnsupportedOrder(n));
    }
    let t = sorted_distinct(times)?;
    let e = l.engine();
    let mut v = e.right.clone();
    for (k, w) in t.windows(2).enumerate() {
        if k > 0 {
            v = e.a_tilde_times(&v);
        }
        for (vj, dj) in v.iter_mut().zip(e.decay(w[1] - w[0])) {
            *vj *= dj;
        }
    }
    let value: C64 = e.left.iter().zip(&v).map(|(a, b)| a * b).sum::<C64>() * beta.powi(2 * n as i32);
    let scale = beta.powi(2 * n as i32) * (2.0 * op_norm(l.measurement()) + l.a_mean().abs()).powi(n as i32);
    check_real("compact cumulant", value, scale)
}

pub fn cumulant3_time(l: &Liouvillian, times: [f64; 3], beta: f64) -> Result<f64> {
    cumulant_chain(l, &times, beta)
}

/// Fourth joint cumulant. For sorted times `s1 < s2 < s3 < s4` the single
/// `G'` chain is not enough: the crossing and nested pairings survive,
///
/// ```text
/// C4 = chain(s) - P(s4, s2) P(s3, s1) - P(s4, s1) P(s3, s2)
/// ```
///
/// with `P` the second cumulant. Only the sequential pairing is absorbed by
/// the chain.
pub fn cumulant4_time(l: &Liouvillian, times: [f64; 4], beta: f64) -> Result<f64> {
    let s = sorted_distinct(&times)?;
    let chain = cumulant_chain(l, &s, beta)?;
    let p = |a: usize, b: usize| cumulant_chain(l, &[s[b], s[a]], beta);
    Ok(chain - p(3, 1)? * p(2, 0)? - p(3, 0)? * p(2, 1)?)
}

/// The single-chain term of [`cumulant4_time`] on its own.
pub fn cumulant4_chain_time(l: &Liouvillian, times: [f64; 4], beta: f64) -> Result<f64> {
    cumulant_chain(l, &times, beta)
}

/// Per-frequency vectors shared by the S3 and S4 permutation sums.
struct FreqVectors {
    /// `(l o D(w)) At`
    left: Vec<C64>,
    /// `D(-w) o r`
    right_bare: Vec<C64>,
    /// `At (D(-w) o r)`, only for S4
    right: Option<Vec<C64>>,
    /// `g(w) = l D(w) r`, `g(-w)`
    g_fwd: C64,
    g_bwd: C64,
    /// `h(w) = l D(w)^2 r`, `h(-w)`
    h_fwd: C64,
    h_bwd: C64,
}

impl FreqVectors {
    fn new(e: &SpectralEngine, omega: f64, with_right: bool) -> Self {
        let dp = e.resolvent(omega);
        let dm = e.resolvent(-omega);
        let ld: Vec<C64> = e.left.iter().zip(&dp).map(|(a, b)| a * b).collect();
        let right_bare: Vec<C64> = e.right.iter().zip(&dm).map(|(a, b)| a * b).collect();
        let g_fwd = ld.iter().zip(&e.right).map(|(a, b)| a * b).sum();
        let g_bwd = e.left.iter().zip(&right_bare).map(|(a, b)| a * b).sum();
        let h_fwd = ld.iter().zip(&e.right).zip(&dp).map(|((a, b), d)| a * b * d).sum();
        let h_bwd = e.left.iter().zip(&right_bare).zip(&dm).map(|((a, b), d)| a * b * d).sum();
        let right = with_right.then(|| e.a_tilde_times(&right_bare));
        Self {
            left: e.times_a_tilde(&ld),
            right_bare,
            right,
            g_fwd,
            g_bwd,
            h_fwd,
            h_bwd,
        }
    }

    /// Power spectrum without prefactor, `g(w) + g(-w)`.
    fn s(&self) -> C64 {
        self.g_fwd + self.g_bwd
    }

    /// `int |tau| P(tau) e^{i w tau} d tau` without prefactor.
    fn k(&self) -> C64 {
        self.h_fwd + self.h_bwd
    }
}

fn dot_with_abs(a: &[C64], b: &[C64]) -> (C64, f64) {
    a.iter().zip(b).fold((ZERO, 0.0), |(s, m), (x, y)| {
        let p = x * y;
        (s + p, m + p.norm())
    })
}

/// Power spectrum `b^4 (Tr[A' G'(w) A' rho0] + Tr[A' G'(-w) A' rho0]) (+ b^2/4)`.
pub fn s2(l: &Liouvillian, omega: f64, beta: f64, include_shot_noise: bool) -> Result<f64> {
    let e = l.engine();
    let dp = e.resolvent(omega);
    let dm = e.resolvent(-omega);
    let (mut sum, mut scale) = (ZERO, 0.0);
    for j in 0..dp.len() {
        let p = e.left[j] * e.right[j];
        sum += p * (dp[j] + dm[j]);
        scale += p.norm() * (dp[j].norm() + dm[j].norm());
    }
    let b4 = beta.powi(4);
    let q = check_real("power spectrum", sum * b4, scale * b4)?;
    Ok(q + if include_shot_noise { beta * beta / 4.0 } else { 0.0 })
}

fn s3_from(fv: [&FreqVectors; 3]) -> (C64, f64) {
    let (mut sum, mut scale) = (ZERO, 0.0);
    for k in 0..3 {
        for i in 0..3 {
            if i != k {
                let (s, m) = dot_with_abs(&fv[k].left, &fv[i].right_bare);
                sum += s;
                scale += m;
            }
        }
    }
    (sum, scale)
}

/// Bispectrum at `(w1, w2, -w1 - w2)`.
pub fn s3(l: &Liouvillian, omega1: f64, omega2: f64, beta: f64) -> C64 {
    s3_with_scale(l, omega1, omega2, beta).0
}

/// Bispectrum together with the sum of absolute term magnitudes, the
/// natural scale for judging rounding noise.
pub fn s3_with_scale(l: &Liouvillian, omega1: f64, omega2: f64, beta: f64) -> (C64, f64) {
    let e = l.engine();
    let w = [omega1, omega2, -omega1 - omega2];
    let fv: Vec<FreqVectors> = w.iter().map(|&x| FreqVectors::new(e, x, false)).collect();
    let (s, m) = s3_from([&fv[0], &fv[1], &fv[2]]);
    let b6 = beta.powi(6);
    (s * b6, m * b6)
}

/// Which parts of the trispectrum to include.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum S4Parts {
    /// The `G'` chain only.
    Chain,
    /// Chain plus the sequential-pair term `g(w_s4) i/(w_s3 + w_s4) g(-w_s1)`.
    /// Terms whose middle frequency vanishes are skipped.
    Full,
    /// As `Full` on the cut `(w1, -w1, w2, -w2)`, with the two singular
    /// middle pairings replaced by their finite overlap contribution.
    Cut,
}

fn s4_from(e: &SpectralEngine, w: [f64; 4], fv: [&FreqVectors; 4], parts: S4Parts) -> (C64, f64) {
    let (mut sum, mut scale) = (ZERO, 0.0);
    let mut mid_cache: Vec<(usize, usize, Vec<C64>)> = Vec::with_capacity(6);
    let tiny = 1e-12 * w.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1e-300);
    for perm in (0..4).permutations(4) {
        let (s1, s3, s4) = (perm[0], perm[2], perm[3]);
        let key = (s3.min(s4), s3.max(s4));
        let mid = match mid_cache.iter().position(|(a, b, _)| (*a, *b) == key) {
            Some(p) => &mid_cache[p].2,
            None => {
                mid_cache.push((key.0, key.1, e.resolvent(w[s3] + w[s4])));
                &mid_cache.last().expect("just pushed").2
            }
        };
        let left = &fv[s4].left;
        let right = fv[s1].right.as_ref().expect("S4 vectors carry the right factor");
        for j in 0..mid.len() {
            let p = left[j] * mid[j] * right[j];
            sum += p;
            scale += p.norm();
        }
        if parts == S4Parts::Chain {
            continue;
        }
        let nu = w[s3] + w[s4];
        let singular = match parts {
            S4Parts::Cut => key == (0, 1) || key == (2, 3),
            _ => nu.abs() <= tiny,
        };
        if !singular && nu.abs() > tiny {
            let p = fv[s4].g_fwd * I / nu * fv[s1].g_bwd;
            sum += p;
            scale += p.norm();
        }
    }
    if parts == S4Parts::Cut {
        let p = -(fv[0].k() * fv[2].s() + fv[0].s() * fv[2].k());
        sum += p;
        scale += fv[0].k().norm() * fv[2].s().norm() + fv[0].s().norm() * fv[2].k().norm();
    }
    (sum, scale)
}

fn s4_eval(l: &Liouvillian, w: [f64; 4], beta: f64, parts: S4Parts) -> (C64, f64) {
    let e = l.engine();
    let fv: Vec<FreqVectors> = w.iter().map(|&x| FreqVectors::new(e, x, true)).collect();
    let (s, m) = s4_from(e, w, [&fv[0], &fv[1], &fv[2], &fv[3]], parts);
    let b8 = beta.powi(8);
    (s * b8, m * b8)
}

/// Trispectrum at `(w1, w2, w3, -w1 - w2 - w3)`, valid off the planes where
/// two of the four frequencies sum to zero.
pub fn s4(l: &Liouvillian, omega1: f64, omega2: f64, omega3: f64, beta: f64) -> C64 {
    s4_with_scale(l, omega1, omega2, omega3, beta).0
}

pub fn s4_with_scale(l: &Liouvillian, omega1: f64, omega2: f64, omega3: f64, beta: f64) -> (C64, f64) {
    s4_eval(l, [omega1, omega2, omega3, -omega1 - omega2 - omega3], beta, S4Parts::Full)
}

/// Only the `G'` chain permutation sum,
/// `b^8 sum_perm Tr[A' G'(w4) A' G'(w3 + w4) A' G'(w2 + w3 + w4) A' rho0]`.
/// This omits the sequential-pair contribution; see [`s4`].
pub fn s4_chain(l: &Liouvillian, omega1: f64, omega2: f64, omega3: f64, beta: f64) -> C64 {
    s4_eval(l, [omega1, omega2, omega3, -omega1 - omega2 - omega3], beta, S4Parts::Chain).0
}

/// Correlation spectrum `S4(w1, -w1, w2, -w2)` for `w1 != +-w2`, both
/// non-zero. The two pairings `{w1, -w1}`, `{w2, -w2}` are handled by
/// their finite overlap term
/// `-b^8 [K(w1) S(w2) + S(w1) K(w2)]`, `K(w) = int |tau| P(tau) e^{i w tau}`.
pub fn s4_correlation_cut(l: &Liouvillian, omega1: f64, omega2: f64, beta: f64) -> Result<f64> {
    let (v, scale) = s4_eval(l, [omega1, -omega1, omega2, -omega2], beta, S4Parts::Cut);
    check_real("trispectrum correlation cut", v, scale)
}

/// Chain-only correlation cut, `Re s4_chain(w1, -w1, w2)`.
pub fn s4_chain_correlation_cut(l: &Liouvillian, omega1: f64, omega2: f64, beta: f64) -> Result<f64> {
    let (v, scale) = s4_eval(l, [omega1, -omega1, omega2, -omega2], beta, S4Parts::Chain);
    check_real("trispectrum correlation cut", v, scale)
}

fn check_axis(axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::InvalidGrid("empty axis".into()));
    }
    if axis.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidGrid("non-finite frequency".into()));
    }
    if axis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("axis must be strictly increasing".into()));
    }
    Ok(())
}

pub fn s2_grid(l: &Liouvillian, omegas: &[f64], beta: f64, include_shot_noise: bool) -> Result<Vec<f64>> {
    check_axis(omegas)?;
    l.engine();
    omegas.par_iter().map(|&w| s2(l, w, beta, include_shot_noise)).collect()
}

/// Row-major `S3(ax1[i], ax2[j])` with the summed term magnitudes.
pub fn s3_grid_with_scale(l: &Liouvillian, ax1: &[f64], ax2: &[f64], beta: f64) -> Result<(Vec<C64>, Vec<f64>)> {
    check_axis(ax1)?;
    check_axis(ax2)?;
    let e = l.engine();
    let f1: Vec<FreqVectors> = ax1.par_iter().map(|&w| FreqVectors::new(e, w, false)).collect();
    let f2: Vec<FreqVectors> = ax2.par_iter().map(|&w| FreqVectors::new(e, w, false)).collect();
    let b6 = beta.powi(6);
    let out: Vec<(C64, f64)> = (0..ax1.len() * ax2.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / ax2.len(), idx % ax2.len());
            let f3 = FreqVectors::new(e, -ax1[i] - ax2[j], false);
            let (s, m) = s3_from([&f1[i], &f2[j], &f3]);
            (s * b6, m * b6)
        })
        .collect();
    Ok(out.into_iter().unzip())
}

pub fn s3_grid(l: &Liouvillian, ax1: &[f64], ax2: &[f64], beta: f64) -> Result<Vec<C64>> {
    Ok(s3_grid_with_scale(l, ax1, ax2, beta)?.0)
}

/// Row-major `S4(ax1[i], -ax1[i], ax2[j], -ax2[j])`. Bins with
/// `|w1| = |w2|` or a zero frequency lie on singular planes; there the
/// extra coincident pairings are skipped.
pub fn s4_cut_grid(l: &Liouvillian, ax1: &[f64], ax2: &[f64], beta: f64) -> Result<Vec<f64>> {
    cut_grid(l, ax1, ax2, beta, S4Parts::Cut)
}

/// Chain-only variant of [`s4_cut_grid`].
pub fn s4_chain_cut_grid(l: &Liouvillian, ax1: &[f64], ax2: &[f64], beta: f64) -> Result<Vec<f64>> {
    cut_grid(l, ax1, ax2, beta, S4Parts::Chain)
}

fn cut_grid(l: &Liouvillian, ax1: &[f64], ax2: &[f64], beta: f64, parts: S4Parts) -> Result<Vec<f64>> {
    check_axis(ax1)?;
    check_axis(ax2)?;
    let e = l.engine();
    let build = |axis: &[f64]| -> Vec<(FreqVectors, FreqVectors)> {
        axis.par_iter()
            .map(|&w| (FreqVectors::new(e, w, true), FreqVectors::new(e, -w, true)))
            .collect()
    };
    let f1 = build(ax1);
    let f2 = build(ax2);
    let b8 = beta.powi(8);
    (0..ax1.len() * ax2.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / ax2.len(), idx % ax2.len());
            let w = [ax1[i], -ax1[i], ax2[j], -ax2[j]];
            let (s, m) = s4_from(e, w, [&f1[i].0, &f1[i].1, &f2[j].0, &f2[j].1], parts);
            check_real("trispectrum correlation cut", s * b8, m * b8)
        })
        .collect()
}

/// `G_q(tau) = Tr[(A - a) G(|tau|) A rho0]`, the symmetrized autocorrelation.
pub fn gq_autocorrelation(l: &Liouvillian, tau: f64) -> Result<f64> {
    let a = l.measurement();
    let x = l.a_super(l.steady_state().as_operator(), false)?;
    let x = l.propagate(tau.abs(), &x)?;
    let mut centered = a.clone();
    for i in 0..a.dim() {
        centered.set(i, i, a.get(i, i) - C64::new(l.a_mean(), 0.0));
    }
    let v = centered.matmul(&x).trace();
    check_real("autocorrelation", v, op_norm(a).powi(2))
}

/// Trapezoid integral of `S2` (shot noise excluded) over `[-w_max, w_max]`.
pub fn integrated_noise_check(l: &Liouvillian, beta: f64, omega_max: f64, n_points: usize) -> Result<f64> {
    if n_points < 2 || !(omega_max > 0.0) {
        return Err(Error::InvalidGrid("need omega_max > 0 and at least two points".into()));
    }
    let h = 2.0 * omega_max / (n_points - 1) as f64;
    let grid: Vec<f64> = (0..n_points).map(|k| -omega_max + k as f64 * h).collect();
    let vals = s2_grid(l, &grid, beta, false)?;
    let inner: f64 = vals[1..n_points - 1].iter().sum();
    Ok(h * (inner + 0.5 * (vals[0] + vals[n_points - 1])))
}

/// Measurement strength and induced dephasing rate from the ratio `a` of
/// measured to expected peak height: `beta^2 = p gamma a`, `gamma_M = 2 beta^2`.
pub fn zeno_strength_estimate(a: f64, gamma: f64, p: f64) -> Result<(f64, f64)> {
    if !(a > 0.0) || !(gamma > 0.0) || !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need a > 0, gamma > 0 and 0 < p <= 1 (got a={a}, gamma={gamma}, p={p})"
        )));
    }
    let b2 = p * gamma * a;
    Ok((b2, 2.0 * b2))
}

/// `alpha(w) = i Tr(A G'(w) [A rho - rho A])` with `G'` from this generator.
pub fn susceptibility(l: &Liouvillian, omega: f64, rho: &DensityMatrix) -> Result<C64> {
    let a = l.measurement();
    let comm = a.commutator(rho.as_operator());
    let g = l.gprime_apply_freq(omega, &comm)?;
    Ok(I * a.matmul(&g).trace())
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FdtCheck {
    pub omega: f64,
    pub im_alpha: f64,
    pub s_q: f64,
    pub weight: f64,
    pub residual: f64,
}

/// Compares `Im alpha(w)` with `S_q(w) tanh(w / 2T)` using the stored
/// steady state; `temperature` is in energy units (`k_B = hbar = 1`).
pub fn fdt_check(l: &Liouvillian, omega: f64, temperature: f64) -> Result<FdtCheck> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {temperature}")));
    }
    let im_alpha = susceptibility(l, omega, l.steady_state())?.im;
    let s_q = s2(l, omega, 1.0, false)?;
    let weight = (omega / (2.0 * temperature)).tanh();
    Ok(FdtCheck {
        omega,
        im_alpha,
        s_q,
        weight,
        residual: im_alpha - s_q * weight,
    })
}

pub fn fdt_residual(l: &Liouvillian, omega: f64, temperature: f64) -> Result<f64> {
    Ok(fdt_check(l, omega, temperature)?.residual)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Full,
    S4CorrelationCut,
}

/// Spectrum values on a 1-D or 2-D angular-frequency grid, row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumGrid {
    pub order: usize,
    pub kind: GridKind,
    pub axes: Vec<Vec<f64>>,
    pub real: Vec<f64>,
    pub imag: Vec<f64>,
    pub beta: f64,
    #[serde(default)]
    pub model_hash: Option<String>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl SpectrumGrid {
    pub fn new(order: usize, kind: GridKind, axes: Vec<Vec<f64>>, values: &[C64], beta: f64) -> Result<Self> {
        let g = Self {
            order,
            kind,
            axes,
            real: values.iter().map(|v| v.re).collect(),
            imag: values.iter().map(|v| v.im).collect(),
            beta,
            model_hash: None,
            notes: Vec::new(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn from_real(order: usize, kind: GridKind, axes: Vec<Vec<f64>>, values: &[f64], beta: f64) -> Result<Self> {
        let v: Vec<C64> = values.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::new(order, kind, axes, &v, beta)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.order) {
            return Err(Error::UnsupportedOrder(self.order));
        }
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::InvalidGrid("one or two axes expected".into()));
        }
        for a in &self.axes {
            check_axis(a)?;
        }
        let n: usize = self.shape().iter().product();
        if self.real.len() != n || self.imag.len() != n {
            return Err(Error::InvalidGrid(format!("{} values for a grid of {n} points", self.real.len())));
        }
        if self.real.iter().chain(&self.imag).any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite spectrum value".into()));
        }
        if self.order == 2 {
            let scale = self.real.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
            if self.imag.iter().any(|v| v.abs() > 1e-9 * scale) {
                return Err(Error::InvalidGrid("power spectrum has an imaginary part".into()));
            }
            if self.real.iter().any(|&v| v < -1e-9 * scale) {
                return Err(Error::InvalidGrid("power spectrum is negative".into()));
            }
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.real
            .iter()
            .zip(&self.imag)
            .fold(0.0, |m, (r, i)| m.max(r.hypot(*i)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liouvillian::{lindblad_dissipator, DissipatorSpec};
    use crate::operator::{c, pauli};
    use rand::{Rng, SeedableRng};

    fn spin(wx: f64, gamma: f64, beta_damp: f64) -> Liouvillian {
        let [sx, _, sz] = pauli();
        let d = DissipatorSpec::relaxation_whole(gamma, DensityMatrix::maximally_mixed(2));
        Liouvillian::build(&sx.scale_real(wx / 2.0), &[d], &sz, beta_damp).unwrap()
    }

    fn random_model(d: usize, seed: u64, beta: f64) -> Liouvillian {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut herm = || {
            Operator::from_fn(d, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).hermitian_part()
        };
        let h = herm();
        let a = herm();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 1000);
        let jumps: Vec<DissipatorSpec> = (0..2)
            .map(|_| {
                let l = Operator::from_fn(d, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
                DissipatorSpec::custom(0.4, lindblad_dissipator(&l).unwrap())
            })
            .collect();
        Liouvillian::build(&h, &jumps, &a, beta).unwrap()
    }

    fn lorentz_pair(w: f64, wx: f64, g: f64) -> f64 {
        g / ((w + wx).powi(2) + g * g) + g / ((w - wx).powi(2) + g * g)
    }

    #[test]
    fn set_partition_counts() {
        let bell = [1, 1, 2, 5, 15];
        for (n, &b) in bell.iter().enumerate() {
            assert_eq!(set_partitions(n).len(), b);
        }
    }

    #[test]
    fn moment_examples() {
        let l = spin(1.0, 0.2, 0.0);
        assert!(moment_multitime(&l, &[0.3], 1.0).unwrap().abs() < 1e-15);
        let beta: f64 = 0.8;
        for tau in [0.1, 0.7, 2.5] {
            let m = moment_multitime(&l, &[1.0, 1.0 + tau], beta).unwrap();
            let expect = beta.powi(4) * (-0.2 * tau).exp() * tau.cos();
            assert!((m - expect).abs() < 1e-12);
        }
        assert!(matches!(moment_multitime(&l, &[1.0, 1.0], 1.0), Err(Error::EqualTimes)));
        assert!(matches!(moment_multitime(&l, &[], 1.0), Err(Error::NoTimes)));
        // odd moments of a high-temperature spin vanish
        let m3 = moment_multitime(&l, &[0.0, 0.4, 1.1], 1.0).unwrap();
        assert!(m3.abs() < 1e-14);
    }

    #[test]
    fn moments_linear_in_initial_state() {
        let l = random_model(3, 3, 0.5);
        let ra = DensityMatrix::maximally_mixed(3);
        let rb = l.steady_state().clone();
        let alpha = 0.3;
        let mix = &ra.as_operator().scale_real(alpha) + &rb.as_operator().scale_real(1.0 - alpha);
        let rm = DensityMatrix::new(mix).unwrap();
        let t = [0.1, 0.5, 1.6];
        let lhs = moment_multitime_from(&l, &rm, &t, 1.0).unwrap();
        let rhs = alpha * moment_multitime_from(&l, &ra, &t, 1.0).unwrap()
            + (1.0 - alpha) * moment_multitime_from(&l, &rb, &t, 1.0).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn compact_cumulants_match_moment_oracle() {
        for seed in 0..5 {
            let l = random_model(3, seed, 0.6);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 7);
            for _ in 0..5 {
                let mut t: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..3.0)).collect();
                t.sort_by(f64::total_cmp);
                let compact = [
                    cumulant_chain(&l, &t[..2], 1.0).unwrap(),
                    cumulant3_time(&l, [t[0], t[1], t[2]], 1.0).unwrap(),
                    cumulant4_time(&l, [t[0], t[1], t[2], t[3]], 1.0).unwrap(),
                ];
                for n in 2..=4 {
                    let oracle = cumulant_from_moments(&l, &t[..n], 1.0, n).unwrap();
                    let c = compact[n - 2];
                    assert!((c - oracle).abs() <= 1e-9 * oracle.abs().max(1e-6), "n={n} compact={c} oracle={oracle}");
                }
            }
        }
        let l = spin(1.0, 0.1, 0.0);
        assert!(matches!(cumulant_from_moments(&l, &[0.0, 1.0, 2.0, 3.0, 4.0], 1.0, 5), Err(Error::UnsupportedOrder(5))));
    }

    #[test]
    fn second_cumulant_is_autocorrelation() {
        let l = random_model(3, 9, 0.3);
        let beta: f64 = 0.7;
        for tau in [0.2, 1.0] {
            let c2 = cumulant_from_moments(&l, &[0.0, tau], beta, 2).unwrap();
            let g = gq_autocorrelation(&l, tau).unwrap();
            assert!((c2 - beta.powi(4) * g).abs() < 1e-12);
        }
    }

    #[test]
    fn cumulants_decay_with_gaps() {
        let l = random_model(3, 2, 0.5);
        let far = 80.0 / l.slowest_decay_rate();
        assert!(cumulant3_time(&l, [0.0, 0.5, far], 1.0).unwrap().abs() < 1e-12);
        assert!(cumulant4_time(&l, [0.0, far, far + 0.2, far + 0.5], 1.0).unwrap().abs() < 1e-12);
        let spin = spin(1.0, 0.1, 0.0);
        assert!(cumulant3_time(&spin, [0.0, 0.3, 1.2], 1.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn single_spin_power_spectrum() {
        for (wx, g) in [(1.0, 0.1), (1.0, 0.01), (0.0, 0.3)] {
            let l = spin(wx, g, 0.0);
            for k in 0..50 {
                let w = -3.0 + 0.1234 * k as f64;
                let got = s2(&l, w, 1.0, false).unwrap();
                let expect = lorentz_pair(w, wx, g);
                assert!((got - expect).abs() <= 1e-9 * expect);
            }
        }
        let l = spin(1.0, 0.1, 0.0);
        let peak = s2(&l, 1.0, 1.0, false).unwrap();
        assert!((peak - (10.0 + 0.1 / 4.01)).abs() < 1e-10);
    }

    #[test]
    fn zero_measurement_operator_is_pure_shot_noise() {
        let [sx, _, _] = pauli();
        let d = DissipatorSpec::relaxation_whole(0.2, DensityMatrix::maximally_mixed(2));
        let l = Liouvillian::build(&sx, &[d], &Operator::zeros(2), 0.0).unwrap();
        let beta: f64 = 1.7;
        for w in [-2.0, 0.0, 0.5] {
            assert!((s2(&l, w, beta, true).unwrap() - beta * beta / 4.0).abs() < 1e-15);
            assert_eq!(s3(&l, w, 0.3, beta), ZERO);
            assert_eq!(s4(&l, w, 0.3, -0.1, beta), ZERO);
        }
        assert_eq!(integrated_noise_check(&l, 1.0, 10.0, 101).unwrap(), 0.0);
        assert_eq!(cumulant_from_moments(&l, &[0.0, 0.5, 1.0], beta, 3).unwrap(), 0.0);
    }

    #[test]
    fn power_spectrum_is_even() {
        let l = random_model(3, 21, 0.4);
        for w in [0.1, 0.9, 2.7] {
            let a = s2(&l, w, 1.0, false).unwrap();
            let b = s2(&l, -w, 1.0, false).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs());
        }
    }

    #[test]
    fn higher_spectra_permutation_invariance() {
        let l = random_model(3, 13, 0.5);
        let (w1, w2) = (0.37, -1.1);
        let w3 = -w1 - w2;
        let a = s3(&l, w1, w2, 1.0);
        for (p, q) in [(w2, w1), (w1, w3), (w3, w2)] {
            assert!((s3(&l, p, q, 1.0) - a).norm() <= 1e-10 * a.norm());
        }
        let (u1, u2, u3) = (0.4, -0.9, 1.3);
        let u4 = -u1 - u2 - u3;
        let b = s4(&l, u1, u2, u3, 1.0);
        for (p, q, r) in [(u2, u1, u3), (u4, u2, u1), (u3, u4, u2)] {
            assert!((s4(&l, p, q, r, 1.0) - b).norm() <= 1e-10 * b.norm());
        }
        let c1 = s4_correlation_cut(&l, 0.5, 1.2, 1.0).unwrap();
        let c2 = s4_correlation_cut(&l, 1.2, 0.5, 1.0).unwrap();
        assert!((c1 - c2).abs() <= 1e-9 * c1.abs());
    }

    #[test]
    fn high_temperature_spin_has_no_bispectrum() {
        let l = spin(1.0, 0.1, 0.2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let v = s3(&l, rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), 1.0);
            assert!(v.norm() < 1e-12);
        }
    }

    #[test]
    fn grids_match_pointwise() {
        let l = random_model(3, 17, 0.3);
        let ax1 = [-1.0, 0.2, 0.9];
        let ax2 = [-0.5, 0.4];
        let g3 = s3_grid(&l, &ax1, &ax2, 0.9).unwrap();
        let g4 = s4_cut_grid(&l, &ax1, &ax2, 0.9).unwrap();
        for (i, &a) in ax1.iter().enumerate() {
            for (j, &b) in ax2.iter().enumerate() {
                assert!((g3[i * 2 + j] - s3(&l, a, b, 0.9)).norm() < 1e-13);
                let cut = s4_correlation_cut(&l, a, b, 0.9).unwrap();
                assert!((g4[i * 2 + j] - cut).abs() <= 1e-12 * cut.abs().max(1e-12));
            }
        }
        assert!(s2_grid(&l, &[1.0, 0.5], 1.0, true).is_err());
    }

    #[test]
    fn autocorrelation_examples() {
        let l = spin(1.3, 0.2, 0.0);
        assert!((gq_autocorrelation(&l, 0.0).unwrap() - 1.0).abs() < 1e-14);
        for tau in [-2.0, 0.5, 3.0] {
            let expect = (-0.2 * f64::abs(tau)).exp() * (1.3 * f64::abs(tau)).cos();
            assert!((gq_autocorrelation(&l, tau).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn undamped_autocorrelation_matches_heisenberg_picture() {
        // Oracle: (1/2) Tr(rho {A(t), A}) - <A>^2 with A(t) = e^{iHt} A e^{-iHt}.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let mut herm = || {
            Operator::from_fn(3, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).hermitian_part()
        };
        let h = herm();
        let a = herm();
        // any function of H is stationary; use a Gibbs-like state
        let rho = h.exp_hermitian(c(-0.7, 0.0)).unwrap();
        let rho = DensityMatrix::normalized(&rho).unwrap();
        let l = Liouvillian::build_with_state(&h, &[], &a, 0.0, rho.clone()).unwrap();
        let mean = a.matmul(rho.as_operator()).trace().re;
        for t in [0.0, 0.4, 1.7, 5.0] {
            let u = h.exp_hermitian(c(0.0, -t)).unwrap();
            let at = u.adjoint().matmul(&a).matmul(&u);
            let sym = at.anticommutator(&a).matmul(rho.as_operator()).trace().re / 2.0;
            let expect = sym - mean * mean;
            assert!((gq_autocorrelation(&l, t).unwrap() - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn sum_rule_single_spin() {
        let l = spin(1.0, 0.1, 0.0);
        let integral = integrated_noise_check(&l, 1.0, 10.0, 40_001).unwrap();
        let tp = 2.0 * std::f64::consts::PI;
        assert!((integral - tp).abs() <= 0.01 * tp);
    }

    #[test]
    fn zeno_estimate_examples() {
        assert_eq!(zeno_strength_estimate(1.0, 1.0, 1.0).unwrap(), (1.0, 2.0));
        let (b2, _) = zeno_strength_estimate(2.0, 0.5, 0.5).unwrap();
        assert!((b2 - 0.5).abs() < 1e-15);
        assert!(zeno_strength_estimate(0.0, 1.0, 1.0).is_err());
        let w0 = 1.0;
        let (_, lo) = zeno_strength_estimate(1.25, w0 / 3.0, 1.0).unwrap();
        let (_, hi) = zeno_strength_estimate(3.0, w0 / 3.0, 1.0).unwrap();
        assert!((lo - 0.8333).abs() < 1e-3 && (hi - 2.0).abs() < 1e-12);
    }

    fn thermal_qubit(w0: f64, gamma: f64, temp: f64) -> Liouvillian {
        let [sx, _, sz] = pauli();
        let h = sz.scale_real(w0 / 2.0);
        let rho = DensityMatrix::normalized(&h.exp_hermitian(c(-1.0 / temp, 0.0)).unwrap()).unwrap();
        let d = DissipatorSpec::relaxation_whole(gamma, rho);
        Liouvillian::build(&h, &[d], &sx, 0.0).unwrap()
    }

    #[test]
    fn susceptibility_checks() {
        let l = thermal_qubit(1.0, 0.01, 1.0);
        let f = fdt_check(&l, 1.0, 1.0).unwrap();
        assert!(f.residual.abs() <= 0.05 * f.im_alpha.abs(), "{f:?}");
        // Oracle: Lorentzian-broadened matrix elements. With p_up, p_dn the
        // level populations, Im alpha(w0) ~ (p_dn - p_up)/gamma.
        let (pu, pd) = (1.0 / (1.0 + 1f64.exp()), 1.0 / (1.0 + (-1f64).exp()));
        assert!((f.im_alpha - (pd - pu) / 0.01).abs() <= 0.01 * f.im_alpha.abs());
        let a0 = susceptibility(&l, 0.0, l.steady_state()).unwrap();
        assert!(a0.im.abs() < 1e-10 * a0.norm().max(1.0));
        let hot = thermal_qubit(1.0, 0.01, 1e12);
        for w in [0.5, 1.0] {
            assert!(susceptibility(&hot, w, hot.steady_state()).unwrap().norm() < 1e-8);
        }
    }

    #[test]
    fn spectrum_grid_validation() {
        let g = SpectrumGrid::from_real(2, GridKind::Full, vec![vec![0.0, 1.0]], &[1.0, 2.0], 1.0).unwrap();
        assert_eq!(g.shape(), vec![2]);
        assert!(SpectrumGrid::from_real(2, GridKind::Full, vec![vec![1.0, 0.0]], &[1.0, 2.0], 1.0).is_err());
        assert!(SpectrumGrid::from_real(2, GridKind::Full, vec![vec![0.0, 1.0]], &[1.0, -2.0], 1.0).is_err());
        assert!(SpectrumGrid::from_real(3, GridKind::Full, vec![vec![0.0, 1.0]], &[1.0], 1.0).is_err());
    }
}
