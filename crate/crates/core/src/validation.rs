//! Self-checks run by `qpoly validate`: independent oracles for the
//! analytic spectra and a calibration of the estimators on Gaussian noise.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::estimators::{estimate_s2, estimate_s3, estimate_s4_corr_grid, frame_fft, FrameSpec, SpectralEstimate};
use crate::liouvillian::DissipatorSpec;
use crate::models::{random_lindblad_model, single_spin_model, ModelBundle, SingleSpinParams};
use crate::operator::{c, pauli, DensityMatrix};
use crate::polyspectra::{
    cumulant3_time, cumulant4_time, cumulant_chain, cumulant_from_moments, fdt_check, integrated_noise_check, s3_grid,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub description: String,
    pub measured: f64,
    /// The check passes when `measured <= tolerance`.
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, description: &str, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            measured,
            tolerance,
            passed: measured.is_finite() && measured <= tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

/// Compact cumulant formulas against the sum over set partitions of
/// multi-time moments, on random three-level models and random times.
pub fn check_cumulant_equivalence(seed: u64) -> Result<Check> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for k in 0..4 {
        let model = random_lindblad_model(3, 2, 0.5, seed.wrapping_add(k))?;
        let l = model.liouvillian(0.6)?;
        for _ in 0..4 {
            let mut t: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..3.0)).collect();
            t.sort_by(f64::total_cmp);
            let compact = [
                cumulant_chain(&l, &t[..2], 1.0)?,
                cumulant3_time(&l, [t[0], t[1], t[2]], 1.0)?,
                cumulant4_time(&l, [t[0], t[1], t[2], t[3]], 1.0)?,
            ];
            for n in 2..=4 {
                let oracle = cumulant_from_moments(&l, &t[..n], 1.0, n)?;
                worst = worst.max((compact[n - 2] - oracle).abs() / oracle.abs().max(1e-6));
            }
        }
    }
    Ok(Check::new(
        "cumulant-equivalence",
        "max relative deviation of compact C2..C4 from the moment-partition sum",
        worst,
        1e-9,
    ))
}

/// `int S_q dw = 2 pi` for a measured operator with `A^2 = 1`.
pub fn check_sum_rule() -> Result<Check> {
    let m = single_spin_model(&SingleSpinParams::new([1.0, 0.0, 0.0], 0.1))?;
    let l = m.liouvillian_with_damping(1.0, false)?;
    let integral = integrated_noise_check(&l, 1.0, 10.0, 40_001)?;
    Ok(Check::new(
        "sum-rule",
        "relative deviation of the integrated power spectrum from 2 pi",
        (integral - 2.0 * PI).abs() / (2.0 * PI),
        0.01,
    ))
}

/// Two-level system relaxing to its Gibbs state, probed with `sigma_x`.
pub fn thermal_qubit(w0: f64, gamma: f64, temperature: f64) -> Result<ModelBundle> {
    let [sx, _, sz] = pauli();
    let h = sz.scale_real(w0 / 2.0);
    let gibbs = DensityMatrix::normalized(&h.exp_hermitian(c(-1.0 / temperature, 0.0))?)?;
    ModelBundle::new(
        "thermal-qubit",
        h,
        sx,
        vec![DissipatorSpec::relaxation_whole(gamma, gibbs)],
        vec!["qubit".into()],
        1.0,
    )
}

/// Fluctuation-dissipation: `Im alpha(w) = S_q(w) tanh(w / 2T)` near resonance.
pub fn check_fdt() -> Result<Check> {
    let l = thermal_qubit(1.0, 0.01, 1.0)?.liouvillian(0.0)?;
    let f = fdt_check(&l, 1.0, 1.0)?;
    Ok(Check::new(
        "fdt",
        "relative FDT residual |Im alpha - S_q tanh(w/2T)| / |Im alpha| at resonance",
        f.residual.abs() / f.im_alpha.abs(),
        0.05,
    ))
}

/// The unpolarized single spin has no third-order noise.
pub fn check_single_spin_bispectrum() -> Result<Check> {
    let m = single_spin_model(&SingleSpinParams::new([1.0, 0.0, 0.0], 0.1))?;
    let l = m.liouvillian(0.5)?;
    let axis: Vec<f64> = (0..41).map(|k| -2.0 + 0.1 * k as f64).collect();
    let vals = s3_grid(&l, &axis, &axis, 0.5)?;
    let worst = vals.iter().fold(0.0_f64, |a, v| a.max(v.norm()));
    Ok(Check::new(
        "single-spin-bispectrum",
        "max |S3| of the unpolarized single spin on a 41x41 grid",
        worst,
        1e-12,
    ))
}

/// Two-sided Student-t quantile giving family-wise level `alpha` over `tests`
/// comparisons (Bonferroni).
pub fn bonferroni_t(alpha: f64, tests: usize, dof: usize) -> Result<f64> {
    let t = StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(t.inverse_cdf(1.0 - alpha / (2.0 * tests as f64)))
}

fn worst_t(est: &SpectralEstimate, target: f64, cells: impl Iterator<Item = usize>, imag: bool) -> (f64, usize) {
    let mut worst = 0.0_f64;
    let mut count = 0;
    for i in cells {
        let mut parts = vec![(est.values[i] - target, est.std_err[i])];
        if imag {
            parts.push((est.imag[i], est.std_err_imag[i]));
        }
        for (d, se) in parts {
            if se > 0.0 {
                worst = worst.max((d / se).abs());
                count += 1;
            }
        }
    }
    (worst, count)
}

/// Estimators on pure white detector noise: S2 flat at `b^2/4`, S3 and the
/// S4 cut consistent with zero, each at 99% family-wise confidence.
/// Measured values are the largest |t| scores divided by the critical value.
pub fn check_white_noise(seed: u64) -> Result<Vec<Check>> {
    let beta = 1.0_f64;
    let dt = 0.01_f64;
    let n = 256;
    let m = 16;
    let groups = 128;
    let sigma = 0.5 * beta / dt.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..n * m * groups)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            sigma * g
        })
        .collect();
    let spec = FrameSpec::new(n, m);
    let frames = frame_fft(&z, dt, &spec)?;
    let dof = groups - 1;

    // bin 0 carries the removed global mean
    let s2 = estimate_s2(&frames, &spec)?;
    let (w2, c2) = worst_t(&s2, beta * beta / 4.0, 1..s2.values.len(), false);
    let s3 = estimate_s3(&frames, &spec, 16)?;
    let (w3, c3) = worst_t(&s3, 0.0, 0..s3.values.len(), true);
    let bins: Vec<i64> = vec![1, 3, 9, 27, 60, 100];
    let s4 = estimate_s4_corr_grid(&frames, &spec, &bins)?;
    let nb = bins.len();
    let off = (0..nb * nb).filter(|i| i / nb != i % nb);
    let (w4, c4) = worst_t(&s4, 0.0, off, false);

    let mut out = Vec::new();
    for (name, desc, w, count) in [
        ("white-noise-s2", "max |S2 - b^2/4| / SE over bins, relative to the corrected 99% t value", w2, c2),
        ("white-noise-s3", "max |S3| / SE over the bispectrum grid, relative to the corrected 99% t value", w3, c3),
        ("white-noise-s4", "max |S4 cut| / SE off the diagonal, relative to the corrected 99% t value", w4, c4),
    ] {
        let crit = bonferroni_t(0.01, count.max(1), dof)?;
        out.push(Check::new(name, desc, w / crit, 1.0));
    }
    Ok(out)
}

pub fn default_suite(seed: u64) -> Result<ValidationReport> {
    let mut checks = vec![
        check_cumulant_equivalence(seed)?,
        check_sum_rule()?,
        check_fdt()?,
        check_single_spin_bispectrum()?,
    ];
    checks.extend(check_white_noise(seed)?);
    Ok(ValidationReport {
        seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
