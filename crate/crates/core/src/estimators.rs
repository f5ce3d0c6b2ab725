//! Frame-FFT estimators of S2, S3 and the S4 correlation cut from sampled
//! detector records.
//!
//! A record is split into non-overlapping frames of `n` samples. Each frame
//! gives `z_j(w_k) = dt sum_t e^{+i w_k t} z(t)` with `w_k = 2 pi k / (n dt)`.
//! Frame cumulants divided by the frame duration `T = n dt` converge to the
//! spectral densities. Before transforming, the global record mean is
//! removed, so every bin has zero expectation and higher cumulants are plain
//! joint moments minus pair products.

use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelBundle;
use crate::operator::C64;
use crate::polyspectra::{self, GridKind, SpectrumGrid};
use crate::sme::{simulate_ensemble, SimConfig, TrajectoryRecord};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Rectangular,
    /// Periodic Hann window; order-n estimates are divided by `mean(w^n)`.
    Hann,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub frame_length: usize,
    #[serde(default)]
    pub window: Window,
    /// Frames per group; group scatter gives the standard errors.
    pub frames_per_estimate: usize,
}

impl FrameSpec {
    pub fn new(frame_length: usize, frames_per_estimate: usize) -> Self {
        Self {
            frame_length,
            window: Window::Rectangular,
            frames_per_estimate,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.frame_length < 2 {
            return Err(Error::InvalidArgument("frame length must be at least 2".into()));
        }
        if self.frames_per_estimate < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 frames per estimate, got {}",
                self.frames_per_estimate
            )));
        }
        Ok(())
    }
}

/// Per-frame spectra of one record.
#[derive(Clone, Debug)]
pub struct Frames {
    pub dt: f64,
    pub frame_length: usize,
    pub window: Window,
    /// `spectra[j][k]` is frame `j` at bin `k` (FFT order, `k >= n/2` negative).
    pub spectra: Vec<Vec<C64>>,
    window_moments: [f64; 5],
}

impl Frames {
    pub fn n_frames(&self) -> usize {
        self.spectra.len()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.frame_length as f64
    }

    pub fn bin_width(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.duration()
    }

    /// Angular frequency of a signed bin index.
    pub fn omega(&self, k: i64) -> f64 {
        k as f64 * self.bin_width()
    }

    fn index(&self, k: i64) -> usize {
        k.rem_euclid(self.frame_length as i64) as usize
    }

    /// Nearest signed bin of an angular frequency.
    pub fn bin_of(&self, omega: f64) -> i64 {
        (omega / self.bin_width()).round() as i64
    }

    fn norm(&self, order: usize) -> f64 {
        self.duration() * self.window_moments[order]
    }
}

fn window_values(w: Window, n: usize) -> Vec<f64> {
    match w {
        Window::Rectangular => vec![1.0; n],
        Window::Hann => (0..n)
            .map(|t| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * t as f64 / n as f64).cos()))
            .collect(),
    }
}

pub fn frame_fft(z: &[f64], dt: f64, spec: &FrameSpec) -> Result<Frames> {
    spec.validate()?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let n = spec.frame_length;
    let m = z.len() / n;
    if m == 0 {
        return Err(Error::TooShort { needed: n, got: z.len() });
    }
    let used = m * n;
    let mean = z[..used].iter().sum::<f64>() / used as f64;
    let w = window_values(spec.window, n);
    let mut window_moments = [1.0; 5];
    for (p, wm) in window_moments.iter_mut().enumerate() {
        *wm = w.iter().map(|x| x.powi(p as i32)).sum::<f64>() / n as f64;
    }
    // e^{+i w t} sums are the unnormalized inverse transform
    let plan = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let spectra: Vec<Vec<C64>> = z[..used]
        .par_chunks_exact(n)
        .map(|frame| {
            let mut buf: Vec<rustfft::num_complex::Complex<f64>> = frame
                .iter()
                .zip(&w)
                .map(|(x, wt)| rustfft::num_complex::Complex::new((x - mean) * wt * dt, 0.0))
                .collect();
            plan.process(&mut buf);
            buf.into_iter().map(|v| C64::new(v.re, v.im)).collect()
        })
        .collect();
    Ok(Frames {
        dt,
        frame_length: n,
        window: spec.window,
        spectra,
        window_moments,
    })
}

pub fn frame_fft_record(traj: &TrajectoryRecord, spec: &FrameSpec) -> Result<Frames> {
    frame_fft(&traj.z, traj.dt, spec)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub order: usize,
    /// Angular frequencies per axis.
    pub axes: Vec<Vec<f64>>,
    /// Row-major over the axes.
    pub values: Vec<f64>,
    pub imag: Vec<f64>,
    pub std_err: Vec<f64>,
    pub std_err_imag: Vec<f64>,
    pub n_frames: usize,
    pub n_groups: usize,
}

impl SpectralEstimate {
    pub fn to_grid(&self, kind: GridKind, beta: f64) -> Result<SpectrumGrid> {
        let vals: Vec<C64> = self.values.iter().zip(&self.imag).map(|(&r, &i)| C64::new(r, i)).collect();
        let mut g = SpectrumGrid::new(self.order, kind, self.axes.clone(), &vals, beta)?;
        g.notes.push(format!(
            "estimate from {} frames in {} groups; std_err available in the estimate",
            self.n_frames, self.n_groups
        ));
        Ok(g)
    }

    /// Index of the point nearest to the given coordinates.
    pub fn nearest(&self, coords: &[f64]) -> usize {
        let mut idx = 0;
        for (ax, &x) in self.axes.iter().zip(coords) {
            let k = ax
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
                .map(|p| p.0)
                .unwrap_or(0);
            idx = idx * ax.len() + k;
        }
        idx
    }
}

/// Mean and standard error of per-group values.
fn mean_se(groups: &[C64]) -> (C64, f64, f64) {
    let g = groups.len() as f64;
    let mean: C64 = groups.iter().sum::<C64>() / g;
    if groups.len() < 2 {
        return (mean, f64::NAN, f64::NAN);
    }
    let (vr, vi) = groups.iter().fold((0.0, 0.0), |(a, b), x| {
        (a + (x.re - mean.re).powi(2), b + (x.im - mean.im).powi(2))
    });
    (mean, (vr / (g - 1.0) / g).sqrt(), (vi / (g - 1.0) / g).sqrt())
}

fn groups_of(frames: &Frames, spec: &FrameSpec) -> Result<usize> {
    spec.validate()?;
    let g = frames.n_frames() / spec.frames_per_estimate;
    if g < 2 {
        return Err(Error::TooShort {
            needed: 2 * spec.frames_per_estimate,
            got: frames.n_frames(),
        });
    }
    Ok(g)
}

/// Unbiased estimate of `E[a] E[b]` from paired samples.
fn pair_product(a: &[C64], b: &[C64]) -> C64 {
    let m = a.len() as f64;
    let sa: C64 = a.iter().sum();
    let sb: C64 = b.iter().sum();
    let sab: C64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (sa * sb - sab) / (m * (m - 1.0))
}

/// Group-wise bias-corrected periodogram, `m/(m-1) [mean |z|^2 - |mean z|^2] / T`,
/// on the non-negative bins.
pub fn estimate_s2(frames: &Frames, spec: &FrameSpec) -> Result<SpectralEstimate> {
    let groups = groups_of(frames, spec)?;
    let m = spec.frames_per_estimate;
    let half = frames.frame_length / 2;
    let norm = frames.norm(2);
    let mf = m as f64;
    let rows: Vec<(f64, f64)> = (0..=half)
        .into_par_iter()
        .map(|k| {
            let per: Vec<C64> = (0..groups)
                .map(|g| {
                    let zs = &frames.spectra[g * m..(g + 1) * m];
                    let p = zs.iter().map(|z| z[k].norm_sqr()).sum::<f64>() / mf;
                    let s: C64 = zs.iter().map(|z| z[k]).sum::<C64>() / mf;
                    C64::new(mf / (mf - 1.0) * (p - s.norm_sqr()) / norm, 0.0)
                })
                .collect();
            let (mean, se, _) = mean_se(&per);
            (mean.re, se)
        })
        .collect();
    Ok(SpectralEstimate {
        order: 2,
        axes: vec![(0..=half).map(|k| frames.omega(k as i64)).collect()],
        values: rows.iter().map(|r| r.0).collect(),
        imag: vec![0.0; rows.len()],
        std_err: rows.iter().map(|r| r.1).collect(),
        std_err_imag: vec![0.0; rows.len()],
        n_frames: groups * m,
        n_groups: groups,
    })
}

/// Bispectrum on bins `-max_bin..=max_bin` along both axes, third bin
/// `-(k1 + k2)`.
pub fn estimate_s3(frames: &Frames, spec: &FrameSpec, max_bin: usize) -> Result<SpectralEstimate> {
    let n = frames.frame_length;
    if n % 2 != 0 {
        return Err(Error::InvalidGrid("odd frame length: bins are not closed under negation".into()));
    }
    if 2 * max_bin > n / 2 {
        return Err(Error::InvalidGrid(format!(
            "max_bin {max_bin} puts -(k1 + k2) beyond Nyquist for frame length {n}"
        )));
    }
    let groups = groups_of(frames, spec)?;
    let m = spec.frames_per_estimate;
    let norm = frames.norm(3);
    let ks: Vec<i64> = (-(max_bin as i64)..=max_bin as i64).collect();
    let nk = ks.len();
    let cells: Vec<(C64, f64, f64)> = (0..nk * nk)
        .into_par_iter()
        .map(|idx| {
            let (k1, k2) = (ks[idx / nk], ks[idx % nk]);
            let (i1, i2, i3) = (frames.index(k1), frames.index(k2), frames.index(-k1 - k2));
            let per: Vec<C64> = (0..groups)
                .map(|g| {
                    let zs = &frames.spectra[g * m..(g + 1) * m];
                    zs.iter().map(|z| z[i1] * z[i2] * z[i3]).sum::<C64>() / (m as f64 * norm)
                })
                .collect();
            mean_se(&per)
        })
        .collect();
    let axis: Vec<f64> = ks.iter().map(|&k| frames.omega(k)).collect();
    Ok(SpectralEstimate {
        order: 3,
        axes: vec![axis.clone(), axis],
        values: cells.iter().map(|c| c.0.re).collect(),
        imag: cells.iter().map(|c| c.0.im).collect(),
        std_err: cells.iter().map(|c| c.1).collect(),
        std_err_imag: cells.iter().map(|c| c.2).collect(),
        n_frames: groups * m,
        n_groups: groups,
    })
}

/// Fourth joint cumulant of `(z(k1), z(-k1), z(k2), z(-k2))` per group.
fn s4_cell(frames: &Frames, groups: usize, m: usize, k1: i64, k2: i64) -> (C64, f64, f64) {
    let idx = [frames.index(k1), frames.index(-k1), frames.index(k2), frames.index(-k2)];
    let norm = frames.norm(4);
    let per: Vec<C64> = (0..groups)
        .map(|g| {
            let zs = &frames.spectra[g * m..(g + 1) * m];
            let col = |q: usize| -> Vec<C64> { zs.iter().map(|z| z[idx[q]]).collect() };
            let c: Vec<Vec<C64>> = (0..4).map(col).collect();
            let prod = |a: usize, b: usize| -> Vec<C64> { c[a].iter().zip(&c[b]).map(|(x, y)| x * y).collect() };
            let m4: C64 = (0..m).map(|j| c[0][j] * c[1][j] * c[2][j] * c[3][j]).sum::<C64>() / m as f64;
            let pairs = pair_product(&prod(0, 1), &prod(2, 3))
                + pair_product(&prod(0, 2), &prod(1, 3))
                + pair_product(&prod(0, 3), &prod(1, 2));
            (m4 - pairs) / norm
        })
        .collect();
    mean_se(&per)
}

fn check_s4_bins(frames: &Frames, k1: i64, k2: i64) -> Result<()> {
    let half = (frames.frame_length / 2) as i64;
    if k1 == 0 || k2 == 0 {
        return Err(Error::InvalidGrid("correlation cut needs nonzero frequencies".into()));
    }
    if k1 == k2 || k1 == -k2 {
        return Err(Error::InvalidGrid("correlation cut needs w1 != +-w2".into()));
    }
    if k1.abs() >= half || k2.abs() >= half {
        return Err(Error::InvalidGrid("bin at or beyond Nyquist".into()));
    }
    Ok(())
}

/// One point of the S4 correlation cut. Frequencies must sit on the bin grid.
pub fn estimate_s4_corr(frames: &Frames, spec: &FrameSpec, omega1: f64, omega2: f64) -> Result<SpectralEstimate> {
    let groups = groups_of(frames, spec)?;
    let (k1, k2) = (frames.bin_of(omega1), frames.bin_of(omega2));
    let tol = 1e-6 * frames.bin_width();
    if (frames.omega(k1) - omega1).abs() > tol || (frames.omega(k2) - omega2).abs() > tol {
        return Err(Error::InvalidGrid("frequencies are not on the FFT grid".into()));
    }
    check_s4_bins(frames, k1, k2)?;
    let (v, se, sei) = s4_cell(frames, groups, spec.frames_per_estimate, k1, k2);
    Ok(SpectralEstimate {
        order: 4,
        axes: vec![vec![omega1], vec![omega2]],
        values: vec![v.re],
        imag: vec![v.im],
        std_err: vec![se],
        std_err_imag: vec![sei],
        n_frames: groups * spec.frames_per_estimate,
        n_groups: groups,
    })
}

/// Correlation cut on the given positive bins along both axes. Diagonal
/// cells (`k1 == k2`) carry the full fourth cumulant there, which is not the
/// cut value; callers usually mask them.
pub fn estimate_s4_corr_grid(frames: &Frames, spec: &FrameSpec, bins: &[i64]) -> Result<SpectralEstimate> {
    let groups = groups_of(frames, spec)?;
    for (i, &a) in bins.iter().enumerate() {
        for &b in &bins[i + 1..] {
            check_s4_bins(frames, a, b)?;
        }
    }
    let nb = bins.len();
    let m = spec.frames_per_estimate;
    let cells: Vec<(C64, f64, f64)> = (0..nb * nb)
        .into_par_iter()
        .map(|idx| s4_cell(frames, groups, m, bins[idx / nb], bins[idx % nb]))
        .collect();
    let axis: Vec<f64> = bins.iter().map(|&k| frames.omega(k)).collect();
    Ok(SpectralEstimate {
        order: 4,
        axes: vec![axis.clone(), axis],
        values: cells.iter().map(|c| c.0.re).collect(),
        imag: cells.iter().map(|c| c.0.im).collect(),
        std_err: cells.iter().map(|c| c.1).collect(),
        std_err_imag: cells.iter().map(|c| c.2).collect(),
        n_frames: groups * m,
        n_groups: groups,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaScaling {
    /// Same coupling for every system; the summed shot noise grows as sqrt(N).
    Fixed,
    /// Coupling of each system scaled as `N^-1/2` (fixed total probe power).
    InverseSqrtN,
}

#[derive(Clone, Debug)]
pub struct SnrConfig {
    pub system_counts: Vec<usize>,
    pub beta: f64,
    pub scaling: BetaScaling,
    pub dt: f64,
    pub frame: FrameSpec,
    /// Frames in the record at every `N`.
    pub frames: usize,
    pub seed: u64,
    /// Bin pairs probed: S2 at `w1`, S4 cut at `(w1, w2)`.
    pub omega1: f64,
    pub omega2: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnrPoint {
    pub n: usize,
    pub beta: f64,
    pub snr2: f64,
    pub snr4: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnrResult {
    pub points: Vec<SnrPoint>,
    pub exponent2: f64,
    pub exponent4: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Sum of `N` independent copies of the model. The signal is the analytic
/// spectrum of the sum (`N` times the single-system value, cumulant
/// additivity); the noise is the group scatter of the estimator.
pub fn snr_experiment(model: &ModelBundle, cfg: &SnrConfig) -> Result<SnrResult> {
    if cfg.system_counts.len() < 2 {
        return Err(Error::InvalidArgument("need at least two system counts".into()));
    }
    let steps = cfg.frames * cfg.frame.frame_length;
    let mut points = Vec::new();
    for &n in &cfg.system_counts {
        if n == 0 {
            return Err(Error::InvalidArgument("system count must be positive".into()));
        }
        let beta = match cfg.scaling {
            BetaScaling::Fixed => cfg.beta,
            BetaScaling::InverseSqrtN => cfg.beta / (n as f64).sqrt(),
        };
        let sim = SimConfig::new(cfg.dt, steps, 0, beta);
        let seeds: Vec<u64> = (0..n as u64).map(|j| cfg.seed.wrapping_mul(1_000_003).wrapping_add(j)).collect();
        let trajs = simulate_ensemble(model, &sim, &seeds)?;
        let mut z = vec![0.0; steps];
        for t in &trajs {
            for (a, b) in z.iter_mut().zip(&t.z) {
                *a += b;
            }
        }
        let frames = frame_fft(&z, cfg.dt, &cfg.frame)?;
        let groups = groups_of(&frames, &cfg.frame)?;
        let (k1, k2) = (frames.bin_of(cfg.omega1), frames.bin_of(cfg.omega2));
        let w1 = frames.omega(k1);
        let w2 = frames.omega(k2);
        let l = model.liouvillian(beta)?;
        let sig2 = n as f64 * polyspectra::s2(&l, w1, beta, false)?;
        let sig4 = n as f64 * polyspectra::s4_correlation_cut(&l, w1, w2, beta)?;
        let s2 = estimate_s2(&frames, &cfg.frame)?;
        let k = s2.nearest(&[w1]);
        check_s4_bins(&frames, k1, k2)?;
        let (_, se4, _) = s4_cell(&frames, groups, cfg.frame.frames_per_estimate, k1, k2);
        points.push(SnrPoint {
            n,
            beta,
            snr2: sig2.abs() / s2.std_err[k],
            snr4: sig4.abs() / se4,
        });
    }
    let x: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let y2: Vec<f64> = points.iter().map(|p| p.snr2).collect();
    let y4: Vec<f64> = points.iter().map(|p| p.snr4).collect();
    Ok(SnrResult {
        exponent2: log_log_slope(&x, &y2),
        exponent4: log_log_slope(&x, &y4),
        points,
    })
}

/// Standard error of the S2 estimate at one bin for records of `frames`
/// frames each; used to check the `1/sqrt(M)` law.
pub fn s2_std_err_at(z: &[f64], dt: f64, spec: &FrameSpec, omega: f64) -> Result<f64> {
    let frames = frame_fft(z, dt, spec)?;
    let est = estimate_s2(&frames, spec)?;
    Ok(est.std_err[est.nearest(&[omega])])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn white(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                sigma * g
            })
            .collect()
    }

    #[test]
    fn constant_and_impulse() {
        let spec = FrameSpec::new(8, 2);
        // the global mean is removed, so a constant maps to zero everywhere
        let f = frame_fft(&[2.0; 16], 0.5, &spec).unwrap();
        assert!(f.spectra.iter().flatten().all(|z| z.norm() < 1e-15));
        // mean-free impulse pair: flat magnitude dt per impulse
        let mut z = vec![0.0; 8];
        z[3] = 1.0;
        z[7] = -1.0;
        let f = frame_fft(&z, 0.25, &FrameSpec::new(8, 2)).unwrap();
        for k in 0..8 {
            let w = f.omega(k as i64);
            let want = C64::new(0.0, w * 3.0 * 0.25).exp() * 0.25 - C64::new(0.0, w * 7.0 * 0.25).exp() * 0.25;
            assert!((f.spectra[0][k] - want).norm() < 1e-14);
        }
    }

    #[test]
    fn parseval() {
        let n = 64;
        let dt = 0.1;
        let z = white(n, 1.0, 3);
        let f = frame_fft(&z, dt, &FrameSpec::new(n, 2)).unwrap();
        let mean = z.iter().sum::<f64>() / n as f64;
        let lhs: f64 = f.spectra[0].iter().map(|x| x.norm_sqr()).sum::<f64>() * f.bin_width() / (2.0 * std::f64::consts::PI);
        let rhs: f64 = dt * z.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-9 * rhs);
    }

    #[test]
    fn sinusoid_peak_position() {
        let dt = 0.05;
        let n = 256;
        let w0 = 2.0 * std::f64::consts::PI * 10.0 / (n as f64 * dt);
        let z: Vec<f64> = (0..n * 8).map(|t| (w0 * t as f64 * dt).cos()).collect();
        let spec = FrameSpec::new(n, 2);
        let frames = frame_fft(&z, dt, &spec).unwrap();
        let k = (0..n / 2).max_by(|&a, &b| frames.spectra[0][a].norm().total_cmp(&frames.spectra[0][b].norm())).unwrap();
        assert_eq!(k, 10);
        assert!((frames.omega(k as i64) - w0).abs() < 1e-12);
    }

    #[test]
    fn white_noise_calibration() {
        // z = (b/2) g / sqrt(dt) is the detector output with A = 0
        let beta = 1.0_f64;
        let dt = 0.01_f64;
        let n = 128;
        let m = 16;
        let z = white(n * m * 200, 0.5 * beta / dt.sqrt(), 7);
        let spec = FrameSpec::new(n, m);
        let frames = frame_fft(&z, dt, &spec).unwrap();
        let s2 = estimate_s2(&frames, &spec).unwrap();
        let mut worst: f64 = 0.0;
        for k in 1..n / 2 {
            worst = worst.max(((s2.values[k] - 0.25) / s2.std_err[k]).abs());
        }
        // 63 bins: a 4.5 sigma band leaves ample room
        assert!(worst < 4.5, "{worst}");
        let mean: f64 = s2.values[1..n / 2].iter().sum::<f64>() / (n / 2 - 1) as f64;
        assert!((mean - 0.25).abs() < 0.01);

        let s3 = estimate_s3(&frames, &spec, 10).unwrap();
        let z3: Vec<f64> = s3.values.iter().zip(&s3.std_err).map(|(v, e)| v / e).collect();
        let frac = z3.iter().filter(|x| x.abs() > 3.0).count() as f64 / z3.len() as f64;
        assert!(frac < 0.02, "{frac}");

        let bins: Vec<i64> = (1..12).collect();
        let s4 = estimate_s4_corr_grid(&frames, &spec, &bins).unwrap();
        let mut off = Vec::new();
        for i in 0..bins.len() {
            for j in 0..bins.len() {
                if i != j {
                    off.push(s4.values[i * bins.len() + j] / s4.std_err[i * bins.len() + j]);
                }
            }
        }
        let frac = off.iter().filter(|x| x.abs() > 3.0).count() as f64 / off.len() as f64;
        assert!(frac < 0.03, "{frac}");
    }

    #[test]
    fn squared_gaussian_has_positive_bispectrum() {
        // z = x^2 - <x^2> with x an AR(1) process: skewed, so S3(0,0)-region > 0
        for seed in [1u64, 2, 3] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = 0.9;
            let mut x = 0.0;
            let z: Vec<f64> = (0..256 * 400)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    x = a * x + g;
                    x * x
                })
                .collect();
            let spec = FrameSpec::new(256, 10);
            let frames = frame_fft(&z, 1.0, &spec).unwrap();
            let s3 = estimate_s3(&frames, &spec, 4).unwrap();
            let centre = s3.nearest(&[frames.omega(1), frames.omega(1)]);
            assert!(s3.values[centre] > 3.0 * s3.std_err[centre], "seed {seed}");
        }
    }

    #[test]
    fn independent_oscillators_do_not_correlate() {
        // two narrow-band Gaussian processes at different frequencies
        let dt = 1.0;
        let n = 128;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let total = n * 600;
        let mut osc = |w: f64, r: f64| -> Vec<f64> {
            let (mut p, mut q) = (0.0, 0.0);
            (0..total)
                .map(|_| {
                    let g1: f64 = StandardNormal.sample(&mut rng);
                    let g2: f64 = StandardNormal.sample(&mut rng);
                    let np = r * (p * w.cos() - q * w.sin()) + g1;
                    let nq = r * (p * w.sin() + q * w.cos()) + g2;
                    p = np;
                    q = nq;
                    p
                })
                .collect()
        };
        let a = osc(2.0 * std::f64::consts::PI * 10.0 / n as f64, 0.97);
        let b = osc(2.0 * std::f64::consts::PI * 30.0 / n as f64, 0.97);
        let z: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let spec = FrameSpec::new(n, 10);
        let frames = frame_fft(&z, dt, &spec).unwrap();
        let est = estimate_s4_corr(&frames, &spec, frames.omega(10), frames.omega(30)).unwrap();
        assert!(est.values[0].abs() < 3.5 * est.std_err[0]);
        assert!(estimate_s4_corr(&frames, &spec, frames.omega(10), frames.omega(10)).is_err());
        assert!(estimate_s4_corr(&frames, &spec, 0.123, frames.omega(10)).is_err());
    }

    #[test]
    fn standard_error_shrinks_with_groups() {
        let dt = 0.01;
        let spec = FrameSpec::new(64, 8);
        let z = white(64 * 8 * 1000, 5.0, 9);
        let avg = |z: &[f64]| -> f64 {
            let est = estimate_s2(&frame_fft(z, dt, &spec).unwrap(), &spec).unwrap();
            est.std_err[1..32].iter().sum::<f64>() / 31.0
        };
        let ratio = avg(&z[..64 * 8 * 10]) / avg(&z);
        // ideal sqrt(100) = 10
        assert!(ratio > 8.0 && ratio < 12.5, "{ratio}");
    }

    #[test]
    fn hann_window_preserves_white_level() {
        let dt = 0.01_f64;
        let z = white(256 * 8 * 100, 0.5 / dt.sqrt(), 13);
        let spec = FrameSpec {
            frame_length: 256,
            window: Window::Hann,
            frames_per_estimate: 8,
        };
        let s2 = estimate_s2(&frame_fft(&z, dt, &spec).unwrap(), &spec).unwrap();
        let mean: f64 = s2.values[5..100].iter().sum::<f64>() / 95.0;
        assert!((mean - 0.25).abs() < 0.01, "{mean}");
    }

    #[test]
    fn errors() {
        assert!(frame_fft(&[1.0; 4], 0.1, &FrameSpec::new(8, 2)).is_err());
        assert!(frame_fft(&[1.0; 16], 0.1, &FrameSpec::new(8, 1)).is_err());
        let f = frame_fft(&[1.0; 24], 0.1, &FrameSpec::new(8, 2)).unwrap();
        assert!(matches!(estimate_s2(&f, &FrameSpec::new(8, 2)), Err(Error::TooShort { .. })));
        let f = frame_fft(&white(9 * 40, 1.0, 1), 0.1, &FrameSpec::new(9, 2)).unwrap();
        assert!(matches!(estimate_s3(&f, &FrameSpec::new(9, 2), 1), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn slope_fit() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.0)).collect();
        assert!((log_log_slope(&x, &y) + 1.0).abs() < 1e-12);
    }
}
