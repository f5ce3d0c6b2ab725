//! Euler-Maruyama integration of the stochastic master equation
//!
//! ```text
//! d rho = L rho dt + b (A rho + rho A - 2 rho Tr(rho A)) dW
//! z_k   = b^2 Tr(rho_k A) + (b/2) g_k / sqrt(dt)
//! ```
//!
//! Noise layout: one `ChaCha8Rng::seed_from_u64(seed)` stream, one standard
//! normal `g_k` per step drawn with `rand_distr::StandardNormal`. The same
//! `g_k` drives the state (`dW = sqrt(dt) g_k`) and the detector shot noise,
//! since both are the same Wiener increment. Every step is followed by
//! Hermitization and trace renormalization.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eig::eig_general;
use crate::error::{Error, Result};
use crate::models::ModelBundle;
use crate::operator::{devectorize, vectorize, DensityMatrix, Operator, SuperOperator, C64, ZERO};

/// Upper bound on `dt (2 b^2 + max |Re lambda|)`.
pub const STABILITY_LIMIT: f64 = 0.1;
/// Frobenius norm of the pre-normalization state that counts as a blow-up.
pub const BLOWUP_NORM: f64 = 10.0;
pub const TRAJECTORY_MAGIC: &[u8; 8] = b"QPTRAJ01";

#[derive(Clone, Debug, Default)]
pub enum InitialState {
    /// Stationary state of the averaged dynamics.
    #[default]
    Steady,
    Custom(DensityMatrix),
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
    pub beta: f64,
    /// Store a copy of the state every this many steps.
    pub record_rho_every: Option<usize>,
    /// Store `Tr(A rho)` every this many steps.
    pub record_expectation_every: Option<usize>,
    pub initial_state: InitialState,
    /// Steps between positivity checks (full Hermitian eigensolve).
    pub eig_check_every: usize,
}

impl SimConfig {
    pub fn new(dt: f64, steps: usize, seed: u64, beta: f64) -> Self {
        Self {
            dt,
            steps,
            seed,
            beta,
            record_rho_every: None,
            record_expectation_every: None,
            initial_state: InitialState::Steady,
            eig_check_every: 1024,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidArgument(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if self.record_rho_every == Some(0) || self.record_expectation_every == Some(0) || self.eig_check_every == 0 {
            return Err(Error::InvalidArgument("recording intervals must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimDiagnostics {
    /// Largest `|Tr rho' - 1|` before renormalization.
    pub max_trace_deviation: f64,
    /// Smallest state eigenvalue seen at the check points.
    pub min_eigenvalue: f64,
    pub negative_excursions: usize,
    pub eig_checks: usize,
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub dim: usize,
    pub dt: f64,
    pub seed: u64,
    pub beta: f64,
    pub model_hash: [u8; 32],
    pub z: Vec<f64>,
    pub snapshots: Vec<(usize, DensityMatrix)>,
    pub expectation_every: usize,
    pub expectation: Vec<f64>,
    pub diagnostics: SimDiagnostics,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.z.len() as f64
    }

    /// Header plus little-endian samples.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(TRAJECTORY_MAGIC)?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&(self.z.len() as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.beta.to_le_bytes())?;
        w.write_all(&self.model_hash)?;
        let mut buf = Vec::with_capacity(8 * self.z.len());
        for x in &self.z {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads what [`TrajectoryRecord::write_binary`] wrote. Snapshots and
    /// diagnostics live in the JSON sidecar and come back empty.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("file shorter than the header".into()))?;
        if &magic != TRAJECTORY_MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let mut b8 = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut b8).map_err(|_| Error::Format("truncated header".into()))?;
            Ok(b8)
        };
        let dim = u64::from_le_bytes(next(&mut r)?) as usize;
        let dt = f64::from_le_bytes(next(&mut r)?);
        let steps = u64::from_le_bytes(next(&mut r)?) as usize;
        let seed = u64::from_le_bytes(next(&mut r)?);
        let beta = f64::from_le_bytes(next(&mut r)?);
        let mut model_hash = [0u8; 32];
        r.read_exact(&mut model_hash)
            .map_err(|_| Error::Format("truncated header".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * steps {
            return Err(Error::Format(format!(
                "header announces {steps} samples, file holds {} bytes of data",
                bytes.len()
            )));
        }
        let z: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|ch| f64::from_le_bytes(ch.try_into().expect("chunk of 8")))
            .collect();
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format("non-finite sample".into()));
        }
        Ok(Self {
            dim,
            dt,
            seed,
            beta,
            model_hash,
            z,
            snapshots: Vec::new(),
            expectation_every: 0,
            expectation: Vec::new(),
            diagnostics: SimDiagnostics::default(),
        })
    }

    pub fn sidecar(&self) -> TrajectorySidecar {
        TrajectorySidecar {
            dim: self.dim,
            dt: self.dt,
            steps: self.z.len(),
            seed: self.seed,
            beta: self.beta,
            model_hash: self.model_hash.iter().map(|b| format!("{b:02x}")).collect(),
            diagnostics: self.diagnostics.clone(),
            rng: "ChaCha8Rng::seed_from_u64, one StandardNormal draw per step shared by dW and detector noise".into(),
        }
    }

    /// Writes `<path>` and `<path>.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_binary(std::io::BufWriter::new(f))?;
        let side = sidecar_path(path);
        std::fs::write(side, serde_json::to_string_pretty(&self.sidecar())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let mut rec = Self::read_binary(std::io::BufReader::new(f))?;
        if let Ok(text) = std::fs::read_to_string(sidecar_path(path)) {
            let side: TrajectorySidecar = serde_json::from_str(&text)?;
            rec.diagnostics = side.diagnostics;
        }
        Ok(rec)
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySidecar {
    pub dim: usize,
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
    pub beta: f64,
    pub model_hash: String,
    pub diagnostics: SimDiagnostics,
    pub rng: String,
}

/// In-place stepper on the vectorized state. Matrices are held as plain
/// column-major vectors; this loop dominates simulation time.
struct Stepper {
    d: usize,
    generator: Vec<C64>,
    a: Vec<C64>,
    beta: f64,
    dt: f64,
    lrho: Vec<C64>,
    next: Vec<C64>,
}

impl Stepper {
    fn new(generator: &SuperOperator, a: &Operator, beta: f64, dt: f64) -> Self {
        let d = a.dim();
        let n = d * d;
        let g = generator.as_mat();
        Self {
            d,
            generator: (0..n * n).map(|idx| g[(idx % n, idx / n)]).collect(),
            a: (0..n).map(|idx| a.get(idx % d, idx / d)).collect(),
            beta,
            dt,
            lrho: vec![ZERO; n],
            next: vec![ZERO; n],
        }
    }

    /// `Tr(A rho)`; both are column-stacked so this is `sum_ij A_ij rho_ji`.
    fn expectation(&self, rho: &[C64]) -> f64 {
        let d = self.d;
        let mut t = 0.0;
        for j in 0..d {
            for i in 0..d {
                let x = self.a[j * d + i];
                let y = rho[i * d + j];
                t += x.re * y.re - x.im * y.im;
            }
        }
        t
    }

    /// Advances `rho` by one step with increment `dw`; returns the trace
    /// deviation before renormalization.
    fn step(&mut self, rho: &mut [C64], dw: f64, step_index: usize) -> Result<f64> {
        let d = self.d;
        let n = d * d;
        let ta = self.expectation(rho);
        self.lrho.fill(ZERO);
        for (k, &rk) in rho.iter().enumerate() {
            let col = &self.generator[k * n..(k + 1) * n];
            for (o, g) in self.lrho.iter_mut().zip(col) {
                *o += g * rk;
            }
        }
        let s = self.beta * dw;
        let mut norm2 = 0.0;
        for j in 0..d {
            for i in 0..d {
                // (A rho + rho A)_{ij}
                let mut ar = ZERO;
                for k in 0..d {
                    ar += self.a[k * d + i] * rho[j * d + k] + rho[k * d + i] * self.a[j * d + k];
                }
                let idx = j * d + i;
                let v = rho[idx] + self.lrho[idx] * self.dt + (ar - rho[idx] * (2.0 * ta)) * s;
                norm2 += v.norm_sqr();
                self.next[idx] = v;
            }
        }
        let norm = norm2.sqrt();
        if !norm.is_finite() || norm > BLOWUP_NORM {
            return Err(Error::StateBlowup { step: step_index, norm });
        }
        let mut tr = 0.0;
        for i in 0..d {
            tr += self.next[i * d + i].re;
        }
        let inv = 1.0 / tr;
        for j in 0..d {
            for i in 0..=j {
                let h = flush((self.next[j * d + i] + self.next[i * d + j].conj()) * (0.5 * inv));
                rho[j * d + i] = h;
                rho[i * d + j] = h.conj();
            }
        }
        Ok((tr - 1.0).abs())
    }
}

/// Components that decay geometrically toward the steady state end up
/// subnormal, which slows the arithmetic by orders of magnitude.
#[inline]
fn flush(z: C64) -> C64 {
    const TINY: f64 = 1e-200;
    C64::new(
        if z.re.abs() < TINY { 0.0 } else { z.re },
        if z.im.abs() < TINY { 0.0 } else { z.im },
    )
}

/// One Ito step from `rho`; the noise term uses the pre-step state.
pub fn sme_step(
    rho: &DensityMatrix,
    generator: &SuperOperator,
    a: &Operator,
    beta: f64,
    dt: f64,
    dw: f64,
) -> Result<DensityMatrix> {
    let d = rho.dim();
    if generator.hilbert_dim() != d || a.dim() != d {
        return Err(Error::DimensionMismatch("state, generator and measurement operator differ".into()));
    }
    if !dw.is_finite() || !dt.is_finite() {
        return Err(Error::InvalidArgument("non-finite increment".into()));
    }
    let mut st = Stepper::new(generator, a, beta, dt);
    let mut v = vectorize(rho.as_operator());
    st.step(&mut v, dw, 0)?;
    Ok(DensityMatrix::from_operator_unchecked(devectorize(&v)?))
}

/// Largest allowed step for the given generator and measurement strength.
pub fn max_stable_dt(generator: &SuperOperator, beta: f64) -> Result<f64> {
    let rate = stability_rate(generator, beta)?;
    Ok(if rate > 0.0 { STABILITY_LIMIT / rate } else { f64::INFINITY })
}

fn stability_rate(generator: &SuperOperator, beta: f64) -> Result<f64> {
    let dec = eig_general(generator.as_mat())?;
    let max_re = dec.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.re.abs()));
    Ok(2.0 * beta * beta + max_re)
}

/// Simulates the model with measurement damping at `cfg.beta` included in
/// the averaged generator.
pub fn simulate(model: &ModelBundle, cfg: &SimConfig) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let l = model.liouvillian(cfg.beta)?;
    let rho = match &cfg.initial_state {
        InitialState::Steady => l.steady_state().clone(),
        InitialState::Custom(r) => r.clone(),
    };
    simulate_with(l.matrix(), &model.a, &rho, cfg, model.hash_bytes())
}

/// Core loop on an explicit generator and starting state.
pub fn simulate_with(
    generator: &SuperOperator,
    a: &Operator,
    rho0: &DensityMatrix,
    cfg: &SimConfig,
    model_hash: [u8; 32],
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let d = a.dim();
    if generator.hilbert_dim() != d || rho0.dim() != d {
        return Err(Error::DimensionMismatch("state, generator and measurement operator differ".into()));
    }
    let product = cfg.dt * stability_rate(generator, cfg.beta)?;
    if product > STABILITY_LIMIT {
        return Err(Error::StepTooLarge { dt: cfg.dt, product });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut st = Stepper::new(generator, a, cfg.beta, cfg.dt);
    let mut rho = vectorize(rho0.as_operator());
    let sqdt = cfg.dt.sqrt();
    let b2 = cfg.beta * cfg.beta;
    let half_b = 0.5 * cfg.beta / sqdt;

    let mut z = Vec::with_capacity(cfg.steps);
    let mut snapshots = Vec::new();
    let mut expectation = Vec::new();
    let mut diag = SimDiagnostics {
        min_eigenvalue: f64::INFINITY,
        ..Default::default()
    };
    let check = |rho: &[C64], diag: &mut SimDiagnostics| -> Result<()> {
        let op = devectorize(rho)?;
        let m = op.hermitian_eigenvalues()?[0];
        diag.eig_checks += 1;
        diag.min_eigenvalue = diag.min_eigenvalue.min(m);
        if m < 0.0 {
            diag.negative_excursions += 1;
        }
        Ok(())
    };

    for k in 0..cfg.steps {
        if cfg.record_rho_every.is_some_and(|e| k % e == 0) {
            snapshots.push((k, DensityMatrix::from_operator_unchecked(devectorize(&rho)?)));
        }
        if k % cfg.eig_check_every == 0 {
            check(&rho, &mut diag)?;
        }
        let ta = st.expectation(&rho);
        if cfg.record_expectation_every.is_some_and(|e| k % e == 0) {
            expectation.push(ta);
        }
        let g: f64 = StandardNormal.sample(&mut rng);
        z.push(b2 * ta + half_b * g);
        let dev = st.step(&mut rho, sqdt * g, k)?;
        diag.max_trace_deviation = diag.max_trace_deviation.max(dev);
    }
    check(&rho, &mut diag)?;
    if let Some(x) = z.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite detector sample {x}")));
    }
    if diag.min_eigenvalue < -0.05 {
        log::warn!(
            "state eigenvalue dipped to {:.3e}; consider a smaller dt",
            diag.min_eigenvalue
        );
    }

    Ok(TrajectoryRecord {
        dim: d,
        dt: cfg.dt,
        seed: cfg.seed,
        beta: cfg.beta,
        model_hash,
        z,
        snapshots,
        expectation_every: cfg.record_expectation_every.unwrap_or(0),
        expectation,
        diagnostics: diag,
    })
}

/// Independent trajectories for the given seeds, run in parallel.
pub fn simulate_ensemble(model: &ModelBundle, cfg: &SimConfig, seeds: &[u64]) -> Result<Vec<TrajectoryRecord>> {
    let l = model.liouvillian(cfg.beta)?;
    let rho = match &cfg.initial_state {
        InitialState::Steady => l.steady_state().clone(),
        InitialState::Custom(r) => r.clone(),
    };
    let hash = model.hash_bytes();
    seeds
        .par_iter()
        .map(|&s| {
            let mut c = cfg.clone();
            c.seed = s;
            simulate_with(l.matrix(), &model.a, &rho, &c, hash)
        })
        .collect()
}

/// Monte-Carlo check of `<rho(t+dt) z(t)> = (b^2/2)(A rho + rho A)` for one
/// step from `rho`. Returns the largest entry deviation.
pub fn lemma_check(
    model: &ModelBundle,
    rho: &DensityMatrix,
    beta: f64,
    dt: f64,
    n_draws: usize,
    seed: u64,
) -> Result<f64> {
    if n_draws == 0 {
        return Err(Error::InvalidArgument("need at least one draw".into()));
    }
    let l = model.liouvillian_with_damping(beta, true);
    // the averaged generator may be degenerate (no steady state needed here)
    let generator = match l {
        Ok(l) => l.matrix().clone(),
        Err(_) => crate::liouvillian::assemble_generator(&model.h, &model.dissipators, &model.a, beta)?,
    };
    let d = rho.dim();
    let mut st = Stepper::new(&generator, &model.a, beta, dt);
    let start = vectorize(rho.as_operator());
    let ta = st.expectation(&start);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![ZERO; d * d];
    let mut v = start.clone();
    for k in 0..n_draws {
        let g: f64 = StandardNormal.sample(&mut rng);
        v.copy_from_slice(&start);
        st.step(&mut v, dt.sqrt() * g, k)?;
        let z = beta * beta * ta + 0.5 * beta * g / dt.sqrt();
        for (a, x) in acc.iter_mut().zip(&v) {
            *a += x * z;
        }
    }
    let target = model
        .a
        .anticommutator(rho.as_operator())
        .scale_real(0.5 * beta * beta);
    let mean = devectorize(&acc)?.scale_real(1.0 / n_draws as f64);
    Ok((&mean - &target).max_abs())
}
