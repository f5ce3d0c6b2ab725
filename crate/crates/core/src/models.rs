//! Concrete models: a single precessing spin-1/2 and the indium donor pair
//! in ZnO (nuclear spin 9/2 coupled to the donor electron).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::liouvillian::{DissipatorKind, DissipatorSpec, Liouvillian, Target};
use crate::operator::{c, kron, pauli, spin_matrices, DensityMatrix, Operator, C64};

const HBAR: f64 = 1.054_571_817e-34;
const K_B: f64 = 1.380_649e-23;

/// Everything needed to assemble a Liouvillian.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub name: String,
    pub h: Operator,
    pub a: Operator,
    pub dissipators: Vec<DissipatorSpec>,
    /// Tensor factor labels, outermost first.
    pub labels: Vec<String>,
    /// Length of one internal time unit in seconds (1 for dimensionless models).
    pub time_unit: f64,
}

impl ModelBundle {
    pub fn new(
        name: impl Into<String>,
        h: Operator,
        a: Operator,
        dissipators: Vec<DissipatorSpec>,
        labels: Vec<String>,
        time_unit: f64,
    ) -> Result<Self> {
        if h.dim() != a.dim() {
            return Err(Error::DimensionMismatch(format!(
                "Hamiltonian has dimension {}, measurement operator {}",
                h.dim(),
                a.dim()
            )));
        }
        for (what, op) in [("Hamiltonian", &h), ("measurement operator", &a)] {
            let deviation = op.hermitian_deviation();
            if deviation > 1e-10 * op.max_abs().max(1.0) {
                return Err(Error::NonHermitianInput { what, deviation });
            }
        }
        if !(time_unit > 0.0) || !time_unit.is_finite() {
            return Err(Error::InvalidArgument(format!("time unit must be positive, got {time_unit}")));
        }
        for d in &dissipators {
            d.to_superop(h.dim())?;
        }
        Ok(Self {
            name: name.into(),
            h,
            a,
            dissipators,
            labels,
            time_unit,
        })
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    /// Liouvillian including the measurement dephasing `beta^2 (A.A - {A^2,.}/2)`.
    pub fn liouvillian(&self, beta: f64) -> Result<Liouvillian> {
        Liouvillian::build(&self.h, &self.dissipators, &self.a, beta)
    }

    pub fn liouvillian_with_damping(&self, beta: f64, measurement_damping: bool) -> Result<Liouvillian> {
        Liouvillian::build_with_damping(&self.h, &self.dissipators, &self.a, beta, measurement_damping)
    }

    /// Ordinary frequency in Hz to angular frequency in internal units.
    pub fn angular_from_hz(&self, f: f64) -> f64 {
        2.0 * std::f64::consts::PI * f * self.time_unit
    }

    pub fn hz_from_angular(&self, omega: f64) -> f64 {
        omega / (2.0 * std::f64::consts::PI * self.time_unit)
    }

    /// SHA-256 over the matrices and rates that define the model.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.dim() as u64).to_le_bytes());
        hasher.update(self.time_unit.to_le_bytes());
        feed_op(&mut hasher, &self.h);
        feed_op(&mut hasher, &self.a);
        for d in &self.dissipators {
            hasher.update((d.rate + 0.0).to_le_bytes());
            match &d.kind {
                DissipatorKind::IsotropicRelaxation {
                    dims,
                    target,
                    rho_final,
                } => {
                    hasher.update([0u8]);
                    hasher.update((dims.0 as u64).to_le_bytes());
                    hasher.update((dims.1 as u64).to_le_bytes());
                    hasher.update([*target as u8]);
                    feed_op(&mut hasher, rho_final.as_operator());
                }
                DissipatorKind::Custom(s) => {
                    hasher.update([1u8]);
                    let m = s.as_mat();
                    for j in 0..m.ncols() {
                        for i in 0..m.nrows() {
                            feed_c(&mut hasher, m[(i, j)]);
                        }
                    }
                }
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn hash_bytes(&self) -> [u8; 32] {
        let hex = self.hash();
        let mut out = [0u8; 32];
        for (k, o) in out.iter_mut().enumerate() {
            *o = u8::from_str_radix(&hex[2 * k..2 * k + 2], 16).unwrap_or(0);
        }
        out
    }
}

// adding 0.0 maps -0.0 to +0.0 so equal models hash equally
fn feed_c(hasher: &mut Sha256, z: C64) {
    hasher.update((z.re + 0.0).to_le_bytes());
    hasher.update((z.im + 0.0).to_le_bytes());
}

fn feed_op(hasher: &mut Sha256, op: &Operator) {
    let d = op.dim();
    for j in 0..d {
        for i in 0..d {
            feed_c(hasher, op.get(i, j));
        }
    }
}

fn real(x: f64) -> C64 {
    c(x, 0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleSpinParams {
    /// Precession vector; `H = (w . sigma) / 2`.
    pub omega: [f64; 3],
    pub gamma: f64,
    /// Bloch vector the relaxation drives toward. Zero is the usual
    /// unpolarized `I/2` target.
    #[serde(default)]
    pub equilibrium: [f64; 3],
}

impl SingleSpinParams {
    pub fn new(omega: [f64; 3], gamma: f64) -> Self {
        Self {
            omega,
            gamma,
            equilibrium: [0.0; 3],
        }
    }
}

pub fn single_spin_model(p: &SingleSpinParams) -> Result<ModelBundle> {
    if !(p.gamma >= 0.0) || !p.gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("gamma must be finite and >= 0, got {}", p.gamma)));
    }
    if p.omega.iter().chain(&p.equilibrium).any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("single-spin parameters must be finite".into()));
    }
    let s = pauli();
    let mut h = Operator::zeros(2);
    for (w, sj) in p.omega.iter().zip(&s) {
        h = &h + &sj.scale_real(0.5 * w);
    }
    let target = DensityMatrix::from_bloch(p.equilibrium)?;
    let mut dissipators = Vec::new();
    if p.gamma > 0.0 {
        dissipators.push(DissipatorSpec::relaxation_whole(p.gamma, target));
    }
    ModelBundle::new("single-spin", h, s[2].clone(), dissipators, vec!["spin".into()], 1.0)
}

/// `s_j = Tr(rho sigma_j)` dynamics read off the generator versus the Bloch
/// form `w x s - gamma (s - s_eq) - 2 beta^2 (s_x, s_y, 0)`. Returns the
/// largest absolute deviation over drift and the linear part.
pub fn bloch_form_check(l: &Liouvillian, p: &SingleSpinParams) -> Result<f64> {
    if l.dim() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "Bloch form needs a two-level system, got dimension {}",
            l.dim()
        )));
    }
    let sig = pauli();
    let b2 = l.beta() * l.beta();
    let rate = |bloch: [f64; 3]| -> Result<[f64; 3]> {
        let mut rho = Operator::identity(2).scale_real(0.5);
        for (x, s) in bloch.iter().zip(&sig) {
            rho = &rho + &s.scale_real(0.5 * x);
        }
        let d = l.matrix().apply(&rho)?;
        Ok([0, 1, 2].map(|k| sig[k].matmul(&d).trace().re))
    };
    let w = p.omega;
    let drift = rate([0.0; 3])?;
    let mut dev = 0.0_f64;
    for k in 0..3 {
        dev = dev.max((drift[k] - p.gamma * p.equilibrium[k]).abs());
    }
    for j in 0..3 {
        let mut e = [0.0; 3];
        e[j] = 1.0;
        let got = rate(e)?;
        let cross = [w[1] * e[2] - w[2] * e[1], w[2] * e[0] - w[0] * e[2], w[0] * e[1] - w[1] * e[0]];
        for k in 0..3 {
            let damp = if k < 2 { 2.0 * b2 } else { 0.0 };
            let expected = cross[k] - (p.gamma + damp) * e[k];
            dev = dev.max((got[k] - drift[k] - expected).abs());
        }
    }
    Ok(dev)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HyperfineMode {
    /// `A I . s`
    Isotropic,
    /// `A I_x s_x`
    XOnly,
}

/// Physical constants of the pair in SI-style units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZnoConstants {
    /// Electron gyromagnetic ratio, rad s^-1 T^-1.
    pub electron_gyro: f64,
    /// Nuclear gyromagnetic ratio, rad s^-1 T^-1.
    pub nuclear_gyro: f64,
    /// Hyperfine constant `A/h`, Hz.
    pub hyperfine_hz: f64,
    /// Quadrupole constant `P/h`, Hz.
    pub quadrupole_hz: f64,
}

impl Default for ZnoConstants {
    fn default() -> Self {
        Self {
            electron_gyro: 0.172e12,
            nuclear_gyro: 9.329e6,
            hyperfine_hz: 100.2e6,
            quadrupole_hz: 1.27e6,
        }
    }
}

/// Internal time unit of the pair model.
pub const ZNO_TIME_UNIT: f64 = 1e-9;
pub const ZNO_NUCLEAR_TWICE_SPIN: u32 = 9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinPairParams {
    /// Tesla.
    pub b_field: [f64; 3],
    /// Kelvin; `None` is the high-temperature limit.
    #[serde(default)]
    pub temperature: Option<f64>,
    /// Electron relaxation rate, 1/ns.
    pub gamma_e: f64,
    /// Nuclear relaxation rate, 1/ns.
    pub gamma_n: f64,
    pub hyperfine_mode: HyperfineMode,
    #[serde(default)]
    pub constants: ZnoConstants,
    /// Diagonal of the nuclear relaxation target in the `I_z` basis
    /// (descending m). Defaults to the maximally mixed state.
    #[serde(default)]
    pub nuclear_populations: Option<Vec<f64>>,
}

impl SpinPairParams {
    /// Field of magnitude `tesla` tilted by `angle_deg` out of the xy-plane
    /// from the x axis toward z.
    pub fn field_at_angle(tesla: f64, angle_deg: f64) -> [f64; 3] {
        let phi = angle_deg.to_radians();
        [tesla * phi.cos(), 0.0, tesla * phi.sin()]
    }

    /// Relaxation rates 1/(20 ns) and 1/(20 us), isotropic hyperfine.
    pub fn with_field(b_field: [f64; 3], temperature: Option<f64>) -> Self {
        Self {
            b_field,
            temperature,
            gamma_e: 1.0 / 20.0,
            gamma_n: 1.0 / 20_000.0,
            hyperfine_mode: HyperfineMode::Isotropic,
            constants: ZnoConstants::default(),
            nuclear_populations: None,
        }
    }
}

/// Electron target `exp(-g_e B.s / kT) / Z = (I - tanh(x/2) n.sigma) / 2`.
pub fn electron_final_state(b_field: [f64; 3], temperature: Option<f64>, electron_gyro: f64) -> Result<DensityMatrix> {
    let b = b_field.iter().map(|x| x * x).sum::<f64>().sqrt();
    let Some(t) = temperature else {
        return Ok(DensityMatrix::maximally_mixed(2));
    };
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {t}")));
    }
    if b == 0.0 {
        return Ok(DensityMatrix::maximally_mixed(2));
    }
    let x = HBAR * electron_gyro * b / (K_B * t);
    let p = (0.5 * x).tanh();
    DensityMatrix::from_bloch(b_field.map(|bj| -p * bj / b))
}

/// 20-dimensional pair on `C^10 (x) C^2` (nucleus first), in nanoseconds.
pub fn zno_indium_model(p: &SpinPairParams) -> Result<ModelBundle> {
    if !(p.gamma_e >= 0.0) || !(p.gamma_n >= 0.0) || !p.gamma_e.is_finite() || !p.gamma_n.is_finite() {
        return Err(Error::InvalidArgument("relaxation rates must be finite and >= 0".into()));
    }
    if p.b_field.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("magnetic field must be finite".into()));
    }
    let k = &p.constants;
    let tu = ZNO_TIME_UNIT;
    let two_pi = 2.0 * std::f64::consts::PI;
    let w_e = k.electron_gyro * tu;
    let w_n = k.nuclear_gyro * tu;
    let a_hf = two_pi * k.hyperfine_hz * tu;
    let p_q = two_pi * k.quadrupole_hz * tu;

    let dn = ZNO_NUCLEAR_TWICE_SPIN as usize + 1;
    let sig = pauli();
    let nuc = spin_matrices(ZNO_NUCLEAR_TWICE_SPIN);
    let id_n = Operator::identity(dn);
    let id_e = Operator::identity(2);
    let s: Vec<Operator> = sig.iter().map(|x| kron(&id_n, &x.scale_real(0.5))).collect();
    let ii: Vec<Operator> = nuc.iter().map(|x| kron(x, &id_e)).collect();

    let mut h = Operator::zeros(2 * dn);
    for j in 0..3 {
        h = &h + &s[j].scale_real(w_e * p.b_field[j]);
        h = &h - &ii[j].scale_real(w_n * p.b_field[j]);
    }
    let hyperfine = match p.hyperfine_mode {
        HyperfineMode::Isotropic => (0..3).fold(Operator::zeros(2 * dn), |acc, j| &acc + &ii[j].matmul(&s[j])),
        HyperfineMode::XOnly => ii[0].matmul(&s[0]),
    };
    h = &h + &hyperfine.scale_real(a_hf);
    h = &h + &ii[2].matmul(&ii[2]).scale_real(p_q);

    let rho_e = electron_final_state(p.b_field, p.temperature, k.electron_gyro)?;
    let rho_n = match &p.nuclear_populations {
        None => DensityMatrix::maximally_mixed(dn),
        Some(pop) => {
            if pop.len() != dn {
                return Err(Error::DimensionMismatch(format!(
                    "nuclear populations need {dn} entries, got {}",
                    pop.len()
                )));
            }
            DensityMatrix::new(Operator::diag(&pop.iter().map(|&x| real(x)).collect::<Vec<_>>()))?
        }
    };
    let dissipators = vec![
        DissipatorSpec::relaxation((dn, 2), Target::Second, p.gamma_e, rho_e),
        DissipatorSpec::relaxation((dn, 2), Target::First, p.gamma_n, rho_n),
    ];
    let a = kron(&id_n, &sig[2]);
    ModelBundle::new(
        "zno-indium",
        h,
        a,
        dissipators,
        vec!["nucleus (I=9/2)".into(), "electron (s=1/2)".into()],
        tu,
    )
}

/// Total x angular momentum `I_x + s_x` of the pair.
pub fn zno_total_jx() -> Operator {
    let dn = ZNO_NUCLEAR_TWICE_SPIN as usize + 1;
    let nuc = spin_matrices(ZNO_NUCLEAR_TWICE_SPIN);
    let sx = pauli()[0].scale_real(0.5);
    &kron(&nuc[0], &Operator::identity(2)) + &kron(&Operator::identity(dn), &sx)
}

/// `P I_z^2` term of the pair Hamiltonian in internal units.
pub fn zno_quadrupole_term(constants: &ZnoConstants) -> Operator {
    let nuc = spin_matrices(ZNO_NUCLEAR_TWICE_SPIN);
    let iz = kron(&nuc[2], &Operator::identity(2));
    iz.matmul(&iz)
        .scale_real(2.0 * std::f64::consts::PI * constants.quadrupole_hz * ZNO_TIME_UNIT)
}

/// Random Hamiltonian, measurement operator and `n_jumps` Lindblad channels
/// with entries uniform in the unit square; generically has a unique,
/// diagonalizable steady state. Used by the validation suites.
pub fn random_lindblad_model(d: usize, n_jumps: usize, rate: f64, seed: u64) -> Result<ModelBundle> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut entry = move || c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let h = Operator::from_fn(d, |_, _| entry()).hermitian_part();
    let a = Operator::from_fn(d, |_, _| entry()).hermitian_part();
    let mut dissipators = Vec::with_capacity(n_jumps);
    for _ in 0..n_jumps {
        let jump = Operator::from_fn(d, |_, _| entry());
        dissipators.push(DissipatorSpec::custom(rate, crate::liouvillian::lindblad_dissipator(&jump)?));
    }
    ModelBundle::new("random-lindblad", h, a, dissipators, vec!["system".into()], 1.0)
}
