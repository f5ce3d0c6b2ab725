//! C ABI for qpoly.
//!
//! Objects are opaque handles created by `qp_*_new`-style functions and
//! released with the matching `qp_*_free`. Every fallible call returns a
//! [`QpStatus`]; on failure a message is kept per thread and can be read
//! with [`qp_last_error_message`]. Complex matrices are passed as `2*d*d`
//! doubles, row-major, real and imaginary parts interleaved.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use qpoly::estimators::{estimate_s2, frame_fft, FrameSpec};
use qpoly::liouvillian::lindblad_dissipator;
use qpoly::models::{single_spin_model, zno_indium_model, HyperfineMode, ModelBundle, SingleSpinParams, SpinPairParams};
use qpoly::polyspectra::{cumulant3_time, cumulant4_time, cumulant_chain, s2, s2_grid, s3, s3_grid, s4, s4_correlation_cut, s4_cut_grid};
use qpoly::sme::{simulate, SimConfig, TrajectoryRecord};
use qpoly::{DensityMatrix, DissipatorSpec, Error, Liouvillian, Operator, C64};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NoSteadyState = 4,
    Numerical = 5,
    UnsupportedOrder = 6,
    Simulation = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

impl From<&Error> for QpStatus {
    fn from(e: &Error) -> Self {
        use Error::*;
        match e {
            DimensionMismatch(_) | NotSquareLength(_) => QpStatus::DimensionMismatch,
            NoSteadyState { .. } | MultipleSteadyStates { .. } | UnstableMode { .. } => QpStatus::NoSteadyState,
            DefectiveMatrix { .. } | InaccurateDecomposition { .. } | EigenSolverFailed | ImaginaryResidue { .. } => {
                QpStatus::Numerical
            }
            UnsupportedOrder(_) => QpStatus::UnsupportedOrder,
            StateBlowup { .. } | StepTooLarge { .. } => QpStatus::Simulation,
            Io(_) | Json(_) | Format(_) | Config(_) => QpStatus::Io,
            _ => QpStatus::InvalidArgument,
        }
    }
}

/// Model description: Hamiltonian, measured operator and dissipators.
pub struct QpModel(ModelBundle);

/// Liouvillian with its eigendecomposition, at a fixed measurement strength.
pub struct QpLiouvillian(Liouvillian);

/// Simulated detector record.
pub struct QpTrajectory(TrajectoryRecord);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: QpStatus, msg: impl Into<String>) -> QpStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), QpStatus>>(f: F) -> QpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QpStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(QpStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

trait OrStatus<T> {
    fn st(self) -> Result<T, QpStatus>;
}

impl<T> OrStatus<T> for qpoly::Result<T> {
    fn st(self) -> Result<T, QpStatus> {
        self.map_err(|e| fail(QpStatus::from(&e), e.to_string()))
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, QpStatus> {
    p.as_ref().ok_or_else(|| fail(QpStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], QpStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(QpStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a>(p: *mut f64, n: usize, what: &str) -> Result<&'a mut [f64], QpStatus> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(QpStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn out<T>(p: *mut T, v: T, what: &str) -> Result<(), QpStatus> {
    if p.is_null() {
        return Err(fail(QpStatus::NullPointer, format!("{what} is null")));
    }
    p.write(v);
    Ok(())
}

unsafe fn matrix(p: *const f64, d: usize, what: &str) -> Result<Operator, QpStatus> {
    let v = slice(p, 2 * d * d, what)?;
    Ok(Operator::from_fn(d, |i, j| {
        let k = 2 * (i * d + j);
        C64::new(v[k], v[k + 1])
    }))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, QpStatus> {
    if p.is_null() {
        return Err(fail(QpStatus::NullPointer, "path is null"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(QpStatus::InvalidArgument, "path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes of the last error message on this thread, excluding NUL.
#[no_mangle]
pub extern "C" fn qp_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes().len()))
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `len - 1` bytes). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn qp_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |c| c.as_bytes());
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Spin-1/2 with `H = w.sigma/2`, measured along z, relaxing at `gamma`
/// toward the maximally mixed state.
///
/// # Safety
/// `out_model` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qp_model_single_spin(
    wx: f64,
    wy: f64,
    wz: f64,
    gamma: f64,
    out_model: *mut *mut QpModel,
) -> QpStatus {
    guard(|| {
        let m = single_spin_model(&SingleSpinParams::new([wx, wy, wz], gamma)).st()?;
        out(out_model, boxed(QpModel(m)), "out_model")
    })
}

/// Indium donor pair in ZnO. Field in tesla, rates in 1/ns, time unit ns.
/// `temperature <= 0` selects the high-temperature limit.
///
/// # Safety
/// `out_model` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qp_model_zno(
    bx: f64,
    by: f64,
    bz: f64,
    temperature: f64,
    gamma_e: f64,
    gamma_n: f64,
    x_only_hyperfine: c_int,
    out_model: *mut *mut QpModel,
) -> QpStatus {
    guard(|| {
        let mut p = SpinPairParams::with_field([bx, by, bz], (temperature > 0.0).then_some(temperature));
        p.gamma_e = gamma_e;
        p.gamma_n = gamma_n;
        if x_only_hyperfine != 0 {
            p.hyperfine_mode = HyperfineMode::XOnly;
        }
        let m = zno_indium_model(&p).st()?;
        out(out_model, boxed(QpModel(m)), "out_model")
    })
}

/// Model from explicit `d x d` matrices with no dissipators yet.
///
/// # Safety
/// `h` and `a` must point to `2*d*d` doubles; `out_model` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qp_model_from_matrices(
    d: usize,
    h: *const f64,
    a: *const f64,
    out_model: *mut *mut QpModel,
) -> QpStatus {
    guard(|| {
        if d == 0 {
            return Err(fail(QpStatus::InvalidArgument, "dimension must be positive"));
        }
        let h = matrix(h, d, "h")?;
        let a = matrix(a, d, "a")?;
        let m = ModelBundle::new("custom", h, a, Vec::new(), vec!["system".into()], 1.0).st()?;
        out(out_model, boxed(QpModel(m)), "out_model")
    })
}

fn push_dissipator(model: &mut QpModel, spec: DissipatorSpec) -> Result<(), QpStatus> {
    let m = &model.0;
    let mut ds = m.dissipators.clone();
    ds.push(spec);
    let next = ModelBundle::new(m.name.clone(), m.h.clone(), m.a.clone(), ds, m.labels.clone(), m.time_unit).st()?;
    model.0 = next;
    Ok(())
}

/// Adds `rate * (L rho L+ - {L+L, rho}/2)`.
///
/// # Safety
/// `model` must be a live handle; `jump` must point to `2*d*d` doubles.
#[no_mangle]
pub unsafe extern "C" fn qp_model_add_lindblad(model: *mut QpModel, rate: f64, jump: *const f64) -> QpStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| fail(QpStatus::NullPointer, "model is null"))?;
        let l = matrix(jump, m.0.dim(), "jump")?;
        let sup = lindblad_dissipator(&l).st()?;
        push_dissipator(m, DissipatorSpec::custom(rate, sup))
    })
}

/// Adds relaxation `rate * (Tr(rho) rho_final - rho)` on the whole space.
///
/// # Safety
/// `model` must be a live handle; `rho_final` must point to `2*d*d` doubles.
#[no_mangle]
pub unsafe extern "C" fn qp_model_add_relaxation(model: *mut QpModel, rate: f64, rho_final: *const f64) -> QpStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| fail(QpStatus::NullPointer, "model is null"))?;
        let rho = DensityMatrix::new(matrix(rho_final, m.0.dim(), "rho_final")?).st()?;
        push_dissipator(m, DissipatorSpec::relaxation_whole(rate, rho))
    })
}

/// # Safety
/// `model` must be a live handle; `out_dim` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qp_model_dim(model: *const QpModel, out_dim: *mut usize) -> QpStatus {
    guard(|| out(out_dim, deref(model, "model")?.0.dim(), "out_dim"))
}

/// Writes the 64 hex digits of the model hash plus a NUL into `buf`.
///
/// # Safety
/// `model` must be a live handle; `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn qp_model_hash(model: *const QpModel, buf: *mut c_char, len: usize) -> QpStatus {
    guard(|| {
        let h = deref(model, "model")?.0.hash();
        if buf.is_null() {
            return Err(fail(QpStatus::NullPointer, "buf is null"));
        }
        if len < h.len() + 1 {
            return Err(fail(QpStatus::BufferTooSmall, format!("hash needs {} bytes", h.len() + 1)));
        }
        ptr::copy_nonoverlapping(h.as_ptr().cast(), buf, h.len());
        *buf.add(h.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qp_model_free(model: *mut QpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Builds the Liouvillian at measurement strength `beta`; the measurement
/// dephasing term is included when `measurement_damping` is non-zero.
///
/// # Safety
/// `model` must be a live handle; `out_l` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qp_liouvillian_new(
    model: *const QpModel,
    beta: f64,
    measurement_damping: c_int,
    out_l: *mut *mut QpLiouvillian,
) -> QpStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let l = m.0.liouvillian_with_damping(beta, measurement_damping != 0).st()?;
        out(out_l, boxed(QpLiouvillian(l)), "out_l")
    })
}

/// # Safety
/// `l` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qp_liouvillian_free(l: *mut QpLiouvillian) {
    if !l.is_null() {
        drop(Box::from_raw(l));
    }
}

/// Steady state as `2*d*d` interleaved doubles, row-major.
///
/// # Safety
/// `l` must be a live handle; `rho` must hold `2*d*d` doubles.
#[no_mangle]
pub unsafe extern "C" fn qp_liouvillian_steady_state(l: *const QpLiouvillian, rho: *mut f64) -> QpStatus {
    guard(|| {
        let l = &deref(l, "l")?.0;
        let d = l.dim();
        let dst = slice_mut(rho, 2 * d * d, "rho")?;
        let s = l.steady_state().as_operator();
        for i in 0..d {
            for j in 0..d {
                let z = s.get(i, j);
                dst[2 * (i * d + j)] = z.re;
                dst[2 * (i * d + j) + 1] = z.im;
            }
        }
        Ok(())
    })
}

/// Power spectrum at angular frequency `omega`.
///
/// # Safety
/// `l` must be a live handle; `value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qp_s2(l: *const QpLiouvillian, omega: f64, shot_noise: c_int, value: *mut f64) -> QpStatus {
    guard(|| {
        let l = &deref(l, "l")?.0;
        let v = s2(l, omega, l.beta(), shot_noise != 0).st()?;
        out(value, v, "value")
    })
}

/// Bispectrum `S3(w1, w2)`.
///
/// # Safety
/// `l` must be a live handle; `re` and `im` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qp_s3(l: *const QpLiouvillian, w1: f64, w2: f64, re: *mut f64, im: *mut f64) -> QpStatus {
    guard(|| {
        let l = &deref(l, "l")?.0;
        let v = s3(l, w1, w2, l.beta());
        out(re, v.re, "re")?;
        out(im, v.im, "im")
    })
}

/// Trispectrum `S4(w1, w2, w3)`, fourth frequency `-(w1 + w2 + w3)`.
///
/// # Safety
/// `l` must be a live handle; `re` and `im` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qp_s4(
    l: *const QpLiouvillian,
    w1: f64,
    w2: f64,
    w3: f64,
    re: *mut f64,
    im: *mut f64,
) -> QpStatus {
    guard(|| {
        let l = &deref(l, "l")?.0;
        let v = s4(l, w1, w2, w3, l.beta());
        out(re, v.re, "re")?;
        out(im, v.im, "im")
    })
}

/// Correlation cut `S4(w1, -w1, w2, -w2)`.
///
/// # Safety
/// `l` must be a live handle; `value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qp_s4_cut(l: *const QpLiouvillian, w1: f64, w2: f64, value: *mut f64) -> QpStatus {
    guard(|| {
        let l = &deref(l, "l")?.0;
        let v = s4_correlation_cut(l, w1, w2, l.beta()).st()?;
        out(value, v, "value")
    })
}

/// Power spectrum on `n` increasing angular frequencies.
///
/// # Safety
/// `omegas` and `values` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn qp_s2_grid(
    l: *const QpLiouvillian,
    omegas: *const f64,
    n: usize,
    shot_noise: c_int,
    values: *mut f64,
) -> QpStatus {
    guard(|| {
        let l = &deref(l, "l")?.0;
        let w = slice(omegas, n, "omegas")?;
        let v = s2_grid(l, w, l.beta(), shot_noise != 0).st()?;
        slice_mut(values, n, "values")?.copy_from_slice(&v);
        Ok(())
    })
}

/// Bispectrum on `n1 x n2` points, row-major over `ax1`.
///
/// # Safety
/// Axes hold `n1`, `n2` doubles; `re` and `im` hold `n1*n2`.
#[no_mangle]
pub unsafe extern "C" fn qp_s3_grid(
    l: *const QpLiouvillian,
    ax1: *const f64,
    n1: usize,
    ax2: *const f64,
    n2: usize,
    re: *mut f64,
    im: *mut f64,
) -> QpStatus {
    guard(|| {
        let l = &deref(l, "l")?.0;
        let v = s3_grid(l, slice(ax1, n1, "ax1")?, slice(ax2, n2, "ax2")?, l.beta()).st()?;
        let re = slice_mut(re, n1 * n2, "re")?;
        let im = slice_mut(im, n1 * n2, "im")?;
        for (k, z) in v.iter().enumerate() {
            re[k] = z.re;
            im[k] = z.im;
        }
        Ok(())
    })
}

/// Trispectrum correlation cut on `n1 x n2` points, row-major over `ax1`.
///
/// # Safety
/// Axes hold `n1`, `n2` doubles; `values` holds `n1*n2`.
#[no_mangle]
pub unsafe extern "C" fn qp_s4_cut_grid(
    l: *const QpLiouvillian,
    ax1: *const f64,
    n1: usize,
    ax2: *const f64,
    n2: usize,
    values: *mut f64,
) -> QpStatus {
    guard(|| {
        let l = &deref(l, "l")?.0;
        let v = s4_cut_grid(l, slice(ax1, n1, "ax1")?, slice(ax2, n2, "ax2")?, l.beta()).st()?;
        slice_mut(values, n1 * n2, "values")?.copy_from_slice(&v);
        Ok(())
    })
}

/// Time-domain cumulant of order `n` (2 to 4) of the detector output.
///
/// # Safety
/// `times` must hold `n` doubles; `value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qp_cumulant(l: *const QpLiouvillian, times: *const f64, n: usize, value: *mut f64) -> QpStatus {
    guard(|| {
        let l = &deref(l, "l")?.0;
        let t = slice(times, n, "times")?;
        let b = l.beta();
        let v = match n {
            2 => cumulant_chain(l, t, b),
            3 => cumulant3_time(l, [t[0], t[1], t[2]], b),
            4 => cumulant4_time(l, [t[0], t[1], t[2], t[3]], b),
            _ => Err(Error::UnsupportedOrder(n)),
        }
        .st()?;
        out(value, v, "value")
    })
}

/// Integrates the stochastic master equation from the steady state.
///
/// # Safety
/// `model` must be a live handle; `out_traj` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qp_simulate(
    model: *const QpModel,
    beta: f64,
    dt: f64,
    steps: usize,
    seed: u64,
    out_traj: *mut *mut QpTrajectory,
) -> QpStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let rec = simulate(&m.0, &SimConfig::new(dt, steps, seed, beta)).st()?;
        out(out_traj, boxed(QpTrajectory(rec)), "out_traj")
    })
}

/// # Safety
/// `traj` must be a live handle; `n` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qp_trajectory_len(traj: *const QpTrajectory, n: *mut usize) -> QpStatus {
    guard(|| out(n, deref(traj, "traj")?.0.len(), "n"))
}

/// Copies the detector samples into `buf`.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qp_trajectory_samples(traj: *const QpTrajectory, buf: *mut f64, len: usize) -> QpStatus {
    guard(|| {
        let z = &deref(traj, "traj")?.0.z;
        if len < z.len() {
            return Err(fail(QpStatus::BufferTooSmall, format!("need {} samples", z.len())));
        }
        slice_mut(buf, z.len(), "buf")?.copy_from_slice(z);
        Ok(())
    })
}

/// Writes the binary trajectory and its JSON sidecar.
///
/// # Safety
/// `traj` must be a live handle; `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn qp_trajectory_save(traj: *const QpTrajectory, path: *const c_char) -> QpStatus {
    guard(|| {
        let t = deref(traj, "traj")?;
        t.0.save(&path_arg(path)?).st()
    })
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out_traj` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qp_trajectory_load(path: *const c_char, out_traj: *mut *mut QpTrajectory) -> QpStatus {
    guard(|| {
        let rec = TrajectoryRecord::load(&path_arg(path)?).st()?;
        out(out_traj, boxed(QpTrajectory(rec)), "out_traj")
    })
}

/// # Safety
/// `traj` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qp_trajectory_free(traj: *mut QpTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Frame-averaged power spectrum of `n` samples on bins `0..=frame_length/2`.
/// `omega`, `value` and `std_err` must each hold `frame_length/2 + 1` doubles.
///
/// # Safety
/// Buffer sizes as stated above.
#[no_mangle]
pub unsafe extern "C" fn qp_estimate_s2(
    z: *const f64,
    n: usize,
    dt: f64,
    frame_length: usize,
    frames_per_estimate: usize,
    omega: *mut f64,
    value: *mut f64,
    std_err: *mut f64,
) -> QpStatus {
    guard(|| {
        let z = slice(z, n, "z")?;
        let spec = FrameSpec::new(frame_length, frames_per_estimate);
        let frames = frame_fft(z, dt, &spec).st()?;
        let e = estimate_s2(&frames, &spec).st()?;
        let k = e.values.len();
        slice_mut(omega, k, "omega")?.copy_from_slice(&e.axes[0]);
        slice_mut(value, k, "value")?.copy_from_slice(&e.values);
        slice_mut(std_err, k, "std_err")?.copy_from_slice(&e.std_err);
        Ok(())
    })
}
