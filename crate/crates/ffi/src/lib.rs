// Copyright 2026 The leakseq Authors
// SPDX-License-Identifier: Apache-2.0

//! C ABI over `leakseq`.
//!
//! Conventions:
//! - every fallible function returns a [`LeakseqStatus`]; on failure a
//!   message is stored per thread and can be read with
//!   [`leakseq_last_error_message`],
//! - objects are opaque handles created by `*_new`/`*_sample`/`*_load`
//!   functions and released with the matching `*_free`,
//! - 4x4 matrices are passed as two row-major arrays of 16 doubles holding
//!   the real and imaginary parts,
//! - panics never cross the boundary; they are reported as
//!   [`LeakseqStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use leakseq::algebra::{Op4, C64};
use leakseq::harness::read_archive;
use leakseq::metrics::{makhlin_invariants, pe_distance, pe_fidelity, weyl_coordinates, Projection, WeylCoordinates};
use leakseq::noise::{sample_ensemble, NoiseConfig, NoiseEnsemble};
use leakseq::optimizer::{optimize_sequence, OptimizerOptions, SequenceProblem, SolutionArchive};
use leakseq::sequence::{InteractionKind, RotationParams, SequenceParams};
use leakseq::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeakseqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numeric = 3,
    SingularProjection = 4,
    DegenerateInvariants = 5,
    MissingDependency = 6,
    Io = 7,
    Schema = 8,
    Verification = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeakseqInteraction {
    Zz = 0,
    XxPlusYy = 1,
}

impl From<LeakseqInteraction> for InteractionKind {
    fn from(k: LeakseqInteraction) -> Self {
        match k {
            LeakseqInteraction::Zz => InteractionKind::Zz,
            LeakseqInteraction::XxPlusYy => InteractionKind::XxPlusYy,
        }
    }
}

/// Noise settings; fill with [`leakseq_noise_config_default`] first.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LeakseqNoiseConfig {
    pub sigma_logical: f64,
    pub sigma_leakage: f64,
    pub sigma_local: f64,
    pub local_enabled: bool,
    pub virtual_z: bool,
    pub m_realizations: usize,
    pub seed: u64,
}

impl From<&LeakseqNoiseConfig> for NoiseConfig {
    fn from(c: &LeakseqNoiseConfig) -> Self {
        NoiseConfig {
            sigma_logical: c.sigma_logical,
            sigma_leakage: c.sigma_leakage,
            sigma_local: c.sigma_local,
            local_enabled: c.local_enabled,
            virtual_z: c.virtual_z,
            m_realizations: c.m_realizations,
            seed: c.seed,
            ..NoiseConfig::default()
        }
    }
}

/// Optimizer settings; fill with [`leakseq_optimizer_options_default`] first.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LeakseqOptimizerOptions {
    pub history_size: usize,
    pub grad_tol: f64,
    pub rel_f_tol: f64,
    pub max_iterations: usize,
    pub fd_step_scale: f64,
    pub restarts: usize,
}

impl From<&LeakseqOptimizerOptions> for OptimizerOptions {
    fn from(o: &LeakseqOptimizerOptions) -> Self {
        OptimizerOptions {
            history_size: o.history_size,
            grad_tol: o.grad_tol,
            rel_f_tol: o.rel_f_tol,
            max_iterations: o.max_iterations,
            fd_step_scale: o.fd_step_scale,
            restarts: o.restarts,
            ..OptimizerOptions::default()
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LeakseqMetrics {
    pub j_value: f64,
    pub gate_error: f64,
    pub pe_distance: f64,
    pub pe_error: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LeakseqOptimizationSummary {
    pub j_value: f64,
    pub in_sample_gate_error: f64,
    pub in_sample_pe_error: f64,
    pub out_of_sample_gate_error: f64,
    pub out_of_sample_pe_error: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Frozen noise ensemble.
pub struct LeakseqEnsemble(NoiseEnsemble);

/// Rotation angles of one sequence.
pub struct LeakseqSequence(SequenceParams);

/// Solved sequences keyed by length, used for warm starts.
pub struct LeakseqArchive(SolutionArchive);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_last_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(LeakseqStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Domain(_) => LeakseqStatus::InvalidArgument,
            Error::Numeric(_) => LeakseqStatus::Numeric,
            Error::SingularProjection { .. } => LeakseqStatus::SingularProjection,
            Error::DegenerateInvariants { .. } => LeakseqStatus::DegenerateInvariants,
            Error::MissingDependency { .. } => LeakseqStatus::MissingDependency,
            Error::Io { .. } => LeakseqStatus::Io,
            Error::Schema { .. } => LeakseqStatus::Schema,
            Error::Verification { .. } => LeakseqStatus::Verification,
        };
        Failure(status, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(LeakseqStatus::NullPointer, format!("`{name}` is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(LeakseqStatus::InvalidArgument, msg.into())
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> LeakseqStatus {
    let outcome = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".to_string());
        Err(Failure(LeakseqStatus::Panic, format!("panic: {msg}")))
    });
    match outcome {
        Ok(()) => {
            set_last_error(String::new());
            LeakseqStatus::Ok
        }
        Err(Failure(status, msg)) => {
            set_last_error(msg);
            status
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn as_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn read_op4(re: *const f64, im: *const f64) -> Result<Op4, Failure> {
    let (re, im) = (slice(re, 16, "re")?, slice(im, 16, "im")?);
    Ok(Op4::from_fn(|r, c| C64::new(re[4 * r + c], im[4 * r + c])))
}

fn leak<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len - 1` bytes) and returns the full message
/// length in bytes, excluding the terminator. `buf` may be null to query the
/// length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn leakseq_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn leakseq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn leakseq_noise_config_default(out: *mut LeakseqNoiseConfig) -> LeakseqStatus {
    guard(|| {
        let d = NoiseConfig::default();
        *as_mut(out, "out")? = LeakseqNoiseConfig {
            sigma_logical: d.sigma_logical,
            sigma_leakage: d.sigma_leakage,
            sigma_local: d.sigma_local,
            local_enabled: d.local_enabled,
            virtual_z: d.virtual_z,
            m_realizations: d.m_realizations,
            seed: d.seed,
        };
        Ok(())
    })
}

/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn leakseq_optimizer_options_default(out: *mut LeakseqOptimizerOptions) -> LeakseqStatus {
    guard(|| {
        let d = OptimizerOptions::default();
        *as_mut(out, "out")? = LeakseqOptimizerOptions {
            history_size: d.history_size,
            grad_tol: d.grad_tol,
            rel_f_tol: d.rel_f_tol,
            max_iterations: d.max_iterations,
            fd_step_scale: d.fd_step_scale,
            restarts: d.restarts,
        };
        Ok(())
    })
}

/// Draws an ensemble for sequences of `n_steps` steps.
///
/// # Safety
/// `config` must be null or valid; `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn leakseq_ensemble_sample(
    config: *const LeakseqNoiseConfig,
    n_steps: usize,
    out: *mut *mut LeakseqEnsemble,
) -> LeakseqStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        let ens = sample_ensemble(&as_ref(config, "config")?.into(), n_steps)?;
        *out = leak(LeakseqEnsemble(ens));
        Ok(())
    })
}

/// # Safety
/// `ensemble` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn leakseq_ensemble_len(ensemble: *const LeakseqEnsemble) -> usize {
    ensemble.as_ref().map_or(0, |e| e.0.len())
}

/// # Safety
/// `ensemble` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn leakseq_ensemble_free(ensemble: *mut LeakseqEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

/// Creates a sequence from `6 * n_steps` angles ordered
/// `alpha1, beta1, gamma1, alpha2, beta2, gamma2` per step.
///
/// # Safety
/// `angles` must point to `6 * n_steps` doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn leakseq_sequence_new(
    interaction: LeakseqInteraction,
    angles: *const f64,
    n_steps: usize,
    out: *mut *mut LeakseqSequence,
) -> LeakseqStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        let len = n_steps
            .checked_mul(RotationParams::LEN)
            .ok_or_else(|| invalid("n_steps is too large"))?;
        let seq = SequenceParams::from_flat(interaction.into(), slice(angles, len, "angles")?)?;
        *out = leak(LeakseqSequence(seq));
        Ok(())
    })
}

/// # Safety
/// `seq` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn leakseq_sequence_n_steps(seq: *const LeakseqSequence) -> usize {
    seq.as_ref().map_or(0, |s| s.0.n_steps())
}

/// Copies the `6 * n_steps` angles into `out`, which holds `len` doubles.
///
/// # Safety
/// `seq` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn leakseq_sequence_angles(seq: *const LeakseqSequence, out: *mut f64, len: usize) -> LeakseqStatus {
    guard(|| {
        let flat = as_ref(seq, "seq")?.0.to_flat();
        if out.is_null() {
            return Err(null("out"));
        }
        if len < flat.len() {
            return Err(invalid(format!("buffer holds {len} values, {} needed", flat.len())));
        }
        std::ptr::copy_nonoverlapping(flat.as_ptr(), out, flat.len());
        Ok(())
    })
}

/// # Safety
/// `seq` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn leakseq_sequence_free(seq: *mut LeakseqSequence) {
    if !seq.is_null() {
        drop(Box::from_raw(seq));
    }
}

/// Mean of gate error plus perfect-entangler distance over the ensemble.
///
/// # Safety
/// Handles must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn leakseq_functional_j(
    seq: *const LeakseqSequence,
    ensemble: *const LeakseqEnsemble,
    out: *mut f64,
) -> LeakseqStatus {
    guard(|| {
        let (seq, ens, out) = (as_ref(seq, "seq")?, as_ref(ensemble, "ensemble")?, as_mut(out, "out")?);
        *out = leakseq::optimizer::functional_j(&seq.0, &ens.0)?;
        Ok(())
    })
}

/// Ensemble-mean figures of merit; `pe_error` uses the raw logical block.
///
/// # Safety
/// Handles must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn leakseq_ensemble_metrics(
    seq: *const LeakseqSequence,
    ensemble: *const LeakseqEnsemble,
    out: *mut LeakseqMetrics,
) -> LeakseqStatus {
    guard(|| {
        let (seq, ens, out) = (as_ref(seq, "seq")?, as_ref(ensemble, "ensemble")?, as_mut(out, "out")?);
        let problem = SequenceProblem::new(seq.0.interaction(), &ens.0)?;
        let m = problem.metrics(&seq.0, Projection::Raw)?;
        *out = LeakseqMetrics {
            j_value: m.j_value,
            gate_error: m.gate_error,
            pe_distance: m.pe_distance,
            pe_error: m.pe_error,
        };
        Ok(())
    })
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn leakseq_archive_new(out: *mut *mut LeakseqArchive) -> LeakseqStatus {
    guard(|| {
        *as_mut(out, "out")? = leak(LeakseqArchive(SolutionArchive::new()));
        Ok(())
    })
}

/// Loads the solutions of a JSON archive written by the harness.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn leakseq_archive_load(path: *const c_char, out: *mut *mut LeakseqArchive) -> LeakseqStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| invalid("path is not valid UTF-8"))?;
        let file = read_archive(Path::new(path))?;
        let mut archive = SolutionArchive::new();
        for r in &file.records {
            archive.insert(r.n_steps, r.params()?);
        }
        *out = leak(LeakseqArchive(archive));
        Ok(())
    })
}

/// Stores a copy of `seq` under its length, replacing any previous entry.
///
/// # Safety
/// Handles must be live.
#[no_mangle]
pub unsafe extern "C" fn leakseq_archive_insert(archive: *mut LeakseqArchive, seq: *const LeakseqSequence) -> LeakseqStatus {
    guard(|| {
        let (archive, seq) = (as_mut(archive, "archive")?, as_ref(seq, "seq")?);
        archive.0.insert(seq.0.n_steps(), seq.0.clone());
        Ok(())
    })
}

/// Copies the stored solution of length `n` into a new handle.
///
/// # Safety
/// `archive` must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn leakseq_archive_get(
    archive: *const LeakseqArchive,
    n: usize,
    out: *mut *mut LeakseqSequence,
) -> LeakseqStatus {
    guard(|| {
        let (archive, out) = (as_ref(archive, "archive")?, as_mut(out, "out")?);
        let seq = archive
            .0
            .get(&n)
            .ok_or_else(|| invalid(format!("archive has no solution for length {n}")))?;
        *out = leak(LeakseqSequence(seq.clone()));
        Ok(())
    })
}

/// # Safety
/// `archive` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn leakseq_archive_free(archive: *mut LeakseqArchive) {
    if !archive.is_null() {
        drop(Box::from_raw(archive));
    }
}

/// Optimizes a length-`n` sequence.
///
/// `options` and `archive` may be null (defaults and an empty archive).
/// On success `*out_seq` receives a new sequence handle and `summary`, if
/// not null, the figures of merit.
///
/// # Safety
/// Non-null pointers must be valid; `out_seq` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn leakseq_optimize(
    n: usize,
    interaction: LeakseqInteraction,
    config: *const LeakseqNoiseConfig,
    options: *const LeakseqOptimizerOptions,
    archive: *const LeakseqArchive,
    eval_m: usize,
    out_seq: *mut *mut LeakseqSequence,
    summary: *mut LeakseqOptimizationSummary,
) -> LeakseqStatus {
    guard(|| {
        let out_seq = as_mut(out_seq, "out_seq")?;
        let config: NoiseConfig = as_ref(config, "config")?.into();
        let opts = options.as_ref().map(OptimizerOptions::from).unwrap_or_default();
        let empty = SolutionArchive::new();
        let archive = archive.as_ref().map_or(&empty, |a| &a.0);
        let r = optimize_sequence(n, interaction.into(), &config, &opts, archive, eval_m)?;
        if let Some(s) = summary.as_mut() {
            *s = LeakseqOptimizationSummary {
                j_value: r.j_value,
                in_sample_gate_error: r.in_sample_gate_error,
                in_sample_pe_error: r.in_sample_pe_error,
                out_of_sample_gate_error: r.out_of_sample_gate_error,
                out_of_sample_pe_error: r.out_of_sample_pe_error,
                iterations: r.iterations,
                converged: r.converged,
            };
        }
        *out_seq = leak(LeakseqSequence(r.params));
        Ok(())
    })
}

/// Makhlin invariants `(g1, g2, g3)` of a 4x4 block.
///
/// # Safety
/// `re`, `im` must point to 16 doubles; `out` to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn leakseq_makhlin_invariants(re: *const f64, im: *const f64, out: *mut f64) -> LeakseqStatus {
    guard(|| {
        let g = makhlin_invariants(&read_op4(re, im)?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        std::ptr::copy_nonoverlapping([g.g1, g.g2, g.g3].as_ptr(), out, 3);
        Ok(())
    })
}

/// Sign-corrected distance to the perfect entanglers.
///
/// # Safety
/// `re`, `im` must point to 16 doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn leakseq_pe_distance(re: *const f64, im: *const f64, out: *mut f64) -> LeakseqStatus {
    guard(|| {
        let d = pe_distance(&read_op4(re, im)?)?;
        *as_mut(out, "out")? = d;
        Ok(())
    })
}

/// Canonical Weyl chamber coordinates `(c1, c2, c3)`.
///
/// # Safety
/// `re`, `im` must point to 16 doubles; `out` to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn leakseq_weyl_coordinates(re: *const f64, im: *const f64, out: *mut f64) -> LeakseqStatus {
    guard(|| {
        let c = weyl_coordinates(&read_op4(re, im)?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        std::ptr::copy_nonoverlapping(c.as_array().as_ptr(), out, 3);
        Ok(())
    })
}

/// Perfect-entangler fidelity of canonical coordinates `c[0..3]`.
///
/// # Safety
/// `c` must point to 3 doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn leakseq_pe_fidelity(c: *const f64, out: *mut f64) -> LeakseqStatus {
    guard(|| {
        let c = slice(c, 3, "c")?;
        if c.iter().any(|v| !v.is_finite()) {
            return Err(invalid("coordinates must be finite"));
        }
        let w = WeylCoordinates {
            c1: c[0],
            c2: c[1],
            c3: c[2],
        };
        *as_mut(out, "out")? = pe_fidelity(&w);
        Ok(())
    })
}
