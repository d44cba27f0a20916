//! C interface to the dose-exposure-response study engine.
//!
//! Every function reports a [`DertrialStatus`] and returns data through out
//! parameters. Study handles are opaque: create one with
//! [`dertrial_study_new`], configure it, run it, read the aggregate rows,
//! and release it with [`dertrial_study_free`]. All functions may be called
//! from any thread, but a single handle must not be shared between threads
//! without external synchronisation.
//!
//! Returned string pointers are borrowed: the error message stays valid
//! until the next failing call on the same thread, the version string for
//! the life of the program.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use dertrial::dgp::{DgpForm, ScenarioConfig};
use dertrial::harness::{run_linear_check, run_study, AggregateReport, HarnessError, StudySpec};

/// Outcome of a C-interface call.
#[repr(i32)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DertrialStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// The request was malformed: unknown scenario, invalid grid, index out
    /// of range, or a buffer of the wrong length.
    InvalidConfig = 2,
    /// The computation itself failed; see `dertrial_last_error_message`.
    RuntimeError = 3,
    /// A panic was caught at the language boundary. The handle involved is
    /// left in an unspecified but safe state; freeing it remains valid.
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let sanitised = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("error message unavailable").expect("static message"));
    LAST_ERROR.with(|slot| *slot.borrow_mut() = sanitised);
}

fn fail(status: DertrialStatus, message: &str) -> DertrialStatus {
    set_last_error(message);
    status
}

/// Runs a closure, converting a panic into [`DertrialStatus::Panic`] instead
/// of unwinding across the C boundary.
fn guarded<F: FnOnce() -> DertrialStatus>(body: F) -> DertrialStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic with non-string payload".to_string());
            fail(DertrialStatus::Panic, &format!("internal panic: {msg}"))
        }
    }
}

/// A configured Monte Carlo study and, once run, its aggregate results.
pub struct DertrialStudy {
    spec: StudySpec,
    results: Option<Vec<AggregateReport>>,
}

/// One aggregate comparison cell: a (trial size, confounding level,
/// estimator) combination summarised over all replications. Two-element
/// arrays hold the (intercept, slope) pair of the marginal dose-response
/// model.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct DertrialRow {
    /// Trial size of the cell.
    pub n: u32,
    /// Exposure-response confounding correlation of the cell.
    pub rho: f64,
    /// Whether the sequential estimator used the control-function
    /// adjustment (true) or ignored confounding (false).
    pub cf_adjusted: bool,
    /// Bias of the direct dose-response regression.
    pub bias_dr: [f64; 2],
    /// Bias of the sequential (dose-exposure-response) estimator.
    pub bias_der: [f64; 2],
    /// Monte Carlo variance of the direct regression.
    pub var_dr: [f64; 2],
    /// Monte Carlo variance of the sequential estimator.
    pub var_der: [f64; 2],
    /// Mean squared error of the direct regression.
    pub mse_dr: [f64; 2],
    /// Mean squared error of the sequential estimator.
    pub mse_der: [f64; 2],
    /// var(sequential) / var(direct) per coefficient.
    pub variance_ratio: [f64; 2],
    /// mse(sequential) / mse(direct) per coefficient.
    pub mse_ratio: [f64; 2],
    /// Jackknife standard error of `variance_ratio` (NaN when the study
    /// ran with per-column exclusion).
    pub variance_ratio_se: [f64; 2],
    /// Jackknife standard error of `mse_ratio`.
    pub mse_ratio_se: [f64; 2],
    /// Replications dropped because an estimator failed.
    pub excluded_replications: u64,
    /// Replications that entered the summaries.
    pub used_replications: u64,
}

/// Summary of the closed-form linear cross-check; see
/// [`dertrial_linear_check`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct DertrialLinearCheck {
    /// Trial size used for every replication.
    pub n: u32,
    /// Number of replications.
    pub replications: u64,
    /// var(unadjusted sequential slope) / var(direct slope).
    pub ratio_unadjusted: f64,
    /// var(adjusted sequential slope) / var(direct slope); the adjusted
    /// product is algebraically identical to the direct slope, so this is
    /// exactly 1 in a working build.
    pub ratio_cf: f64,
    /// Closed-form large-sample prediction of `ratio_unadjusted`.
    pub analytic_ratio_unadjusted: f64,
    /// Largest observed |adjusted product − direct slope| across the
    /// replications.
    pub max_identity_deviation: f64,
    /// Replications where that deviation exceeded the identity tolerance;
    /// must be 0.
    pub identity_violations: u64,
}

/// Creates a study handle for a built-in scenario, preconfigured with the
/// standard comparison grid: n ∈ {40, 80, 120}, ρ ∈ {0, 0.3, 0.6, 0.9},
/// 10000 replications, seed 123, both sequential estimators against the
/// direct regression. `scenario` selects the built-in dose grid (1 or 2);
/// `prose_noise_form` switches the generator to the alternative noise
/// parameterisation.
///
/// On success writes the new handle to `out_study`; the caller owns it and
/// must release it with [`dertrial_study_free`].
///
/// # Safety
/// `out_study` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn dertrial_study_new(
    scenario: u32,
    prose_noise_form: bool,
    out_study: *mut *mut DertrialStudy,
) -> DertrialStatus {
    guarded(|| {
        let Some(out) = (unsafe { out_study.as_mut() }) else {
            return fail(DertrialStatus::NullArgument, "out_study is null");
        };
        let form = if prose_noise_form {
            DgpForm::Prose
        } else {
            DgpForm::Code
        };
        match ScenarioConfig::scenario(scenario, 40, 0.0, form) {
            Ok(template) => {
                let handle = DertrialStudy {
                    spec: StudySpec::table_default(template),
                    results: None,
                };
                *out = Box::into_raw(Box::new(handle));
                DertrialStatus::Ok
            }
            Err(e) => fail(DertrialStatus::InvalidConfig, &e.to_string()),
        }
    })
}

/// Replaces the study's trial-size and confounding grids. The values are
/// copied before returning; previously computed results are discarded.
/// Grid validity (sizes divisible by the number of dose levels, ρ within
/// [0, 1)) is checked when the study runs.
///
/// # Safety
/// `study` must be a live handle from [`dertrial_study_new`]; `n_values`
/// must be valid for reading `n_len` 32-bit integers and `rho_values` for
/// reading `rho_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dertrial_study_set_grid(
    study: *mut DertrialStudy,
    n_values: *const u32,
    n_len: usize,
    rho_values: *const f64,
    rho_len: usize,
) -> DertrialStatus {
    guarded(|| {
        let Some(study) = (unsafe { study.as_mut() }) else {
            return fail(DertrialStatus::NullArgument, "study is null");
        };
        if n_values.is_null() || rho_values.is_null() {
            return fail(DertrialStatus::NullArgument, "grid array is null");
        }
        if n_len == 0 || rho_len == 0 {
            return fail(DertrialStatus::InvalidConfig, "grid arrays must be non-empty");
        }
        let ns = unsafe { std::slice::from_raw_parts(n_values, n_len) };
        let rhos = unsafe { std::slice::from_raw_parts(rho_values, rho_len) };
        study.spec.n_values = ns.iter().map(|&n| n as usize).collect();
        study.spec.rho_values = rhos.to_vec();
        study.results = None;
        DertrialStatus::Ok
    })
}

/// Sets the number of Monte Carlo replications per cell. Previously
/// computed results are discarded.
///
/// # Safety
/// `study` must be a live handle from [`dertrial_study_new`].
#[no_mangle]
pub unsafe extern "C" fn dertrial_study_set_replications(
    study: *mut DertrialStudy,
    replications: u64,
) -> DertrialStatus {
    guarded(|| {
        let Some(study) = (unsafe { study.as_mut() }) else {
            return fail(DertrialStatus::NullArgument, "study is null");
        };
        study.spec.n_replications = replications as usize;
        study.results = None;
        DertrialStatus::Ok
    })
}

/// Sets the master seed. The same seed and configuration reproduce results
/// bit for bit, independent of thread count. Previously computed results
/// are discarded.
///
/// # Safety
/// `study` must be a live handle from [`dertrial_study_new`].
#[no_mangle]
pub unsafe extern "C" fn dertrial_study_set_seed(
    study: *mut DertrialStudy,
    master_seed: u64,
) -> DertrialStatus {
    guarded(|| {
        let Some(study) = (unsafe { study.as_mut() }) else {
            return fail(DertrialStatus::NullArgument, "study is null");
        };
        study.spec.master_seed = master_seed;
        study.results = None;
        DertrialStatus::Ok
    })
}

/// Runs the configured study, replacing any previous results. Rows become
/// available through [`dertrial_study_row_count`] and
/// [`dertrial_study_row`].
///
/// # Safety
/// `study` must be a live handle from [`dertrial_study_new`].
#[no_mangle]
pub unsafe extern "C" fn dertrial_study_run(study: *mut DertrialStudy) -> DertrialStatus {
    guarded(|| {
        let Some(study) = (unsafe { study.as_mut() }) else {
            return fail(DertrialStatus::NullArgument, "study is null");
        };
        match run_study(&study.spec) {
            Ok(reports) => {
                study.results = Some(reports);
                DertrialStatus::Ok
            }
            Err(HarnessError::Config(e)) => fail(DertrialStatus::InvalidConfig, &e.to_string()),
            Err(e) => fail(DertrialStatus::RuntimeError, &e.to_string()),
        }
    })
}

/// Writes the number of aggregate rows the last run produced (one per
/// grid cell and estimator). Fails with [`DertrialStatus::RuntimeError`]
/// when the study has not been run since its configuration last changed.
///
/// # Safety
/// `study` must be a live handle from [`dertrial_study_new`] and
/// `out_count` valid for writing one `size_t`.
#[no_mangle]
pub unsafe extern "C" fn dertrial_study_row_count(
    study: *const DertrialStudy,
    out_count: *mut usize,
) -> DertrialStatus {
    guarded(|| {
        let Some(study) = (unsafe { study.as_ref() }) else {
            return fail(DertrialStatus::NullArgument, "study is null");
        };
        let Some(out) = (unsafe { out_count.as_mut() }) else {
            return fail(DertrialStatus::NullArgument, "out_count is null");
        };
        match &study.results {
            Some(rows) => {
                *out = rows.len();
                DertrialStatus::Ok
            }
            None => fail(DertrialStatus::RuntimeError, "study has not been run"),
        }
    })
}

/// Copies aggregate row `index` into `out_row`. Rows are ordered by trial
/// size, then confounding level, with the unadjusted estimator before the
/// adjusted one.
///
/// # Safety
/// `study` must be a live handle from [`dertrial_study_new`] and `out_row`
/// valid for writing one [`DertrialRow`].
#[no_mangle]
pub unsafe extern "C" fn dertrial_study_row(
    study: *const DertrialStudy,
    index: usize,
    out_row: *mut DertrialRow,
) -> DertrialStatus {
    guarded(|| {
        let Some(study) = (unsafe { study.as_ref() }) else {
            return fail(DertrialStatus::NullArgument, "study is null");
        };
        let Some(out) = (unsafe { out_row.as_mut() }) else {
            return fail(DertrialStatus::NullArgument, "out_row is null");
        };
        let Some(rows) = &study.results else {
            return fail(DertrialStatus::RuntimeError, "study has not been run");
        };
        let Some(r) = rows.get(index) else {
            return fail(
                DertrialStatus::InvalidConfig,
                &format!("row index {index} out of range ({} rows)", rows.len()),
            );
        };
        *out = DertrialRow {
            n: r.n as u32,
            rho: r.rho,
            cf_adjusted: r.adjustment.is_cf(),
            bias_dr: r.dr_bias,
            bias_der: r.der_bias,
            var_dr: r.dr_variance,
            var_der: r.der_variance,
            mse_dr: r.dr_mse,
            mse_der: r.der_mse,
            variance_ratio: r.ratio_variance_vs_dr,
            mse_ratio: r.ratio_mse_vs_dr,
            variance_ratio_se: r.ratio_variance_se,
            mse_ratio_se: r.ratio_mse_se,
            excluded_replications: r.excluded_replications as u64,
            used_replications: r.used_replications as u64,
        };
        DertrialStatus::Ok
    })
}

/// Writes the number of dose levels in the study's design (the length of
/// every per-dose ratio row).
///
/// # Safety
/// `study` must be a live handle from [`dertrial_study_new`] and
/// `out_count` valid for writing one `size_t`.
#[no_mangle]
pub unsafe extern "C" fn dertrial_study_dose_count(
    study: *const DertrialStudy,
    out_count: *mut usize,
) -> DertrialStatus {
    guarded(|| {
        let Some(study) = (unsafe { study.as_ref() }) else {
            return fail(DertrialStatus::NullArgument, "study is null");
        };
        let Some(out) = (unsafe { out_count.as_mut() }) else {
            return fail(DertrialStatus::NullArgument, "out_count is null");
        };
        *out = study.spec.scenario.dose_levels.len();
        DertrialStatus::Ok
    })
}

/// Copies the per-dose prediction-variance ratios of aggregate row
/// `index` — var(sequential prediction)/var(direct prediction) at each dose
/// level — into `out_ratios`. `out_len` must equal the study's dose count.
///
/// # Safety
/// `study` must be a live handle from [`dertrial_study_new`] and
/// `out_ratios` valid for writing `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dertrial_study_per_dose_ratio(
    study: *const DertrialStudy,
    index: usize,
    out_ratios: *mut f64,
    out_len: usize,
) -> DertrialStatus {
    guarded(|| {
        let Some(study) = (unsafe { study.as_ref() }) else {
            return fail(DertrialStatus::NullArgument, "study is null");
        };
        if out_ratios.is_null() {
            return fail(DertrialStatus::NullArgument, "out_ratios is null");
        }
        let Some(rows) = &study.results else {
            return fail(DertrialStatus::RuntimeError, "study has not been run");
        };
        let Some(r) = rows.get(index) else {
            return fail(
                DertrialStatus::InvalidConfig,
                &format!("row index {index} out of range ({} rows)", rows.len()),
            );
        };
        if out_len != r.per_dose_variance_ratio.len() {
            return fail(
                DertrialStatus::InvalidConfig,
                &format!(
                    "out_len is {out_len} but the study has {} dose levels",
                    r.per_dose_variance_ratio.len()
                ),
            );
        }
        let out = unsafe { std::slice::from_raw_parts_mut(out_ratios, out_len) };
        out.copy_from_slice(&r.per_dose_variance_ratio);
        DertrialStatus::Ok
    })
}

/// Releases a study handle. Passing null is a no-op.
///
/// # Safety
/// `study` must be null or a handle from [`dertrial_study_new`] that has
/// not already been freed.
#[no_mangle]
pub unsafe extern "C" fn dertrial_study_free(study: *mut DertrialStudy) {
    if !study.is_null() {
        drop(unsafe { Box::from_raw(study) });
    }
}

/// Runs the linear-model cross-check, where the sequential-versus-direct
/// comparison has closed-form answers: the adjusted sequential slope is
/// algebraically identical to the direct slope, and the unadjusted variance
/// ratio has an analytic large-sample value. Uses the scenario-1 design at
/// the given size with no confounding.
///
/// # Safety
/// `out_summary` must be valid for writing one [`DertrialLinearCheck`].
#[no_mangle]
pub unsafe extern "C" fn dertrial_linear_check(
    n: u32,
    replications: u64,
    master_seed: u64,
    out_summary: *mut DertrialLinearCheck,
) -> DertrialStatus {
    guarded(|| {
        let Some(out) = (unsafe { out_summary.as_mut() }) else {
            return fail(DertrialStatus::NullArgument, "out_summary is null");
        };
        let cfg = match ScenarioConfig::scenario(1, n as usize, 0.0, DgpForm::Code) {
            Ok(cfg) => cfg,
            Err(e) => return fail(DertrialStatus::InvalidConfig, &e.to_string()),
        };
        match run_linear_check(&cfg, replications as usize, master_seed) {
            Ok(report) => {
                *out = DertrialLinearCheck {
                    n: report.n as u32,
                    replications: report.replications as u64,
                    ratio_unadjusted: report.ratio_unadj,
                    ratio_cf: report.ratio_cf,
                    analytic_ratio_unadjusted: report.analytic_ratio_unadj,
                    max_identity_deviation: report.max_identity_deviation,
                    identity_violations: report.identity_violations as u64,
                };
                DertrialStatus::Ok
            }
            Err(HarnessError::Config(e)) => fail(DertrialStatus::InvalidConfig, &e.to_string()),
            Err(e) => fail(DertrialStatus::RuntimeError, &e.to_string()),
        }
    })
}

/// Returns the error message of the most recent failing call on this
/// thread, or an empty string when nothing has failed. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dertrial_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Returns the library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn dertrial_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
