//! C interface to the estimators.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_fit`
//! functions and released with the matching `*_free`. Every fallible call
//! returns an [`NvardStatus`]; on failure the message is available from
//! [`nvard_last_error`] on the same thread.
//!
//! Matrices are passed as flat column-major `n x n` blocks, one per period.
//! Diagonal entries are ignored. Vectors over pairs use the off-diagonal
//! column-major order (`vecd`).

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nvard_core::design::{build_design, ColumnSplit, RegressionData};
use nvard_core::dyad::{
    dyad_count, equal_weights, CovariateTensor, DyadMatrix, DyadicPanel, WeightScheme,
};
use nvard_core::nvard::{fit_nvard, predict_nvard, NvardPosterior};
use nvard_core::vcnvard::{
    predict_vcnvard_design, run_gibbs, GibbsConfig, SamplerMode, VcnvardData, VcnvardFit,
};
use nvard_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NvardStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    NonFinite = 4,
    RankDeficient = 5,
    UndefinedMean = 6,
    Divergence = 7,
    BufferTooSmall = 8,
    Panic = 9,
    Other = 10,
}

impl From<&Error> for NvardStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::DiagonalAccess(_) | Error::InvalidWeights(_) => {
                NvardStatus::InvalidArgument
            }
            Error::Dimension(_) => NvardStatus::Dimension,
            Error::NonFinite(_) => NvardStatus::NonFinite,
            Error::RankDeficient { .. } => NvardStatus::RankDeficient,
            Error::UndefinedMean(_) => NvardStatus::UndefinedMean,
            Error::Divergence { .. } => NvardStatus::Divergence,
            _ => NvardStatus::Other,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn nvard_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nvard_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

enum Failure {
    Null(&'static str),
    Status(NvardStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NvardStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NvardStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            NvardStatus::NullPointer
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            NvardStatus::from(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            NvardStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

fn copy_out(values: impl ExactSizeIterator<Item = f64>, out: *mut f64, len: usize) -> Result<(), Failure> {
    if values.len() > len {
        return Err(Failure::Status(
            NvardStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", values.len()),
        ));
    }
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    for (k, v) in values.enumerate() {
        unsafe { *out.add(k) = v };
    }
    Ok(())
}

/// Flows, covariates and weights of one panel.
pub struct NvardPanel {
    panel: DyadicPanel,
    covariates: CovariateTensor,
    weights: WeightScheme,
}

/// Closed-form posterior of the constant-coefficient model.
pub struct NvardFit {
    post: NvardPosterior,
}

/// Gibbs output of the time-varying model.
pub struct NvardVcFit {
    fit: VcnvardFit,
}

/// Sampler settings. `pooled != 0` ties the varying block across periods.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NvardGibbsConfig {
    pub chain_length: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
    pub pooled: i32,
}

impl From<NvardGibbsConfig> for GibbsConfig {
    fn from(c: NvardGibbsConfig) -> Self {
        GibbsConfig {
            chain_length: c.chain_length,
            burn_in: c.burn_in,
            thin: c.thin,
            seed: c.seed,
            n_chains: c.n_chains,
            mode: if c.pooled != 0 {
                SamplerMode::Pooled
            } else {
                SamplerMode::TimeVarying
            },
        }
    }
}

#[no_mangle]
pub extern "C" fn nvard_gibbs_config_default() -> NvardGibbsConfig {
    let d = GibbsConfig::default();
    NvardGibbsConfig {
        chain_length: d.chain_length,
        burn_in: d.burn_in,
        thin: d.thin,
        seed: d.seed,
        n_chains: d.n_chains,
        pooled: 0,
    }
}

/// Build a panel from `periods + 1` flow matrices (`Y_0..Y_T`) and `m`
/// covariates given for `cov_periods` periods starting at period 1, each
/// period a block of `n(n-1) x m` values, pair-major. Weights are equal.
///
/// # Safety
/// `flows` must point to `(periods + 1) * n * n` doubles and `covariates`
/// to `cov_periods * n * (n - 1) * m` doubles (may be null when that is 0).
#[no_mangle]
pub unsafe extern "C" fn nvard_panel_new(
    n: usize,
    periods: usize,
    flows: *const f64,
    m: usize,
    cov_periods: usize,
    covariates: *const f64,
    out: *mut *mut NvardPanel,
) -> NvardStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        if n < 3 {
            return Err(Error::InvalidArgument(format!("need n >= 3, got {n}")).into());
        }
        let cells = n * n;
        let flows = slice(flows, (periods + 1) * cells, "flows")?;
        let mats = flows
            .chunks(cells)
            .map(|block| DyadMatrix::from_fn(n, |i, j| block[j * n + i]))
            .collect::<Result<Vec<_>, _>>()?;
        let panel = DyadicPanel::unlabeled(mats)?;
        let rows = dyad_count(n) * m;
        let covariates = if m == 0 {
            CovariateTensor::empty(n)
        } else {
            let values = slice(covariates, cov_periods * rows, "covariates")?;
            let names = (0..m).map(|c| format!("x{}", c + 1)).collect();
            CovariateTensor::new(n, names, values.chunks(rows).map(<[f64]>::to_vec).collect())?
        };
        let weights = equal_weights(n)?;
        *out = Box::into_raw(Box::new(NvardPanel {
            panel,
            covariates,
            weights,
        }));
        Ok(())
    })
}

/// # Safety
/// `panel` must come from [`nvard_panel_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nvard_panel_free(panel: *mut NvardPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// Number of design columns `7 + m`.
///
/// # Safety
/// `panel` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn nvard_panel_columns(panel: *const NvardPanel, out: *mut usize) -> NvardStatus {
    guard(|| {
        let p = handle(panel, "panel")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = 7 + p.covariates.m();
        Ok(())
    })
}

fn regression(p: &NvardPanel, last: usize) -> Result<RegressionData, Error> {
    RegressionData::from_panel(&p.panel, &p.weights, &p.covariates, last)
}

/// Fit the constant-coefficient model on periods `1..=last`.
///
/// # Safety
/// `panel` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nvard_fit(
    panel: *const NvardPanel,
    last: usize,
    out: *mut *mut NvardFit,
) -> NvardStatus {
    guard(|| {
        let p = handle(panel, "panel")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let post = fit_nvard(&regression(p, last)?.suff_stats()?)?;
        *out = Box::into_raw(Box::new(NvardFit { post }));
        Ok(())
    })
}

/// # Safety
/// `fit` must come from [`nvard_fit`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nvard_fit_free(fit: *mut NvardFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Posterior mean of the coefficients into `out[0..K]`.
///
/// # Safety
/// `fit` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nvard_fit_mean(fit: *const NvardFit, out: *mut f64, len: usize) -> NvardStatus {
    guard(|| {
        let f = handle(fit, "fit")?;
        copy_out(f.post.mu.iter().copied(), out, len)
    })
}

/// Degrees of freedom and the inverse-gamma shape and rate of the error variance.
///
/// # Safety
/// `fit` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn nvard_fit_variance(
    fit: *const NvardFit,
    dof: *mut f64,
    shape: *mut f64,
    rate: *mut f64,
) -> NvardStatus {
    guard(|| {
        let f = handle(fit, "fit")?;
        if dof.is_null() || shape.is_null() || rate.is_null() {
            return Err(Failure::Null("dof/shape/rate"));
        }
        *dof = f.post.v;
        *shape = f.post.a;
        *rate = f.post.b;
        Ok(())
    })
}

/// Forecast of period `t` (built from the flows at `t - 1`) into
/// `out[0..n(n-1)]`.
///
/// # Safety
/// Handles must be live; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nvard_fit_predict(
    fit: *const NvardFit,
    panel: *const NvardPanel,
    t: usize,
    out: *mut f64,
    len: usize,
) -> NvardStatus {
    guard(|| {
        let f = handle(fit, "fit")?;
        let p = handle(panel, "panel")?;
        let z = build_design(&p.panel, &p.weights, &p.covariates, t)?;
        let pred = predict_nvard(&f.post, &z)?;
        copy_out(pred.iter().copied(), out, len)
    })
}

/// Run the Gibbs sampler on periods `1..=last` with the design columns
/// listed in `varying` drifting over time.
///
/// # Safety
/// `panel` and `config` must be valid; `varying` must hold `n_varying` indices.
#[no_mangle]
pub unsafe extern "C" fn nvard_vc_fit(
    panel: *const NvardPanel,
    last: usize,
    varying: *const usize,
    n_varying: usize,
    config: *const NvardGibbsConfig,
    out: *mut *mut NvardVcFit,
) -> NvardStatus {
    guard(|| {
        let p = handle(panel, "panel")?;
        let cfg = *handle(config, "config")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let cols: &[usize] = if n_varying == 0 {
            &[]
        } else if varying.is_null() {
            return Err(Failure::Null("varying"));
        } else {
            std::slice::from_raw_parts(varying, n_varying)
        };
        let data = regression(p, last)?;
        let split = ColumnSplit::new(7 + p.covariates.m(), cols)?;
        let vd = VcnvardData::new(&data, &split)?;
        let fit = run_gibbs(&vd, &cfg.into())?;
        *out = Box::into_raw(Box::new(NvardVcFit { fit }));
        Ok(())
    })
}

/// # Safety
/// `fit` must come from [`nvard_vc_fit`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nvard_vc_fit_free(fit: *mut NvardVcFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Posterior means of the observation and state variances.
///
/// # Safety
/// `fit` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn nvard_vc_fit_variances(
    fit: *const NvardVcFit,
    sigma2_eps: *mut f64,
    sigma2_u: *mut f64,
) -> NvardStatus {
    guard(|| {
        let f = handle(fit, "fit")?;
        if sigma2_eps.is_null() || sigma2_u.is_null() {
            return Err(Failure::Null("sigma2_eps/sigma2_u"));
        }
        *sigma2_eps = f.fit.sigma2_eps;
        *sigma2_u = f.fit.sigma2_u;
        Ok(())
    })
}

/// Posterior mean of the full coefficient vector at training period `t`
/// (1-based) into `out[0..K]`.
///
/// # Safety
/// `fit` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nvard_vc_fit_coefficients(
    fit: *const NvardVcFit,
    t: usize,
    out: *mut f64,
    len: usize,
) -> NvardStatus {
    guard(|| {
        let f = handle(fit, "fit")?;
        if t == 0 || t > f.fit.periods() {
            return Err(Error::InvalidArgument(format!(
                "period {t} outside 1..={}",
                f.fit.periods()
            ))
            .into());
        }
        let beta = f.fit.split()?.join_vector(&f.fit.beta1, &f.fit.beta2[t - 1]);
        copy_out(beta.iter().copied(), out, len)
    })
}

/// Forecast of period `t` from the last training state.
///
/// # Safety
/// Handles must be live; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nvard_vc_fit_predict(
    fit: *const NvardVcFit,
    panel: *const NvardPanel,
    t: usize,
    out: *mut f64,
    len: usize,
) -> NvardStatus {
    guard(|| {
        let f = handle(fit, "fit")?;
        let p = handle(panel, "panel")?;
        let z = build_design(&p.panel, &p.weights, &p.covariates, t)?;
        let pred = predict_vcnvard_design(&f.fit, &z)?;
        copy_out(pred.iter().copied(), out, len)
    })
}
