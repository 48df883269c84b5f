//! Full conditional distributions of the time-varying model and the sweeps
//! that draw from them.
//!
//! Gaussian conditionals are kept in a variance-scaled form: with
//! `r = sigma2_eps / sigma2_u`,
//!
//! ```text
//! precision = (c r I + Z2_t'Z2_t) / sigma2_eps
//! mean      = (c r I + Z2_t'Z2_t)^-1 (r * neighbours + Z2_t'(y_t - Z1_t beta1))
//! ```
//!
//! which is algebraically the textbook `N(A^-1 B, A^-1)` form but stays finite
//! when `sigma2_eps` is driven towards zero by noise-free data.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::{GibbsState, VcnvardData};
use crate::error::{Error, Result};

/// Floor applied to an inverse-gamma rate that collapses to zero.
pub const RATE_FLOOR: f64 = 1e-300;

/// `IG(shape, rate)` with density `rate^shape / Gamma(shape) x^(-shape-1) e^(-rate/x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvGamma {
    pub shape: f64,
    pub rate: f64,
}

impl InvGamma {
    pub fn log_density(&self, x: f64) -> f64 {
        self.shape * self.rate.ln()
            - statrs::function::gamma::ln_gamma(self.shape)
            - (self.shape + 1.0) * x.ln()
            - self.rate / x
    }

    /// Draw, flooring a non-positive rate. The flag reports whether the
    /// floor was applied.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, bool)> {
        let (rate, floored) = if self.rate > 0.0 {
            (self.rate, false)
        } else {
            (RATE_FLOOR, true)
        };
        let g: f64 = Gamma::new(self.shape, 1.0)
            .map_err(|e| Error::InvalidArgument(format!("inverse-gamma shape {}: {e}", self.shape)))?
            .sample(rng);
        Ok((rate / g, floored))
    }

    pub fn mean(&self) -> f64 {
        self.rate / (self.shape - 1.0)
    }
}

/// Multivariate normal with precision `scaled_precision / variance_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianConditional {
    pub mean: DVector<f64>,
    pub scaled_precision: DMatrix<f64>,
    pub variance_scale: f64,
}

impl GaussianConditional {
    fn from_scaled(
        scaled_precision: DMatrix<f64>,
        scaled_rhs: DVector<f64>,
        variance_scale: f64,
    ) -> Result<Self> {
        let chol = scaled_precision
            .clone()
            .cholesky()
            .ok_or_else(|| Error::RankDeficient {
                rcond: 0.0,
                columns: vec!["conditional precision".into()],
            })?;
        Ok(Self {
            mean: chol.solve(&scaled_rhs),
            scaled_precision,
            variance_scale,
        })
    }

    pub fn precision(&self) -> DMatrix<f64> {
        &self.scaled_precision / self.variance_scale
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.scaled_precision
            .clone()
            .cholesky()
            .map(|c| c.inverse() * self.variance_scale)
            .unwrap_or_else(|| DMatrix::from_element(self.mean.len(), self.mean.len(), f64::NAN))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.mean.len();
        if d == 0 {
            return DVector::zeros(0);
        }
        let l = self
            .scaled_precision
            .clone()
            .cholesky()
            .expect("precision validated at construction")
            .unpack();
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        // L' x = z gives x ~ N(0, (L L')^-1)
        let x = l
            .transpose()
            .solve_upper_triangular(&z)
            .expect("cholesky factor has a positive diagonal");
        &self.mean + x * self.variance_scale.sqrt()
    }

    /// Log density including the normalising constant.
    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let d = self.mean.len() as f64;
        let diff = x - &self.mean;
        let quad = diff.dot(&(&self.scaled_precision * &diff)) / self.variance_scale;
        let logdet = self
            .scaled_precision
            .clone()
            .cholesky()
            .map(|c| 2.0 * c.l().diagonal().map(f64::ln).sum())
            .unwrap_or(f64::NAN)
            - d * self.variance_scale.ln();
        -0.5 * quad + 0.5 * logdet - 0.5 * d * (2.0 * std::f64::consts::PI).ln()
    }
}

/// `sigma2_eps | rest ~ IG(N / 2, RSS / 2)`, `RSS` over all periods and pairs.
pub fn sigma2_eps_conditional(state: &GibbsState, data: &VcnvardData) -> InvGamma {
    InvGamma {
        shape: 0.5 * data.n_obs() as f64,
        rate: 0.5 * data.rss(state).max(0.0),
    }
}

/// `sigma2_u | rest ~ IG(m (T - 1) / 2, sum_t |beta2_t - beta2_{t-1}|^2 / 2)`.
pub fn sigma2_u_conditional(state: &GibbsState, data: &VcnvardData) -> InvGamma {
    InvGamma {
        shape: 0.5 * (data.m() * (data.periods() - 1)) as f64,
        rate: 0.5 * state.increment_ss(),
    }
}

/// Constant coefficients: precision `sum_t Z1_t'Z1_t / sigma2_eps`, mean
/// solving against `sum_t Z1_t'(y_t - Z2_t beta2_t)`.
pub fn beta1_conditional(state: &GibbsState, data: &VcnvardData) -> Result<GaussianConditional> {
    let mut rhs = DVector::zeros(data.k1());
    for t in 0..data.periods() {
        rhs += &data.h1[t] - &data.g12[t] * &state.beta2[t];
    }
    GaussianConditional::from_scaled(data.g11_sum.clone(), rhs, state.sigma2_eps)
}

/// State `beta2_t` (zero-based `t`) given its random-walk neighbours.
pub fn beta2_conditional(
    state: &GibbsState,
    data: &VcnvardData,
    t: usize,
) -> Result<GaussianConditional> {
    let periods = data.periods();
    if t >= periods {
        return Err(Error::InvalidArgument(format!(
            "state index {t} outside 0..{periods}"
        )));
    }
    let m = data.m();
    let ratio = state.sigma2_eps / state.sigma2_u;
    let mut neighbours = DVector::zeros(m);
    let mut count = 0.0;
    if t > 0 {
        neighbours += &state.beta2[t - 1];
        count += 1.0;
    }
    if t + 1 < periods {
        neighbours += &state.beta2[t + 1];
        count += 1.0;
    }
    let precision = DMatrix::identity(m, m) * (count * ratio) + &data.g22[t];
    let data_term = &data.h2[t] - data.g12[t].transpose() * &state.beta1;
    let rhs = neighbours * ratio + data_term;
    GaussianConditional::from_scaled(precision, rhs, state.sigma2_eps)
}

/// Shared varying block when every `beta2_t` is tied to one value.
pub fn pooled_beta2_conditional(
    state: &GibbsState,
    data: &VcnvardData,
) -> Result<GaussianConditional> {
    let m = data.m();
    let mut precision = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for t in 0..data.periods() {
        precision += &data.g22[t];
        rhs += &data.h2[t] - data.g12[t].transpose() * &state.beta1;
    }
    GaussianConditional::from_scaled(precision, rhs, state.sigma2_eps)
}

/// How many inverse-gamma draws hit [`RATE_FLOOR`] during a sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepFlags {
    pub floored_sigma2_eps: usize,
    pub floored_sigma2_u: usize,
}

/// One systematic-scan sweep: `sigma2_eps`, `sigma2_u`, `beta1`, then
/// `beta2_1 .. beta2_T` in ascending order, each conditioned on the latest values.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut GibbsState,
    data: &VcnvardData,
    rng: &mut R,
) -> Result<SweepFlags> {
    let mut flags = SweepFlags::default();
    let (s, floored) = sigma2_eps_conditional(state, data).sample(rng)?;
    state.sigma2_eps = s;
    flags.floored_sigma2_eps += usize::from(floored);

    let (s, floored) = sigma2_u_conditional(state, data).sample(rng)?;
    state.sigma2_u = s;
    flags.floored_sigma2_u += usize::from(floored);

    coefficient_pass(state, data, rng)?;
    Ok(flags)
}

/// Draw `beta1` and then `beta2_1 .. beta2_T` with both variances held fixed.
/// Also used once before the first sweep: from a flat state path the first
/// `sigma2_u` draw would see zero increments and collapse to the rate floor.
pub fn coefficient_pass<R: Rng + ?Sized>(
    state: &mut GibbsState,
    data: &VcnvardData,
    rng: &mut R,
) -> Result<()> {
    if data.k1() > 0 {
        state.beta1 = beta1_conditional(state, data)?.sample(rng);
    }
    for t in 0..data.periods() {
        state.beta2[t] = beta2_conditional(state, data, t)?.sample(rng);
    }
    Ok(())
}

/// Sweep for the constant-coefficient reduction: the varying block is a
/// single vector shared by every period and `sigma2_u` is not updated.
pub fn pooled_sweep<R: Rng + ?Sized>(
    state: &mut GibbsState,
    data: &VcnvardData,
    rng: &mut R,
) -> Result<SweepFlags> {
    let mut flags = SweepFlags::default();
    let (s, floored) = sigma2_eps_conditional(state, data).sample(rng)?;
    state.sigma2_eps = s;
    flags.floored_sigma2_eps += usize::from(floored);

    if data.k1() > 0 {
        state.beta1 = beta1_conditional(state, data)?.sample(rng);
    }
    let shared = pooled_beta2_conditional(state, data)?.sample(rng);
    for b in &mut state.beta2 {
        b.copy_from(&shared);
    }
    Ok(flags)
}
