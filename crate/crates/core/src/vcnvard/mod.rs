//! Time-varying-coefficient model
//!
//! ```text
//! y_t     = Z1_t beta1 + Z2_t beta2_t + eps_t,   eps_t ~ N(0, sigma2_eps I),  t = 1..T
//! beta2_t = beta2_{t-1} + u_t,                   u_t   ~ N(0, sigma2_u I),    t = 2..T
//! ```
//!
//! estimated by Gibbs sampling from the full conditionals under flat priors
//! on `beta1` and `beta2_1` and `1/sigma2` priors on both variances.

pub mod conditionals;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::{ColumnSplit, DesignMatrix, DesignSplit, RegressionData};
use crate::diagnostics::{summarize, ScalarSummary};
use crate::error::{Error, Result};
use crate::nvard::{fit_nvard, point_estimates, NvardPosterior, SuffStats};

pub use conditionals::{
    beta1_conditional, beta2_conditional, coefficient_pass, gibbs_sweep, pooled_beta2_conditional, pooled_sweep,
    sigma2_eps_conditional, sigma2_u_conditional, GaussianConditional, InvGamma, SweepFlags,
};

/// Which sweep the chain runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    /// Full model: random-walk states and `sigma2_u` are sampled.
    #[default]
    TimeVarying,
    /// Varying block tied across periods, `sigma2_u` held at its start
    /// value. Reduces the model to constant coefficients.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConfig {
    /// Total sweeps per chain, burn-in included.
    pub chain_length: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
    pub mode: SamplerMode,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            chain_length: 300_000,
            burn_in: 180_000,
            thin: 10,
            seed: 0,
            n_chains: 1,
            mode: SamplerMode::TimeVarying,
        }
    }
}

impl GibbsConfig {
    /// Draws kept per chain.
    pub fn retained(&self) -> usize {
        if self.thin == 0 || self.burn_in >= self.chain_length {
            0
        } else {
            (self.chain_length - self.burn_in) / self.thin
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be >= 1".into()));
        }
        if self.burn_in >= self.chain_length {
            return Err(Error::InvalidArgument(format!(
                "burn-in {} must be shorter than the chain ({})",
                self.burn_in, self.chain_length
            )));
        }
        if self.retained() < 100 {
            return Err(Error::InvalidArgument(format!(
                "only {} draws retained per chain, need at least 100",
                self.retained()
            )));
        }
        if self.n_chains == 0 {
            return Err(Error::InvalidArgument("n_chains must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-period blocks of the split regression plus their cross products.
#[derive(Debug, Clone)]
pub struct VcnvardData {
    split: ColumnSplit,
    labels: Vec<String>,
    z1: Vec<DMatrix<f64>>,
    z2: Vec<DMatrix<f64>>,
    y: Vec<DVector<f64>>,
    pub(crate) g11_sum: DMatrix<f64>,
    pub(crate) g12: Vec<DMatrix<f64>>,
    pub(crate) g22: Vec<DMatrix<f64>>,
    pub(crate) h1: Vec<DVector<f64>>,
    pub(crate) h2: Vec<DVector<f64>>,
    yy: f64,
    full_stats: SuffStats,
}

impl VcnvardData {
    pub fn new(data: &RegressionData, split: &ColumnSplit) -> Result<Self> {
        let periods = data.periods();
        if periods < 2 {
            return Err(Error::InvalidArgument(format!(
                "the random-walk model needs T >= 2 periods, got {periods}"
            )));
        }
        let full_stats = data.suff_stats()?;
        let k1 = split.constant().len();
        let m = split.m();
        let mut out = Self {
            split: split.clone(),
            labels: data.labels().to_vec(),
            z1: Vec::with_capacity(periods),
            z2: Vec::with_capacity(periods),
            y: Vec::with_capacity(periods),
            g11_sum: DMatrix::zeros(k1, k1),
            g12: Vec::with_capacity(periods),
            g22: Vec::with_capacity(periods),
            h1: Vec::with_capacity(periods),
            h2: Vec::with_capacity(periods),
            yy: 0.0,
            full_stats,
        };
        for (z, y) in data.designs.iter().zip(&data.responses) {
            let DesignSplit { z1, z2, .. } = split.apply(z)?;
            let z1t = z1.transpose();
            let z2t = z2.transpose();
            out.g11_sum += &z1t * &z1;
            out.g12.push(&z1t * &z2);
            out.g22.push(&z2t * &z2);
            out.h1.push(&z1t * y);
            out.h2.push(&z2t * y);
            out.yy += y.dot(y);
            out.z1.push(z1);
            out.z2.push(z2);
            out.y.push(y.clone());
        }
        debug_assert_eq!(out.g22[0].nrows(), m);
        Ok(out)
    }

    pub fn periods(&self) -> usize {
        self.y.len()
    }

    pub fn m(&self) -> usize {
        self.split.m()
    }

    /// Width of the constant block.
    pub fn k1(&self) -> usize {
        self.split.constant().len()
    }

    pub fn n_obs(&self) -> usize {
        self.y.iter().map(|y| y.len()).sum()
    }

    pub fn split(&self) -> &ColumnSplit {
        &self.split
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn full_stats(&self) -> &SuffStats {
        &self.full_stats
    }

    pub fn z1(&self, t: usize) -> &DMatrix<f64> {
        &self.z1[t]
    }

    pub fn z2(&self, t: usize) -> &DMatrix<f64> {
        &self.z2[t]
    }

    pub fn y(&self, t: usize) -> &DVector<f64> {
        &self.y[t]
    }

    /// Residual sum of squares from the cross products.
    pub fn rss(&self, state: &GibbsState) -> f64 {
        let b1 = &state.beta1;
        let quad1 = b1.dot(&(&self.g11_sum * b1));
        let mut total = self.yy + quad1;
        for t in 0..self.periods() {
            let b2 = &state.beta2[t];
            total += -2.0 * self.h1[t].dot(b1) - 2.0 * self.h2[t].dot(b2)
                + 2.0 * b1.dot(&(&self.g12[t] * b2))
                + b2.dot(&(&self.g22[t] * b2));
        }
        total
    }

    fn check_state(&self, state: &GibbsState) -> Result<()> {
        if !(state.sigma2_eps > 0.0) || !(state.sigma2_u > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "variances must be positive (sigma2_eps = {}, sigma2_u = {})",
                state.sigma2_eps, state.sigma2_u
            )));
        }
        if state.beta1.len() != self.k1()
            || state.beta2.len() != self.periods()
            || state.beta2.iter().any(|b| b.len() != self.m())
        {
            return Err(Error::Dimension(
                "state dimensions do not match the column split".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GibbsState {
    pub sigma2_eps: f64,
    pub sigma2_u: f64,
    pub beta1: DVector<f64>,
    /// `beta2[t]` is the varying block at period `t + 1`.
    pub beta2: Vec<DVector<f64>>,
}

impl GibbsState {
    /// `sum_{t >= 2} |beta2_t - beta2_{t-1}|^2`.
    pub fn increment_ss(&self) -> f64 {
        self.beta2
            .windows(2)
            .map(|w| (&w[1] - &w[0]).norm_squared())
            .sum()
    }
}

/// Flat start from the closed-form constant-coefficient fit.
pub fn init_state(
    post: &NvardPosterior,
    split: &ColumnSplit,
    periods: usize,
) -> Result<GibbsState> {
    if post.k() != split.k() {
        return Err(Error::Dimension(format!(
            "posterior has K = {}, split has K = {}",
            post.k(),
            split.k()
        )));
    }
    let sigma2 = point_estimates(post)?.sigma2;
    let (beta1, beta2) = split.split_vector(&post.mu);
    let m = split.m() as f64;
    Ok(GibbsState {
        sigma2_eps: sigma2.max(conditionals::RATE_FLOOR),
        sigma2_u: 0.01 * (1.0 + beta2.norm_squared() / m),
        beta1,
        beta2: vec![beta2; periods],
    })
}

/// Retained draws of one chain.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ChainDraws {
    pub sigma2_eps: Vec<f64>,
    pub sigma2_u: Vec<f64>,
    pub beta1: Vec<DVector<f64>>,
    pub beta2: Vec<Vec<DVector<f64>>>,
}

impl ChainDraws {
    pub fn len(&self) -> usize {
        self.sigma2_eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma2_eps.is_empty()
    }

    fn push(&mut self, s: &GibbsState) {
        self.sigma2_eps.push(s.sigma2_eps);
        self.sigma2_u.push(s.sigma2_u);
        self.beta1.push(s.beta1.clone());
        self.beta2.push(s.beta2.clone());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VcnvardFit {
    pub labels: Vec<String>,
    pub constant_columns: Vec<usize>,
    pub varying_columns: Vec<usize>,
    pub config: GibbsConfig,
    pub init: GibbsState,
    #[serde(skip)]
    pub chains: Vec<ChainDraws>,
    pub beta1: DVector<f64>,
    pub beta2: Vec<DVector<f64>>,
    pub sigma2_eps: f64,
    pub sigma2_u: f64,
    pub diagnostics: Vec<ScalarSummary>,
    /// Inverse-gamma draws whose rate had to be floored.
    pub floored_draws: usize,
}

impl VcnvardFit {
    pub fn periods(&self) -> usize {
        self.beta2.len()
    }

    pub fn m(&self) -> usize {
        self.varying_columns.len()
    }

    pub fn retained(&self) -> usize {
        self.chains.iter().map(ChainDraws::len).sum()
    }

    pub fn diagnostic(&self, name: &str) -> Option<&ScalarSummary> {
        self.diagnostics.iter().find(|d| d.name == name)
    }

    /// Fitted values `Z1_t beta1_hat + Z2_t beta2_hat_t` for period `t` (one-based).
    pub fn fitted(&self, z: &DesignMatrix) -> Result<DVector<f64>> {
        let t = z.t;
        if t == 0 || t > self.periods() {
            return Err(Error::InvalidArgument(format!(
                "no state estimate for period {t}"
            )));
        }
        let s = self.split()?.apply(z)?;
        Ok(&s.z1 * &self.beta1 + &s.z2 * &self.beta2[t - 1])
    }

    pub fn split(&self) -> Result<ColumnSplit> {
        ColumnSplit::new(self.labels.len(), &self.varying_columns)
    }
}

/// Run the sampler from the closed-form warm start.
pub fn run_gibbs(data: &VcnvardData, config: &GibbsConfig) -> Result<VcnvardFit> {
    let post = fit_nvard(data.full_stats())?;
    let init = init_state(&post, data.split(), data.periods())?;
    run_gibbs_from(data, &init, config)
}

fn run_chain(
    data: &VcnvardData,
    init: &GibbsState,
    config: &GibbsConfig,
    chain: usize,
    limit: f64,
) -> Result<(ChainDraws, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain as u64);
    let mut state = init.clone();
    let mut draws = ChainDraws::default();
    let mut floored = 0;
    if config.mode == SamplerMode::TimeVarying {
        coefficient_pass(&mut state, data, &mut rng)?;
    }
    for it in 1..=config.chain_length {
        let flags = match config.mode {
            SamplerMode::TimeVarying => gibbs_sweep(&mut state, data, &mut rng)?,
            SamplerMode::Pooled => pooled_sweep(&mut state, data, &mut rng)?,
        };
        floored += flags.floored_sigma2_eps + flags.floored_sigma2_u;
        if !(state.sigma2_eps <= limit) {
            return Err(Error::Divergence {
                iteration: it,
                value: state.sigma2_eps,
                limit,
            });
        }
        if it > config.burn_in && (it - config.burn_in) % config.thin == 0 {
            draws.push(&state);
        }
    }
    Ok((draws, floored))
}

/// Run `config.n_chains` independent chains (one RNG stream each) from `init`.
pub fn run_gibbs_from(
    data: &VcnvardData,
    init: &GibbsState,
    config: &GibbsConfig,
) -> Result<VcnvardFit> {
    config.validate()?;
    data.check_state(init)?;
    let stats = data.full_stats();
    let reference = init
        .sigma2_eps
        .max(1e-12 * stats.syy / stats.n_obs as f64)
        .max(f64::MIN_POSITIVE);
    let limit = 1e12 * reference;

    let results: Vec<Result<(ChainDraws, usize)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.n_chains)
            .map(|c| scope.spawn(move || run_chain(data, init, config, c, limit)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sampler thread panicked"))
            .collect()
    });
    let mut chains = Vec::with_capacity(results.len());
    let mut floored = 0;
    for r in results {
        let (c, f) = r?;
        chains.push(c);
        floored += f;
    }
    if floored > 0 {
        log::warn!(
            "{floored} inverse-gamma draw(s) had a zero rate and were floored at {:e}",
            conditionals::RATE_FLOOR
        );
    }
    Ok(summarise_chains(data, init, config, chains, floored))
}

fn summarise_chains(
    data: &VcnvardData,
    init: &GibbsState,
    config: &GibbsConfig,
    chains: Vec<ChainDraws>,
    floored: usize,
) -> VcnvardFit {
    let split = data.split();
    let labels = data.labels();
    let periods = data.periods();
    let total = chains.iter().map(ChainDraws::len).sum::<usize>() as f64;

    let mut beta1 = DVector::zeros(data.k1());
    let mut beta2 = vec![DVector::zeros(data.m()); periods];
    let mut s_eps = 0.0;
    let mut s_u = 0.0;
    for c in &chains {
        for d in 0..c.len() {
            beta1 += &c.beta1[d];
            for t in 0..periods {
                beta2[t] += &c.beta2[d][t];
            }
            s_eps += c.sigma2_eps[d];
            s_u += c.sigma2_u[d];
        }
    }
    beta1 /= total;
    for b in &mut beta2 {
        *b /= total;
    }

    let mut diagnostics = Vec::new();
    let mut add = |name: String, extract: &dyn Fn(&ChainDraws) -> Vec<f64>| {
        let series: Vec<Vec<f64>> = chains.iter().map(extract).collect();
        let refs: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
        diagnostics.push(summarize(name, &refs));
    };
    add("sigma2_eps".into(), &|c| c.sigma2_eps.clone());
    if config.mode == SamplerMode::TimeVarying {
        add("sigma2_u".into(), &|c| c.sigma2_u.clone());
    }
    for (idx, &col) in split.constant().iter().enumerate() {
        add(format!("beta1[{}]", labels[col]), &|c| {
            c.beta1.iter().map(|b| b[idx]).collect()
        });
    }
    let state_periods = match config.mode {
        SamplerMode::TimeVarying => periods,
        SamplerMode::Pooled => 1,
    };
    for t in 0..state_periods {
        for (idx, &col) in split.varying().iter().enumerate() {
            add(format!("beta2[{}][{}]", t + 1, labels[col]), &|c| {
                c.beta2.iter().map(|b| b[t][idx]).collect()
            });
        }
    }

    VcnvardFit {
        labels: labels.to_vec(),
        constant_columns: split.constant().to_vec(),
        varying_columns: split.varying().to_vec(),
        config: config.clone(),
        init: init.clone(),
        chains,
        beta1,
        beta2,
        sigma2_eps: s_eps / total,
        sigma2_u: s_u / total,
        diagnostics,
        floored_draws: floored,
    }
}

/// One-step forecast `Z1_{T+1} beta1_hat + Z2_{T+1} beta2_hat_T`.
pub fn predict_vcnvard(
    fit: &VcnvardFit,
    z1_next: &DMatrix<f64>,
    z2_next: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    if z1_next.ncols() != fit.beta1.len() || z2_next.ncols() != fit.m() {
        return Err(Error::Dimension(format!(
            "prediction blocks have {} + {} columns, fit expects {} + {}",
            z1_next.ncols(),
            z2_next.ncols(),
            fit.beta1.len(),
            fit.m()
        )));
    }
    if z1_next.nrows() != z2_next.nrows() {
        return Err(Error::Dimension("prediction blocks differ in row count".into()));
    }
    let last = fit
        .beta2
        .last()
        .ok_or_else(|| Error::InvalidArgument("fit has no states".into()))?;
    Ok(z1_next * &fit.beta1 + z2_next * last)
}

/// Split a full design and forecast from it.
pub fn predict_vcnvard_design(fit: &VcnvardFit, z_next: &DesignMatrix) -> Result<DVector<f64>> {
    let s = fit.split()?.apply(z_next)?;
    predict_vcnvard(fit, &s.z1, &s.z2)
}

/// Unnormalised log joint posterior, evaluated from the raw residuals.
pub fn log_joint_vcnvard(data: &VcnvardData, state: &GibbsState) -> Result<f64> {
    data.check_state(state)?;
    let periods = data.periods();
    let m = data.m() as f64;
    let mut rss = 0.0;
    for t in 0..periods {
        let (z1, z2, y) = (&data.z1[t], &data.z2[t], &data.y[t]);
        for r in 0..y.len() {
            let mut fitted = 0.0;
            for c in 0..z1.ncols() {
                fitted += z1[(r, c)] * state.beta1[c];
            }
            for c in 0..z2.ncols() {
                fitted += z2[(r, c)] * state.beta2[t][c];
            }
            rss += (y[r] - fitted).powi(2);
        }
    }
    let mut incr = 0.0;
    for t in 1..periods {
        for c in 0..data.m() {
            incr += (state.beta2[t][c] - state.beta2[t - 1][c]).powi(2);
        }
    }
    let n = data.n_obs() as f64;
    let ln_e = state.sigma2_eps.ln();
    let ln_u = state.sigma2_u.ln();
    Ok(-ln_e - ln_u - 0.5 * m * (periods - 1) as f64 * ln_u - incr / (2.0 * state.sigma2_u)
        - 0.5 * n * ln_e
        - rss / (2.0 * state.sigma2_eps))
}
