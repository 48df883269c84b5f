//! Synthetic panels from both models, and brute-force oracles for the
//! estimation formulas.

mod oracle;

pub use oracle::{
    brute_force_beta_given_sigma2, brute_force_nvard_posterior, conditional_ratio_check,
    closed_form_gap, GridSpec, MarginalGap, Marginals, RatioCheck, RatioReport,
};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::design::{column_labels, ColumnSplit, BASE_COLUMNS};
use crate::dyad::{
    dyads, eligible, equal_weights, CovariateTensor, DyadMatrix, DyadicPanel, WeightFamily,
    WeightScheme,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovariateGen {
    /// Fresh `N(0, 1)` per pair and period.
    StdNormal,
    /// One `N(0, 1)` per pair, repeated across periods.
    TimeInvariant,
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    #[serde(flatten)]
    pub generator: CovariateGen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Constant { value: f64 },
    Normal { mean: f64, sd: f64 },
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Normal { mean: 0.0, sd: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSpec {
    #[default]
    Equal,
    /// Positive weights drawn uniformly and normalised per pair.
    Random,
}

/// Random-walk part of the time-varying model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkSpec {
    /// Labels of the design columns whose coefficients drift.
    pub varying: Vec<String>,
    pub sigma2_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub n: usize,
    /// Transitions `T`; the panel holds `Y_0..Y_T`.
    pub periods: usize,
    #[serde(default)]
    pub covariates: Vec<CovariateSpec>,
    /// Full coefficient vector of length `7 + M`. For the time-varying model
    /// the varying entries are the starting state.
    pub beta: Vec<f64>,
    pub sigma2_eps: f64,
    #[serde(default)]
    pub walk: Option<WalkSpec>,
    #[serde(default)]
    pub weights: WeightSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub seed: u64,
}

impl SimSpec {
    pub fn k(&self) -> usize {
        BASE_COLUMNS + self.covariates.len()
    }

    pub fn labels(&self) -> Vec<String> {
        let names: Vec<String> = self.covariates.iter().map(|c| c.name.clone()).collect();
        column_labels(&names)
    }

    fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::InvalidArgument(format!("n must be >= 3, got {}", self.n)));
        }
        if self.periods == 0 {
            return Err(Error::InvalidArgument("periods must be >= 1".into()));
        }
        if self.beta.len() != self.k() {
            return Err(Error::Dimension(format!(
                "beta has length {}, expected 7 + {} covariates",
                self.beta.len(),
                self.covariates.len()
            )));
        }
        if !(self.sigma2_eps >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma2_eps must be >= 0, got {}",
                self.sigma2_eps
            )));
        }
        if let Some(w) = &self.walk {
            if !(w.sigma2_u >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "sigma2_u must be >= 0, got {}",
                    w.sigma2_u
                )));
            }
        }
        Ok(())
    }
}

/// Sum of absolute lag coefficients; must stay below 1.
pub fn lag_mass(beta: &[f64]) -> f64 {
    beta[1..BASE_COLUMNS].iter().map(|b| b.abs()).sum()
}

fn check_stability(beta: &[f64]) -> Result<()> {
    let mass = lag_mass(beta);
    if mass < 1.0 {
        Ok(())
    } else {
        Err(Error::Explosive(mass))
    }
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub panel: DyadicPanel,
    /// Covariates for periods `1..=T + 1`, so the next design can be built.
    pub covariates: CovariateTensor,
    pub weights: WeightScheme,
    /// Full coefficient vector in force at each period `t = 1..=T`.
    pub path: Vec<DVector<f64>>,
    /// Observation noise of each period in `vecd` order.
    pub noise: Vec<DVector<f64>>,
}

impl Simulated {
    /// Varying-block states along the path.
    pub fn states(&self, split: &ColumnSplit) -> Vec<DVector<f64>> {
        self.path.iter().map(|b| split.split_vector(b).1).collect()
    }
}

fn draw_weights(spec: &SimSpec, rng: &mut ChaCha8Rng) -> Result<WeightScheme> {
    match spec.weights {
        WeightSpec::Equal => equal_weights(spec.n),
        WeightSpec::Random => {
            let n = spec.n;
            let raw: Vec<Vec<f64>> = (0..4 * n * n)
                .map(|_| (0..n - 2).map(|_| rng.random_range(0.1..1.0)).collect())
                .collect();
            WeightScheme::from_fn(n, |fam, i, j, k| {
                let row = &raw[(fam as usize * n + i) * n + j];
                let slot = k - usize::from(k > i) - usize::from(k > j);
                row[slot] / row.iter().sum::<f64>()
            })
        }
    }
}

fn draw_covariates(spec: &SimSpec, rng: &mut ChaCha8Rng) -> Result<CovariateTensor> {
    let n = spec.n;
    let m = spec.covariates.len();
    let names = spec.covariates.iter().map(|c| c.name.clone()).collect();
    let fixed: Vec<Vec<f64>> = spec
        .covariates
        .iter()
        .map(|c| match c.generator {
            CovariateGen::TimeInvariant => {
                dyads(n).map(|_| rng.sample(StandardNormal)).collect()
            }
            _ => Vec::new(),
        })
        .collect();
    let mut values = Vec::with_capacity(spec.periods + 1);
    for _ in 0..=spec.periods {
        let mut block = Vec::with_capacity(m * n * (n - 1));
        for pos in 0..n * (n - 1) {
            for (c, cov) in spec.covariates.iter().enumerate() {
                block.push(match cov.generator {
                    CovariateGen::StdNormal => rng.sample(StandardNormal),
                    CovariateGen::TimeInvariant => fixed[c][pos],
                    CovariateGen::Constant { value } => value,
                });
            }
        }
        values.push(block);
    }
    CovariateTensor::new(n, names, values)
}

fn draw_initial(spec: &SimSpec, rng: &mut ChaCha8Rng) -> Result<DyadMatrix> {
    match spec.initial {
        InitialSpec::Constant { value } => DyadMatrix::from_fn(spec.n, |_, _| value),
        InitialSpec::Normal { mean, sd } => DyadMatrix::from_fn(spec.n, |_, _| {
            mean + sd * rng.sample::<f64, _>(StandardNormal)
        }),
    }
}

/// Mean of `y_ijt` given the previous matrix, written out term by term.
fn conditional_mean(
    prev: &Snapshot,
    w: &WeightScheme,
    x: &[f64],
    beta: &[f64],
    i: usize,
    j: usize,
) -> f64 {
    let n = prev.n;
    let mut agg = [0.0; 4];
    for k in eligible(n, i, j) {
        let wt = |fam| w.weight(fam, i, j, k).expect("eligible neighbour");
        agg[0] += wt(WeightFamily::OriginOrigin) * prev.at(i, k);
        agg[1] += wt(WeightFamily::OriginDest) * prev.at(k, i);
        agg[2] += wt(WeightFamily::DestOrigin) * prev.at(j, k);
        agg[3] += wt(WeightFamily::DestDest) * prev.at(k, j);
    }
    let mut mean = beta[0] + beta[1] * prev.at(i, j) + beta[2] * prev.at(j, i);
    for (a, b) in agg.iter().zip(&beta[3..BASE_COLUMNS]) {
        mean += a * b;
    }
    for (xv, b) in x.iter().zip(&beta[BASE_COLUMNS..]) {
        mean += xv * b;
    }
    mean
}

struct Snapshot {
    n: usize,
    values: Vec<f64>,
}

impl Snapshot {
    fn of(m: &DyadMatrix) -> Self {
        let n = m.n();
        let mut values = vec![0.0; n * n];
        for (i, j) in dyads(n) {
            values[i * n + j] = m.get(i, j).expect("off-diagonal");
        }
        Self { n, values }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

fn generate(spec: &SimSpec, split: Option<(&ColumnSplit, f64)>) -> Result<Simulated> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let weights = draw_weights(spec, &mut rng)?;
    let covariates = draw_covariates(spec, &mut rng)?;
    let y0 = draw_initial(spec, &mut rng)?;

    let n = spec.n;
    let noise_sd = spec.sigma2_eps.sqrt();
    let mut beta = DVector::from_column_slice(&spec.beta);
    let mut flows = vec![y0];
    let mut path = Vec::with_capacity(spec.periods);
    let mut noise = Vec::with_capacity(spec.periods);
    for t in 1..=spec.periods {
        // a frozen walk draws nothing, so it replays the constant model exactly
        if let Some((split, sigma2_u)) = split {
            if t > 1 && sigma2_u > 0.0 {
                let sd = sigma2_u.sqrt();
                for &c in split.varying() {
                    beta[c] += sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        check_stability(beta.as_slice())?;
        let prev = Snapshot::of(flows.last().expect("initial matrix"));
        let mut eps = Vec::with_capacity(n * (n - 1));
        let mut next = DyadMatrix::from_fn(n, |_, _| 0.0)?;
        for (i, j) in dyads(n) {
            let e = noise_sd * rng.sample::<f64, _>(StandardNormal);
            let x = covariates.get(i, j, t)?;
            next.set(i, j, conditional_mean(&prev, &weights, x, beta.as_slice(), i, j) + e)?;
            eps.push(e);
        }
        flows.push(next);
        path.push(beta.clone());
        noise.push(DVector::from_vec(eps));
    }
    Ok(Simulated {
        panel: DyadicPanel::unlabeled(flows)?,
        covariates,
        weights,
        path,
        noise,
    })
}

/// Run the constant-coefficient recursion forward.
pub fn simulate_nvard(spec: &SimSpec) -> Result<Simulated> {
    generate(spec, None)
}

/// Run the state-space model forward: varying coefficients start at their
/// `beta` entries and take a Gaussian step before every period after the first.
pub fn simulate_vcnvard(spec: &SimSpec) -> Result<(Simulated, ColumnSplit)> {
    let walk = spec
        .walk
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("time-varying simulation needs a walk spec".into()))?;
    let split = ColumnSplit::from_labels(&spec.labels(), &walk.varying)?;
    let sim = generate(spec, Some((&split, walk.sigma2_u)))?;
    Ok((sim, split))
}
