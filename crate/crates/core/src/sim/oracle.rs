//! Brute-force checks of the posterior formulas.
//!
//! The quadrature oracle never touches the normal equations: the centre and
//! width of its grid and the profile over the remaining coefficients come from
//! an SVD of the stacked raw design, and the integrand is the raw-residual log
//! joint density.

use nalgebra::{DMatrix, DVector, SVD};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use statrs::distribution::{Continuous, InverseGamma, StudentsT};

use crate::design::RegressionData;
use crate::error::{Error, Result};
use crate::nvard::{log_joint_posterior_raw, NvardPosterior};
use crate::vcnvard::{
    beta1_conditional, beta2_conditional, log_joint_vcnvard, sigma2_eps_conditional,
    sigma2_u_conditional, GibbsState, VcnvardData,
};

/// Quadrature grid for one coefficient and the error variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Odd, so that every other node forms the coarse grid.
    pub beta_points: usize,
    pub sigma2_points: usize,
    /// Half-width of the coefficient grid in posterior standard deviations.
    pub beta_halfwidth: f64,
    /// Error-variance range as multiples of `RSS_min / N`, log-spaced.
    pub sigma2_range: (f64, f64),
    /// Largest tolerated relative change of the normalising constant between
    /// the full and the half-resolution grid.
    pub self_check: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            beta_points: 801,
            sigma2_points: 1201,
            beta_halfwidth: 6.0,
            sigma2_range: (1e-2, 1e2),
            self_check: 0.01,
        }
    }
}

/// Normalised marginal densities tabulated on the grid nodes.
#[derive(Debug, Clone, Serialize)]
pub struct Marginals {
    pub coordinate: usize,
    pub beta_grid: Vec<f64>,
    pub beta_density: Vec<f64>,
    pub sigma2_grid: Vec<f64>,
    pub sigma2_density: Vec<f64>,
    /// Relative change of the normalising constant at half resolution.
    pub resolution_gap: f64,
}

fn stack(data: &RegressionData) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let k = data
        .designs
        .first()
        .map(|d| d.k())
        .ok_or_else(|| Error::InvalidArgument("no periods".into()))?;
    let n: usize = data.responses.iter().map(|y| y.len()).sum();
    let mut z = DMatrix::zeros(n, k);
    let mut y = DVector::zeros(n);
    let mut row = 0;
    for (d, r) in data.designs.iter().zip(&data.responses) {
        z.view_mut((row, 0), (d.nrows(), k)).copy_from(&d.rows);
        y.rows_mut(row, r.len()).copy_from(r);
        row += r.len();
    }
    Ok((z, y))
}

fn pinv(z: &DMatrix<f64>) -> DMatrix<f64> {
    if z.ncols() == 0 {
        return DMatrix::zeros(0, z.nrows());
    }
    SVD::new(z.clone(), true, true)
        .pseudo_inverse(1e-12)
        .expect("both singular bases requested")
}

/// Profile of the remaining coefficients: for coefficient value `b` the
/// minimising rest is `rest_y - b * rest_z`.
struct Profile {
    full_k: usize,
    coordinate: usize,
    rest_y: DVector<f64>,
    rest_z: DVector<f64>,
    centre: f64,
    sd: f64,
    rss_min: f64,
    /// Squared norm of the residualised coefficient column.
    szz: f64,
}

impl Profile {
    fn new(data: &RegressionData, coordinate: usize) -> Result<Self> {
        let (z, y) = stack(data)?;
        let (n, k) = z.shape();
        if coordinate >= k {
            return Err(Error::InvalidArgument(format!(
                "coordinate {coordinate} outside K = {k}"
            )));
        }
        if n <= k + 2 {
            return Err(Error::InvalidArgument(format!(
                "quadrature needs N > K + 2, got N = {n}, K = {k}"
            )));
        }
        let others: Vec<usize> = (0..k).filter(|&c| c != coordinate).collect();
        let z_rest = z.select_columns(&others);
        let p = pinv(&z_rest);
        let rest_y = &p * &y;
        let zk = z.column(coordinate).into_owned();
        let rest_z = &p * &zk;
        // residualised target and regressor
        let ry = &y - &z_rest * &rest_y;
        let rz = &zk - &z_rest * &rest_z;
        let szz = rz.norm_squared();
        if !(szz > 1e-12 * zk.norm_squared()) {
            return Err(Error::RankDeficient {
                rcond: 0.0,
                columns: vec![data.labels()[coordinate].clone()],
            });
        }
        let centre = rz.dot(&ry) / szz;
        let rss_min = (&ry - &rz * centre).norm_squared();
        let dof = (n - k) as f64;
        let sd = (rss_min / dof / szz * dof / (dof - 2.0)).sqrt();
        Ok(Self {
            full_k: k,
            coordinate,
            rest_y,
            rest_z,
            centre,
            sd,
            rss_min,
            szz,
        })
    }

    fn beta_at(&self, b: f64) -> DVector<f64> {
        let rest = &self.rest_y - &self.rest_z * b;
        let mut full = DVector::zeros(self.full_k);
        let mut r = 0;
        for c in 0..self.full_k {
            if c == self.coordinate {
                full[c] = b;
            } else {
                full[c] = rest[r];
                r += 1;
            }
        }
        full
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn trapezoid(x: &[f64], f: &[f64]) -> f64 {
    x.windows(2)
        .zip(f.windows(2))
        .map(|(xs, fs)| 0.5 * (xs[1] - xs[0]) * (fs[0] + fs[1]))
        .sum()
}

fn every_other<T: Copy>(v: &[T]) -> Vec<T> {
    v.iter().step_by(2).copied().collect()
}

fn check_grid(grid: &GridSpec) -> Result<()> {
    if grid.beta_points < 5 || grid.sigma2_points < 5 {
        return Err(Error::InvalidArgument("grid needs at least 5 points per axis".into()));
    }
    if grid.beta_points % 2 == 0 || grid.sigma2_points % 2 == 0 {
        return Err(Error::InvalidArgument("grid point counts must be odd".into()));
    }
    let (lo, hi) = grid.sigma2_range;
    if !(lo > 0.0 && hi > lo) || !(grid.beta_halfwidth > 0.0) {
        return Err(Error::InvalidArgument("invalid grid ranges".into()));
    }
    Ok(())
}

/// Tabulate the posterior marginals of one coefficient and of the error
/// variance by integrating the unnormalised log joint density.
///
/// The remaining `K - 1` coefficients enter the log joint only through a
/// Gaussian factor, which is integrated exactly: at fixed `(b, sigma2)` it
/// contributes `(K - 1)/2 log sigma2` around the profile minimiser. The
/// 2-D integral over `(b, log sigma2)` is done by the trapezoid rule.
pub fn brute_force_nvard_posterior(
    data: &RegressionData,
    coordinate: usize,
    grid: &GridSpec,
) -> Result<Marginals> {
    check_grid(grid)?;
    let profile = Profile::new(data, coordinate)?;
    let n: usize = data.responses.iter().map(|y| y.len()).sum();
    let half = grid.beta_halfwidth * profile.sd;
    let beta_grid = linspace(profile.centre - half, profile.centre + half, grid.beta_points);
    let base = (profile.rss_min / n as f64).max(f64::MIN_POSITIVE);
    let log_grid = linspace(
        (base * grid.sigma2_range.0).ln(),
        (base * grid.sigma2_range.1).ln(),
        grid.sigma2_points,
    );
    let sigma2_grid: Vec<f64> = log_grid.iter().map(|u| u.exp()).collect();
    let extra = 0.5 * (profile.full_k - 1) as f64;

    // log integrand per (sigma2 row, beta column), including the Jacobian of u = log sigma2
    let mut logf = DMatrix::zeros(grid.sigma2_points, grid.beta_points);
    let betas: Vec<DVector<f64>> = beta_grid.iter().map(|&b| profile.beta_at(b)).collect();
    for (r, &s2) in sigma2_grid.iter().enumerate() {
        for (c, beta) in betas.iter().enumerate() {
            logf[(r, c)] = log_joint_posterior_raw(data, beta, s2)? + extra * s2.ln() + s2.ln();
        }
    }
    let peak = logf.max();
    let f = logf.map(|v| (v - peak).exp());

    let integrate = |rows: &[usize], cols: &[usize]| -> f64 {
        let bx: Vec<f64> = cols.iter().map(|&c| beta_grid[c]).collect();
        let ux: Vec<f64> = rows.iter().map(|&r| log_grid[r]).collect();
        let inner: Vec<f64> = rows
            .iter()
            .map(|&r| {
                let fr: Vec<f64> = cols.iter().map(|&c| f[(r, c)]).collect();
                trapezoid(&bx, &fr)
            })
            .collect();
        trapezoid(&ux, &inner)
    };
    let all_rows: Vec<usize> = (0..grid.sigma2_points).collect();
    let all_cols: Vec<usize> = (0..grid.beta_points).collect();
    let norm = integrate(&all_rows, &all_cols);
    let coarse = integrate(&every_other(&all_rows), &every_other(&all_cols));
    let gap = (coarse / norm - 1.0).abs();
    if !(gap <= grid.self_check) {
        return Err(Error::GridTooCoarse(gap));
    }

    let beta_density = (0..grid.beta_points)
        .map(|c| {
            let col: Vec<f64> = (0..grid.sigma2_points).map(|r| f[(r, c)]).collect();
            trapezoid(&log_grid, &col) / norm
        })
        .collect();
    let sigma2_density = (0..grid.sigma2_points)
        .map(|r| {
            let row: Vec<f64> = (0..grid.beta_points).map(|c| f[(r, c)]).collect();
            // undo the Jacobian to get a density in sigma2
            trapezoid(&beta_grid, &row) / norm / sigma2_grid[r]
        })
        .collect();
    Ok(Marginals {
        coordinate,
        beta_grid,
        beta_density,
        sigma2_grid,
        sigma2_density,
        resolution_gap: gap,
    })
}

/// Marginal of one coefficient with the error variance held fixed, on a
/// grid of `points` nodes spanning `halfwidth` conditional standard deviations.
pub fn brute_force_beta_given_sigma2(
    data: &RegressionData,
    coordinate: usize,
    sigma2: f64,
    points: usize,
    halfwidth: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(sigma2 > 0.0) || points < 3 {
        return Err(Error::InvalidArgument("need sigma2 > 0 and at least 3 points".into()));
    }
    let profile = Profile::new(data, coordinate)?;
    let half = halfwidth * (sigma2 / profile.szz).sqrt();
    let grid = linspace(profile.centre - half, profile.centre + half, points);
    let logf = grid
        .iter()
        .map(|&b| log_joint_posterior_raw(data, &profile.beta_at(b), sigma2))
        .collect::<Result<Vec<f64>>>()?;
    let peak = logf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let f: Vec<f64> = logf.iter().map(|v| (v - peak).exp()).collect();
    let norm = trapezoid(&grid, &f);
    Ok((grid, f.into_iter().map(|v| v / norm).collect()))
}

/// Settings for the conditional-ratio identity check.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioCheck {
    pub n_probes: usize,
    /// Size of the random perturbation applied to the probed block.
    pub scale: f64,
    pub tolerance: f64,
}

impl Default for RatioCheck {
    fn default() -> Self {
        Self {
            n_probes: 100,
            scale: 0.5,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyDeviation {
    pub family: String,
    pub comparisons: usize,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioReport {
    pub families: Vec<FamilyDeviation>,
}

impl RatioReport {
    pub fn max_deviation(&self) -> f64 {
        self.families
            .iter()
            .map(|f| f.max_deviation)
            .fold(0.0, f64::max)
    }

    pub fn family(&self, name: &str) -> Option<&FamilyDeviation> {
        self.families.iter().find(|f| f.family == name)
    }
}

fn random_state<R: Rng + ?Sized>(data: &VcnvardData, rng: &mut R) -> GibbsState {
    let mut normal = || rng.sample::<f64, _>(StandardNormal);
    GibbsState {
        sigma2_eps: (0.5 * normal()).exp(),
        sigma2_u: (0.5 * normal()).exp(),
        beta1: DVector::from_fn(data.k1(), |_, _| normal()),
        beta2: (0..data.periods())
            .map(|_| DVector::from_fn(data.m(), |_, _| normal()))
            .collect(),
    }
}

/// Sup distance between tabulated marginals and the closed-form Student-t and
/// inverse-gamma densities, each relative to the peak of the closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginalGap {
    pub beta: f64,
    pub sigma2: f64,
}

pub fn closed_form_gap(post: &NvardPosterior, marginals: &Marginals) -> Result<MarginalGap> {
    let k = marginals.coordinate;
    if k >= post.k() {
        return Err(Error::InvalidArgument(format!("coordinate {k} out of range")));
    }
    let t = StudentsT::new(post.mu[k], post.sigma[(k, k)].sqrt(), post.v)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let ig = InverseGamma::new(post.a, post.b)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let sup = |grid: &[f64], dens: &[f64], f: &dyn Fn(f64) -> f64| {
        let exact: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
        let peak = exact.iter().copied().fold(0.0, f64::max);
        exact
            .iter()
            .zip(dens)
            .map(|(e, d)| (e - d).abs())
            .fold(0.0, f64::max)
            / peak
    };
    Ok(MarginalGap {
        beta: sup(&marginals.beta_grid, &marginals.beta_density, &|x| t.pdf(x)),
        sigma2: sup(&marginals.sigma2_grid, &marginals.sigma2_density, &|x| ig.pdf(x)),
    })
}

/// Compare, block by block, the change of the log joint density with the
/// change of the claimed full-conditional log density when only that block
/// moves. Every probe draws a fresh state and a fresh perturbation.
pub fn conditional_ratio_check<R: Rng + ?Sized>(
    data: &VcnvardData,
    check: &RatioCheck,
    rng: &mut R,
) -> Result<RatioReport> {
    let periods = data.periods();
    let mut names = vec!["sigma2_eps".to_string(), "sigma2_u".to_string()];
    if data.k1() > 0 {
        names.push("beta1".into());
    }
    names.push("beta2".into());
    let mut families: Vec<FamilyDeviation> = names
        .into_iter()
        .map(|family| FamilyDeviation {
            family,
            comparisons: 0,
            max_deviation: 0.0,
        })
        .collect();
    let mut record = |name: &str, dev: f64| {
        let f = families
            .iter_mut()
            .find(|f| f.family == name)
            .expect("family registered");
        f.comparisons += 1;
        if !(dev <= f.max_deviation) {
            f.max_deviation = dev;
        }
    };

    for _ in 0..check.n_probes {
        let x = random_state(data, rng);
        let base = log_joint_vcnvard(data, &x)?;

        let mut y = x.clone();
        y.sigma2_eps *= (check.scale * rng.sample::<f64, _>(StandardNormal)).exp();
        let ig = sigma2_eps_conditional(&x, data);
        let dev = (base - log_joint_vcnvard(data, &y)?)
            - (ig.log_density(x.sigma2_eps) - ig.log_density(y.sigma2_eps));
        record("sigma2_eps", dev.abs());

        let mut y = x.clone();
        y.sigma2_u *= (check.scale * rng.sample::<f64, _>(StandardNormal)).exp();
        let ig = sigma2_u_conditional(&x, data);
        let dev = (base - log_joint_vcnvard(data, &y)?)
            - (ig.log_density(x.sigma2_u) - ig.log_density(y.sigma2_u));
        record("sigma2_u", dev.abs());

        if data.k1() > 0 {
            let mut y = x.clone();
            y.beta1 += DVector::from_fn(data.k1(), |_, _| {
                check.scale * rng.sample::<f64, _>(StandardNormal)
            });
            let g = beta1_conditional(&x, data)?;
            let dev = (base - log_joint_vcnvard(data, &y)?)
                - (g.log_density(&x.beta1) - g.log_density(&y.beta1));
            record("beta1", dev.abs());
        }

        for t in 0..periods {
            let mut y = x.clone();
            y.beta2[t] += DVector::from_fn(data.m(), |_, _| {
                check.scale * rng.sample::<f64, _>(StandardNormal)
            });
            let g = beta2_conditional(&x, data, t)?;
            let dev = (base - log_joint_vcnvard(data, &y)?)
                - (g.log_density(&x.beta2[t]) - g.log_density(&y.beta2[t]));
            record("beta2", dev.abs());
        }
    }

    if let Some(bad) = families.iter().find(|f| !(f.max_deviation <= check.tolerance)) {
        return Err(Error::OracleFailure {
            family: bad.family.clone(),
            deviation: bad.max_deviation,
            tolerance: check.tolerance,
        });
    }
    Ok(RatioReport { families })
}
