//! Closed-form posterior for the constant-coefficient model
//! `Y_t = Z_t beta + eps_t`, `eps_t ~ N(0, sigma2 I)`, under the flat prior
//! on `beta` and `1/sigma2` on the variance.
//!
//! With `S_ZZ = sum Z_t'Z_t`, `S_ZY = sum Z_t'Y_t`, `S_YY = sum Y_t'Y_t` and
//! `N` stacked observations:
//!
//! * `beta | Y ~ Mt(v, mu, Sigma)` with `v = N - K`, `mu = S_ZZ^-1 S_ZY`,
//!   `q = S_YY - S_ZY' mu` and scale matrix `Sigma = (q / v) S_ZZ^-1`;
//! * `sigma2 | Y ~ IG(v / 2, q / 2)`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::design::{DesignMatrix, RegressionData};
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;

/// Sums over `t = 1..=T` of the cross products of the stacked regression.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    pub szz: DMatrix<f64>,
    pub szy: DVector<f64>,
    pub syy: f64,
    /// Total observation count `(n^2 - n) T`.
    pub n_obs: usize,
    pub labels: Vec<String>,
}

impl SuffStats {
    pub fn zeros(labels: Vec<String>) -> Self {
        let k = labels.len();
        Self {
            szz: DMatrix::zeros(k, k),
            szy: DVector::zeros(k),
            syy: 0.0,
            n_obs: 0,
            labels,
        }
    }

    pub fn k(&self) -> usize {
        self.szz.nrows()
    }

    /// Add one `(Z_t, Y_t)` block.
    pub fn push(&mut self, z: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
        if z.ncols() != self.k() {
            return Err(Error::Dimension(format!(
                "design has {} columns, expected {}",
                z.ncols(),
                self.k()
            )));
        }
        if z.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "design has {} rows but response has length {}",
                z.nrows(),
                y.len()
            )));
        }
        let zt = z.transpose();
        self.szz += &zt * z;
        self.szy += &zt * y;
        self.syy += y.dot(y);
        self.n_obs += y.len();
        Ok(())
    }

    /// Combine partial sums accumulated over disjoint periods.
    pub fn merge(&self, other: &SuffStats) -> Result<SuffStats> {
        if self.k() != other.k() {
            return Err(Error::Dimension(format!(
                "cannot merge statistics with K = {} and K = {}",
                self.k(),
                other.k()
            )));
        }
        Ok(SuffStats {
            szz: &self.szz + &other.szz,
            szy: &self.szy + &other.szy,
            syy: self.syy + other.syy,
            n_obs: self.n_obs + other.n_obs,
            labels: self.labels.clone(),
        })
    }

    /// Residual sum of squares `S_YY - 2 beta'S_ZY + beta'S_ZZ beta`.
    pub fn rss(&self, beta: &DVector<f64>) -> f64 {
        self.syy - 2.0 * beta.dot(&self.szy) + beta.dot(&(&self.szz * beta))
    }
}

pub fn accumulate(designs: &[DesignMatrix], responses: &[DVector<f64>]) -> Result<SuffStats> {
    if designs.is_empty() {
        return Err(Error::InvalidArgument("need at least one period".into()));
    }
    if designs.len() != responses.len() {
        return Err(Error::Dimension(format!(
            "{} designs but {} responses",
            designs.len(),
            responses.len()
        )));
    }
    let rows = designs[0].nrows();
    let mut stats = SuffStats::zeros(designs[0].labels.clone());
    for (z, y) in designs.iter().zip(responses) {
        if z.nrows() != rows {
            return Err(Error::Dimension(format!(
                "period {} has {} rows, expected {rows}",
                z.t,
                z.nrows()
            )));
        }
        stats.push(&z.rows, y)?;
    }
    Ok(stats)
}

impl RegressionData {
    pub fn suff_stats(&self) -> Result<SuffStats> {
        accumulate(&self.designs, &self.responses)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NvardPosterior {
    /// Degrees of freedom `N - K`.
    pub v: f64,
    pub mu: DVector<f64>,
    /// Scale matrix of the multivariate t.
    pub sigma: DMatrix<f64>,
    /// Inverse-gamma shape.
    pub a: f64,
    /// Inverse-gamma rate.
    pub b: f64,
    /// Residual sum of squares at `mu`.
    pub q: f64,
    pub n_obs: usize,
    pub labels: Vec<String>,
}

impl NvardPosterior {
    pub fn k(&self) -> usize {
        self.mu.len()
    }
}

pub fn fit_nvard(stats: &SuffStats) -> Result<NvardPosterior> {
    let k = stats.k();
    if stats.n_obs <= k {
        return Err(Error::InvalidArgument(format!(
            "need more observations than coefficients: N = {}, K = {k}",
            stats.n_obs
        )));
    }
    let factor = SpdFactor::new(&stats.szz, &stats.labels)?;
    let mu = factor.solve(&stats.szy);
    let mut q = stats.syy - stats.szy.dot(&mu);
    if q < 0.0 {
        if q > -1e-8 * stats.syy.max(f64::MIN_POSITIVE) {
            q = 0.0;
        } else {
            return Err(Error::Internal(format!(
                "negative residual sum of squares {q:e} (S_YY = {:e})",
                stats.syy
            )));
        }
    }
    let v = (stats.n_obs - k) as f64;
    let sigma = factor.inverse() * (q / v);
    Ok(NvardPosterior {
        v,
        mu,
        sigma,
        a: v / 2.0,
        b: q / 2.0,
        q,
        n_obs: stats.n_obs,
        labels: stats.labels.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointEstimates {
    pub beta: DVector<f64>,
    pub sigma2: f64,
}

/// Posterior means: `beta_hat = mu`, `sigma2_hat = b / (a - 1)`.
pub fn point_estimates(post: &NvardPosterior) -> Result<PointEstimates> {
    if !(post.a > 1.0) {
        return Err(Error::UndefinedMean(post.a));
    }
    Ok(PointEstimates {
        beta: post.mu.clone(),
        sigma2: post.b / (post.a - 1.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Interval {
    pub label: String,
    pub lower: f64,
    pub upper: f64,
}

/// Equal-tailed marginal intervals from the univariate-t marginals.
pub fn credible_intervals(post: &NvardPosterior, level: f64) -> Result<Vec<Interval>> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidArgument(format!(
            "credible level must lie in [0, 1), got {level}"
        )));
    }
    if post.v < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "degrees of freedom {} < 1",
            post.v
        )));
    }
    let quantile = if level == 0.0 {
        0.0
    } else {
        StudentsT::new(0.0, 1.0, post.v)
            .map_err(|e| Error::Internal(e.to_string()))?
            .inverse_cdf(0.5 * (1.0 + level))
    };
    Ok((0..post.k())
        .map(|c| {
            let half = quantile * post.sigma[(c, c)].max(0.0).sqrt();
            Interval {
                label: post.labels.get(c).cloned().unwrap_or_default(),
                lower: post.mu[c] - half,
                upper: post.mu[c] + half,
            }
        })
        .collect())
}

/// One-step forecast `Z_{T+1} mu`.
pub fn predict_nvard(post: &NvardPosterior, z_next: &DesignMatrix) -> Result<DVector<f64>> {
    if z_next.k() != post.k() {
        return Err(Error::Dimension(format!(
            "design has {} columns, posterior has {}",
            z_next.k(),
            post.k()
        )));
    }
    Ok(&z_next.rows * &post.mu)
}

/// Unnormalised log joint posterior of `(beta, sigma2)`:
/// `-(N/2 + 1) log sigma2 - RSS(beta) / (2 sigma2)`.
pub fn log_joint_posterior(stats: &SuffStats, beta: &DVector<f64>, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma2 must be > 0, got {sigma2}")));
    }
    if beta.len() != stats.k() {
        return Err(Error::Dimension(format!(
            "beta has length {}, expected {}",
            beta.len(),
            stats.k()
        )));
    }
    let n = stats.n_obs as f64;
    Ok(-(0.5 * n + 1.0) * sigma2.ln() - stats.rss(beta) / (2.0 * sigma2))
}

/// Same density evaluated directly from the raw residuals.
pub fn log_joint_posterior_raw(
    data: &RegressionData,
    beta: &DVector<f64>,
    sigma2: f64,
) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma2 must be > 0, got {sigma2}")));
    }
    let mut rss = 0.0;
    let mut n = 0usize;
    for (z, y) in data.designs.iter().zip(&data.responses) {
        if z.k() != beta.len() {
            return Err(Error::Dimension("beta length does not match design".into()));
        }
        for r in 0..z.nrows() {
            let fitted: f64 = (0..z.k()).map(|c| z.rows[(r, c)] * beta[c]).sum();
            rss += (y[r] - fitted).powi(2);
        }
        n += y.len();
    }
    Ok(-(0.5 * n as f64 + 1.0) * sigma2.ln() - rss / (2.0 * sigma2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_data(rng: &mut ChaCha8Rng, rows: usize, k: usize, periods: usize) -> RegressionData {
        let labels: Vec<String> = (0..k).map(|c| format!("c{c}")).collect();
        let mut designs = Vec::new();
        let mut responses = Vec::new();
        for t in 1..=periods {
            let mut z = DMatrix::from_fn(rows, k, |_, _| rng.sample::<f64, _>(StandardNormal));
            z.column_mut(0).fill(1.0);
            let y = DVector::from_fn(rows, |_, _| rng.sample::<f64, _>(StandardNormal));
            designs.push(DesignMatrix {
                t,
                rows: z,
                labels: labels.clone(),
            });
            responses.push(y);
        }
        RegressionData { designs, responses }
    }

    fn stacked(data: &RegressionData) -> (DMatrix<f64>, DVector<f64>) {
        let rows: usize = data.responses.iter().map(|y| y.len()).sum();
        let k = data.designs[0].k();
        let mut z = DMatrix::zeros(rows, k);
        let mut y = DVector::zeros(rows);
        let mut r0 = 0;
        for (d, yt) in data.designs.iter().zip(&data.responses) {
            z.rows_mut(r0, d.nrows()).copy_from(&d.rows);
            y.rows_mut(r0, yt.len()).copy_from(yt);
            r0 += yt.len();
        }
        (z, y)
    }

    #[test]
    fn single_period_stats_are_plain_cross_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_data(&mut rng, 12, 4, 1);
        let s = d.suff_stats().unwrap();
        let z = &d.designs[0].rows;
        let y = &d.responses[0];
        assert_eq!(s.szz, z.transpose() * z);
        assert_eq!(s.szy, z.transpose() * y);
        assert_eq!(s.syy, y.dot(y));
        assert_eq!(s.n_obs, 12);
    }

    #[test]
    fn duplicated_data_doubles_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = random_data(&mut rng, 12, 4, 3);
        let s = d.suff_stats().unwrap();
        let mut dd = d.clone();
        dd.designs.extend(d.designs.iter().cloned());
        dd.responses.extend(d.responses.iter().cloned());
        let s2 = dd.suff_stats().unwrap();
        assert!((&s2.szz - &s.szz * 2.0).amax() < 1e-12);
        assert!((&s2.szy - &s.szy * 2.0).amax() < 1e-12);
        assert!((s2.syy - 2.0 * s.syy).abs() < 1e-12);
        assert_eq!(s2.n_obs, 2 * s.n_obs);
        let merged = s.merge(&s).unwrap();
        assert!((&merged.szz - &s2.szz).amax() < 1e-12);
        assert_eq!(merged.n_obs, s2.n_obs);
    }

    #[test]
    fn accumulate_matches_stacked_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_data(&mut rng, 20, 5, 4);
        let s = d.suff_stats().unwrap();
        let (z, y) = stacked(&d);
        assert!((&s.szz - z.transpose() * &z).amax() < 1e-10);
        assert!((&s.szy - z.transpose() * &y).amax() < 1e-10);
    }

    #[test]
    fn accumulate_rejects_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_data(&mut rng, 6, 3, 1);
        let b = random_data(&mut rng, 12, 3, 1);
        let designs = vec![a.designs[0].clone(), b.designs[0].clone()];
        let responses = vec![a.responses[0].clone(), b.responses[0].clone()];
        assert!(accumulate(&designs, &responses).is_err());
        assert!(accumulate(&designs[..1], &responses).is_err());
        assert!(accumulate(&[], &[]).is_err());
    }

    #[test]
    fn noise_free_data_recovers_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut d = random_data(&mut rng, 30, 5, 3);
        let beta = DVector::from_vec(vec![0.7, -1.2, 0.3, 2.0, -0.05]);
        for (z, y) in d.designs.iter().zip(d.responses.iter_mut()) {
            *y = &z.rows * &beta;
        }
        let post = fit_nvard(&d.suff_stats().unwrap()).unwrap();
        assert!((&post.mu - &beta).amax() < 1e-8 * beta.amax());
        assert!(post.q <= 1e-8 * d.suff_stats().unwrap().syy);
        assert_eq!(point_estimates(&post).unwrap().sigma2, post.b / (post.a - 1.0));
    }

    #[test]
    fn posterior_mean_is_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = random_data(&mut rng, 12, 8, 6);
        let post = fit_nvard(&d.suff_stats().unwrap()).unwrap();
        let (z, y) = stacked(&d);
        let ols = z.clone().svd(true, true).solve(&y, 1e-14).unwrap();
        assert!((&post.mu - &ols).amax() / ols.amax() < 1e-10);
        assert_eq!(post.v, (72 - 8) as f64);
        assert_eq!(post.a, post.v / 2.0);
        assert_eq!(post.b, post.q / 2.0);
        let resid = &y - &z * &ols;
        assert!((post.q - resid.dot(&resid)).abs() < 1e-9 * post.q);
    }

    #[test]
    fn sigma2_hat_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = random_data(&mut rng, 20, 6, 3);
        let s = d.suff_stats().unwrap();
        let post = fit_nvard(&s).unwrap();
        let pe = point_estimates(&post).unwrap();
        let n = s.n_obs as f64;
        let k = s.k() as f64;
        let lhs = pe.sigma2 * (n - k - 2.0) + s.szy.dot(&post.mu);
        assert!((lhs - s.syy).abs() < 1e-9 * s.syy);
    }

    #[test]
    fn point_estimate_examples() {
        let post = |q: f64, n_obs: usize, k: usize| NvardPosterior {
            v: (n_obs - k) as f64,
            mu: DVector::zeros(k),
            sigma: DMatrix::zeros(k, k),
            a: (n_obs - k) as f64 / 2.0,
            b: q / 2.0,
            q,
            n_obs,
            labels: vec![],
        };
        assert_eq!(point_estimates(&post(0.0, 18, 7)).unwrap().sigma2, 0.0);
        let s = point_estimates(&post(10.0, 18, 7)).unwrap().sigma2;
        assert!((s - 10.0 / 9.0).abs() < 1e-15);
        assert!(matches!(point_estimates(&post(1.0, 9, 7)), Err(Error::UndefinedMean(_))));
    }

    #[test]
    fn singular_design_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut d = random_data(&mut rng, 10, 3, 2);
        for z in &mut d.designs {
            let c = z.rows.column(1) * 3.0;
            z.rows.set_column(2, &c);
        }
        assert!(matches!(
            fit_nvard(&d.suff_stats().unwrap()),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn intervals() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = random_data(&mut rng, 200, 3, 6);
        let post = fit_nvard(&d.suff_stats().unwrap()).unwrap();
        assert!(post.v >= 1000.0);
        for iv in credible_intervals(&post, 0.0).unwrap() {
            assert_eq!(iv.lower, iv.upper);
        }
        // Cornish-Fisher expansion of the t quantile around the normal one
        let z: f64 = 1.959963984540054;
        let v = post.v;
        let t_q = z
            + (z.powi(3) + z) / (4.0 * v)
            + (5.0 * z.powi(5) + 16.0 * z.powi(3) + 3.0 * z) / (96.0 * v * v);
        let ivs = credible_intervals(&post, 0.95).unwrap();
        for (c, iv) in ivs.iter().enumerate() {
            let half = 0.5 * (iv.upper - iv.lower);
            let expected = t_q * post.sigma[(c, c)].sqrt();
            assert!((half / expected - 1.0).abs() < 1e-5, "{half} vs {expected}");
            assert!((0.5 * (iv.upper + iv.lower) - post.mu[c]).abs() < 1e-12);
        }
        assert!(credible_intervals(&post, 1.0).is_err());
        assert!(credible_intervals(&post, -0.1).is_err());
    }

    #[test]
    fn prediction() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let d = random_data(&mut rng, 12, 4, 2);
        let mut post = fit_nvard(&d.suff_stats().unwrap()).unwrap();
        let z = &d.designs[1];
        let oracle: Vec<f64> = (0..z.nrows())
            .map(|r| (0..4).map(|c| z.rows[(r, c)] * post.mu[c]).sum())
            .collect();
        let pred = predict_nvard(&post, z).unwrap();
        for (p, o) in pred.iter().zip(&oracle) {
            assert!((p - o).abs() < 1e-12);
        }
        post.mu = DVector::zeros(4);
        assert!(predict_nvard(&post, z).unwrap().iter().all(|&v| v == 0.0));
        post.mu[0] = 3.5;
        assert!(predict_nvard(&post, z).unwrap().iter().all(|&v| v == 3.5));
        let narrow = DesignMatrix {
            t: 1,
            rows: DMatrix::zeros(12, 3),
            labels: vec![],
        };
        assert!(predict_nvard(&post, &narrow).is_err());
    }

    #[test]
    fn log_joint_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = random_data(&mut rng, 12, 4, 3);
        let s = d.suff_stats().unwrap();
        let post = fit_nvard(&s).unwrap();
        assert!((s.rss(&post.mu) - post.q).abs() < 1e-9 * s.syy);

        let sigma2 = 0.8;
        let l1 = log_joint_posterior(&s, &post.mu, sigma2).unwrap();
        let l2 = log_joint_posterior(&s, &post.mu, 2.0 * sigma2).unwrap();
        let n = s.n_obs as f64;
        let expected = -(n / 2.0 + 1.0) * 2f64.ln() + post.q / (2.0 * sigma2) - post.q / (4.0 * sigma2);
        assert!((l2 - l1 - expected).abs() < 1e-9);

        let beta = DVector::from_vec(vec![0.1, -0.4, 0.9, 0.0]);
        let a = log_joint_posterior(&s, &beta, 1.7).unwrap();
        let b = log_joint_posterior_raw(&d, &beta, 1.7).unwrap();
        assert!((a - b).abs() < 1e-9 * a.abs());
        assert!(log_joint_posterior(&s, &beta, 0.0).is_err());
    }

    #[test]
    fn block_order_does_not_change_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d = random_data(&mut rng, 12, 4, 5);
        let mu = fit_nvard(&d.suff_stats().unwrap()).unwrap().mu;
        let mut rev = d.clone();
        rev.designs.reverse();
        rev.responses.reverse();
        let mu_rev = fit_nvard(&rev.suff_stats().unwrap()).unwrap().mu;
        assert!((mu - mu_rev).amax() < 1e-12);
    }
}
