use nalgebra::DVector;
use serde::Serialize;

use super::baselines::{baseline_panel_regression, baseline_univariate};
use super::config::{ModelKind, RunConfig};
use super::ingest::Ingested;
use crate::design::{build_design, ColumnSplit, RegressionData};
use crate::diagnostics::ScalarSummary;
use crate::error::{Error, Result};
use crate::nvard::{credible_intervals, fit_nvard, point_estimates, predict_nvard};
use crate::vcnvard::{predict_vcnvard_design, run_gibbs, VcnvardData};

/// Root mean squared error over paired cells.
pub fn rmse(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(Error::Dimension(format!(
            "rmse over {} predictions and {} values",
            predicted.len(),
            truth.len()
        )));
    }
    let sse: f64 = predicted
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).powi(2))
        .sum();
    Ok((sse / predicted.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelResult {
    pub model: String,
    /// One-step fitted values over all training periods.
    pub rmse_in: f64,
    /// `None` when the test-year flows were not supplied.
    pub rmse_out: Option<f64>,
    #[serde(skip)]
    pub predicted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub label: String,
    pub mean: f64,
    pub sd: f64,
    pub lower95: f64,
    pub upper95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NvardSummary {
    pub dof: f64,
    pub ig_shape: f64,
    pub ig_rate: f64,
    pub sigma2: f64,
    pub coefficients: Vec<Coefficient>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatePath {
    pub label: String,
    /// Posterior mean at each training period.
    pub means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VcnvardSummary {
    pub sigma2_eps: f64,
    pub sigma2_u: f64,
    pub constant: Vec<(String, f64)>,
    pub varying: Vec<StatePath>,
    pub retained_draws: usize,
    pub floored_draws: usize,
    pub diagnostics: Vec<ScalarSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineSummary {
    pub univariate_fallbacks: Option<usize>,
    pub panel_coefficients: Option<Vec<(String, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitMeta {
    pub k: usize,
    pub n_obs: usize,
    pub train_periods: usize,
    pub labels: Vec<String>,
    pub nvard: Option<NvardSummary>,
    pub vcnvard: Option<VcnvardSummary>,
    pub baselines: Option<BaselineSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub nodes: Vec<String>,
    pub years: Vec<i64>,
    pub test_year: i64,
    pub seed: u64,
    pub models: Vec<ModelResult>,
    #[serde(skip)]
    pub truth: Option<Vec<f64>>,
    pub meta: FitMeta,
}

fn stacked(v: &[DVector<f64>]) -> Vec<f64> {
    v.iter().flat_map(|x| x.iter().copied()).collect()
}

fn result(
    model: &str,
    fitted: &[DVector<f64>],
    data: &RegressionData,
    predicted: DVector<f64>,
    truth: Option<&[f64]>,
) -> Result<ModelResult> {
    let rmse_in = rmse(&stacked(fitted), &stacked(&data.responses))?;
    let predicted: Vec<f64> = predicted.iter().copied().collect();
    let rmse_out = truth.map(|t| rmse(&predicted, t)).transpose()?;
    Ok(ModelResult {
        model: model.into(),
        rmse_in,
        rmse_out,
        predicted,
    })
}

/// Fit the configured models on the training years and forecast the test
/// year. Only flows up to the training end are visible to the fits.
pub fn run_fit_predict(ing: &Ingested, config: &RunConfig) -> Result<EvalReport> {
    let t_train = ing.train_periods;
    let train = ing.training_panel()?;
    let data = RegressionData::from_panel(&train, &ing.weights, &ing.covariates, t_train)?;
    let z_next = build_design(&train, &ing.weights, &ing.covariates, t_train + 1)?;
    let truth: Option<Vec<f64>> = if ing.has_test_flows() {
        Some(ing.panel.response(t_train + 1)?.iter().copied().collect())
    } else {
        None
    };
    let labels = data.labels().to_vec();
    let stats = data.suff_stats()?;
    let mut meta = FitMeta {
        k: labels.len(),
        n_obs: stats.n_obs,
        train_periods: t_train,
        labels: labels.clone(),
        nvard: None,
        vcnvard: None,
        baselines: None,
    };
    let mut models = Vec::new();

    if config.runs(ModelKind::Nvard) {
        let post = fit_nvard(&stats)?;
        let fitted: Vec<DVector<f64>> = data.designs.iter().map(|z| &z.rows * &post.mu).collect();
        let pred = predict_nvard(&post, &z_next)?;
        models.push(result("nvard", &fitted, &data, pred, truth.as_deref())?);
        let sd_scale = if post.v > 2.0 { (post.v / (post.v - 2.0)).sqrt() } else { f64::NAN };
        let intervals = credible_intervals(&post, 0.95)?;
        meta.nvard = Some(NvardSummary {
            dof: post.v,
            ig_shape: post.a,
            ig_rate: post.b,
            sigma2: point_estimates(&post).map(|p| p.sigma2).unwrap_or(f64::NAN),
            coefficients: intervals
                .into_iter()
                .enumerate()
                .map(|(c, iv)| Coefficient {
                    label: iv.label,
                    mean: post.mu[c],
                    sd: post.sigma[(c, c)].sqrt() * sd_scale,
                    lower95: iv.lower,
                    upper95: iv.upper,
                })
                .collect(),
        });
    }

    if config.runs(ModelKind::Vcnvard) {
        let split = ColumnSplit::from_labels(&labels, &config.varying)?;
        let vd = VcnvardData::new(&data, &split)?;
        let fit = run_gibbs(&vd, &config.gibbs_config())?;
        let fitted = data
            .designs
            .iter()
            .map(|z| fit.fitted(z))
            .collect::<Result<Vec<_>>>()?;
        let pred = predict_vcnvard_design(&fit, &z_next)?;
        models.push(result("vcnvard", &fitted, &data, pred, truth.as_deref())?);
        meta.vcnvard = Some(VcnvardSummary {
            sigma2_eps: fit.sigma2_eps,
            sigma2_u: fit.sigma2_u,
            constant: split
                .constant()
                .iter()
                .zip(fit.beta1.iter())
                .map(|(&c, &b)| (labels[c].clone(), b))
                .collect(),
            varying: split
                .varying()
                .iter()
                .enumerate()
                .map(|(idx, &c)| StatePath {
                    label: labels[c].clone(),
                    means: fit.beta2.iter().map(|b| b[idx]).collect(),
                })
                .collect(),
            retained_draws: fit.retained(),
            floored_draws: fit.floored_draws,
            diagnostics: fit.diagnostics.clone(),
        });
    }

    if config.runs(ModelKind::Baselines) {
        let uni = baseline_univariate(&train, t_train)?;
        let fitted = (1..=t_train)
            .map(|t| uni.predict(&train, t))
            .collect::<Result<Vec<_>>>()?;
        let pred = uni.predict(&train, t_train + 1)?;
        models.push(result("univariate", &fitted, &data, pred, truth.as_deref())?);

        let pan = baseline_panel_regression(&data)?;
        let fitted = data
            .designs
            .iter()
            .map(|z| pan.predict(z))
            .collect::<Result<Vec<_>>>()?;
        let pred = pan.predict(&z_next)?;
        models.push(result("panel_regression", &fitted, &data, pred, truth.as_deref())?);
        meta.baselines = Some(BaselineSummary {
            univariate_fallbacks: Some(uni.fallbacks),
            panel_coefficients: Some(
                pan.columns
                    .iter()
                    .zip(pan.posterior.mu.iter())
                    .map(|(&c, &b)| (labels[c].clone(), b))
                    .collect(),
            ),
        });
    }

    Ok(EvalReport {
        nodes: ing.panel.nodes().to_vec(),
        years: ing.years.clone(),
        test_year: *ing.years.last().expect("at least two years"),
        seed: config.seed,
        models,
        truth,
        meta,
    })
}
