//! Comparison models: a per-dyad AR(1) and a pooled regression without the
//! network aggregates.

use nalgebra::DVector;
use serde::Serialize;

use crate::design::{DesignMatrix, RegressionData, BASE_COLUMNS};
use crate::dyad::{dyad_count, DyadicPanel};
use crate::error::{Error, Result};
use crate::nvard::{fit_nvard, NvardPosterior};

/// `y_ijt = a_ij + b_ij y_ij(t-1)` fitted separately for every dyad.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnivariateFit {
    /// `(a, b)` per dyad in `vecd` order.
    pub coefficients: Vec<(f64, f64)>,
    /// Dyads whose lagged series was constant and fell back to their mean.
    pub fallbacks: usize,
}

impl UnivariateFit {
    /// One-step predictions for period `t` from the flows at `t - 1`.
    pub fn predict(&self, panel: &DyadicPanel, t: usize) -> Result<DVector<f64>> {
        if t == 0 {
            return Err(Error::InvalidArgument("prediction needs t >= 1".into()));
        }
        let prev = panel.response(t - 1)?;
        if prev.len() != self.coefficients.len() {
            return Err(Error::Dimension(format!(
                "fit covers {} dyads, panel has {}",
                self.coefficients.len(),
                prev.len()
            )));
        }
        Ok(DVector::from_iterator(
            prev.len(),
            self.coefficients
                .iter()
                .zip(prev.iter())
                .map(|(&(a, b), &y)| a + b * y),
        ))
    }
}

/// Least squares on each dyad's training series `y_0..y_T`.
pub fn baseline_univariate(panel: &DyadicPanel, last: usize) -> Result<UnivariateFit> {
    if last < 2 || last > panel.periods() {
        return Err(Error::InvalidArgument(format!(
            "univariate baseline needs 2 <= T <= {}, got {last}",
            panel.periods()
        )));
    }
    let series: Vec<DVector<f64>> = (0..=last).map(|t| panel.response(t)).collect::<Result<_>>()?;
    let dyads = dyad_count(panel.n());
    let mut coefficients = Vec::with_capacity(dyads);
    let mut fallbacks = 0;
    for p in 0..dyads {
        let x: Vec<f64> = (0..last).map(|t| series[t][p]).collect();
        let y: Vec<f64> = (1..=last).map(|t| series[t][p]).collect();
        let n = last as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let scale = x.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
        if sxx <= 1e-14 * scale {
            coefficients.push((my, 0.0));
            fallbacks += 1;
        } else {
            let b = sxy / sxx;
            coefficients.push((my - b * mx, b));
        }
    }
    Ok(UnivariateFit {
        coefficients,
        fallbacks,
    })
}

/// Design columns kept by the panel regression: intercept, both own lags
/// and the covariates.
pub fn panel_columns(k: usize) -> Vec<usize> {
    [0, 1, 2].into_iter().chain(BASE_COLUMNS..k).collect()
}

/// Pooled least squares over all training periods on [`panel_columns`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelFit {
    pub columns: Vec<usize>,
    pub posterior: NvardPosterior,
}

impl PanelFit {
    pub fn predict(&self, z: &DesignMatrix) -> Result<DVector<f64>> {
        if z.k() <= *self.columns.last().unwrap_or(&0) {
            return Err(Error::Dimension("design narrower than the fitted columns".into()));
        }
        Ok(z.rows.select_columns(&self.columns) * &self.posterior.mu)
    }
}

pub fn baseline_panel_regression(data: &RegressionData) -> Result<PanelFit> {
    let k = data
        .designs
        .first()
        .map(|d| d.k())
        .ok_or_else(|| Error::InvalidArgument("no training periods".into()))?;
    let columns = panel_columns(k);
    let reduced = data.select_columns(&columns)?;
    let posterior = fit_nvard(&reduced.suff_stats()?)?;
    Ok(PanelFit { columns, posterior })
}
