//! Convergence summaries for retained MCMC draws: split-chain potential
//! scale reduction and the multi-chain effective sample size with Geyer's
//! initial monotone sequence truncation.

use serde::Serialize;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64], m: f64) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

fn split_halves<'a>(chains: &[&'a [f64]]) -> Vec<&'a [f64]> {
    chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            // odd lengths drop the middle draw
            [&c[..h], &c[c.len() - h..]]
        })
        .collect()
}

/// Within-chain variance `W` and pooled estimate `var+` for equal-length chains.
fn variance_components(chains: &[&[f64]]) -> (f64, f64) {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, &m)| sample_var(c, m))
        .sum::<f64>()
        / chains.len() as f64;
    let grand = mean(&means);
    let b = if chains.len() > 1 {
        n * means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (chains.len() - 1) as f64
    } else {
        0.0
    };
    (w, (n - 1.0) / n * w + b / n)
}

/// Split-chain R-hat. Each chain is halved so that a single chain still
/// exposes drift. Returns 1 for constant draws.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    let halves = split_halves(chains);
    if halves.is_empty() || halves[0].len() < 2 {
        return f64::NAN;
    }
    let (w, var_plus) = variance_components(&halves);
    if w == 0.0 {
        return if var_plus == 0.0 { 1.0 } else { f64::INFINITY };
    }
    (var_plus / w).sqrt()
}

fn autocovariance(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum::<f64>()
        / n as f64
}

/// Effective sample size across chains of equal length.
pub fn ess(chains: &[&[f64]]) -> f64 {
    if chains.is_empty() || chains[0].len() < 4 {
        return f64::NAN;
    }
    let n = chains[0].len();
    let total = (n * chains.len()) as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let (w, var_plus) = variance_components(chains);
    if w == 0.0 || var_plus == 0.0 {
        return f64::NAN;
    }
    let rho = |lag: usize| -> f64 {
        let acov = chains
            .iter()
            .zip(&means)
            .map(|(c, &m)| autocovariance(c, m, lag))
            .sum::<f64>()
            / chains.len() as f64;
        let acov0 = chains
            .iter()
            .zip(&means)
            .map(|(c, &m)| autocovariance(c, m, 0))
            .sum::<f64>()
            / chains.len() as f64;
        // within-chain variance in the biased (1/n) convention
        1.0 - (acov0 * n as f64 / (n as f64 - 1.0) - acov) / var_plus
    };

    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = tau.max(1.0 / total.log10().max(1.0));
    total / tau
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub ess: f64,
    pub rhat: f64,
    /// Monte Carlo standard error of the mean, `sd / sqrt(ess)`.
    pub mcse: f64,
}

pub fn summarize(name: impl Into<String>, chains: &[&[f64]]) -> ScalarSummary {
    let all: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
    let m = mean(&all);
    let sd = sample_var(&all, m).sqrt();
    let e = ess(chains);
    ScalarSummary {
        name: name.into(),
        mean: m,
        sd,
        ess: e,
        rhat: split_rhat(chains),
        mcse: sd / e.sqrt(),
    }
}
