use nvard_core::design::RegressionData;
use nvard_core::nvard::fit_nvard;
use nvard_core::sim::{simulate_nvard, CovariateGen, CovariateSpec, SimSpec, WeightSpec};

// N / K = 72 * 7 / 8 = 63
#[test]
fn closed_form_recovers_truth_in_nearly_all_replications() {
    const REPS: u64 = 200;
    let beta = vec![0.8, 0.25, 0.1, 0.1, -0.05, 0.05, 0.1, 0.7];
    let mut inside = 0;
    for seed in 0..REPS {
        let s = SimSpec {
            n: 9,
            periods: 7,
            covariates: vec![CovariateSpec {
                name: "x".into(),
                generator: CovariateGen::StdNormal,
            }],
            beta: beta.clone(),
            sigma2_eps: 0.5,
            walk: None,
            weights: WeightSpec::Random,
            initial: Default::default(),
            seed,
        };
        let sim = simulate_nvard(&s).unwrap();
        let data = RegressionData::from_panel(&sim.panel, &sim.weights, &sim.covariates, 7).unwrap();
        let stats = data.suff_stats().unwrap();
        assert!(stats.n_obs as f64 / beta.len() as f64 >= 50.0);
        let post = fit_nvard(&stats).unwrap();
        let scale = post.v / (post.v - 2.0);
        let max_sd = (0..beta.len())
            .map(|c| (post.sigma[(c, c)] * scale).sqrt())
            .fold(0.0, f64::max);
        let gap = (0..beta.len())
            .map(|c| (post.mu[c] - beta[c]).abs())
            .fold(0.0, f64::max);
        inside += usize::from(gap < 5.0 * max_sd);
    }
    assert!(inside as f64 >= 0.99 * REPS as f64, "{inside}/{REPS}");
}
