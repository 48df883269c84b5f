use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use nvard_core::design::{ColumnSplit, RegressionData};
use nvard_core::dyad::{dyads, eligible, WeightFamily};
use nvard_core::harness::report::{self, FIT_JSON, PREDICTIONS};
use nvard_core::harness::{emit_report, ingest, run_fit_predict, ModelKind, RunConfig};
use nvard_core::nvard::fit_nvard;
use nvard_core::sim::{
    brute_force_nvard_posterior, closed_form_gap, conditional_ratio_check, simulate_nvard,
    simulate_vcnvard, GridSpec, MarginalGap, RatioCheck, RatioReport, SimSpec, Simulated,
};
use nvard_core::vcnvard::VcnvardData;
use nvard_core::{Error, Result};

#[derive(Parser)]
#[command(name = "nvard", version, about = "Network VAR models for directed dyadic panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic panel and a matching run config.
    Simulate(SimulateArgs),
    /// Fit the selected models on the training years and write fit.json.
    Fit(RunArgs),
    /// Fit and write test-year forecasts to predictions.csv.
    Predict(RunArgs),
    /// Fit, forecast and score against the test-year flows.
    Evaluate(RunArgs),
    /// Check the posterior formulas against brute-force oracles.
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML simulation spec.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value = "sim")]
    out: PathBuf,
    /// Year label of the initial matrix.
    #[arg(long, default_value_t = 2000)]
    first_year: i64,
    /// Replaces the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    flows: Option<PathBuf>,
    #[arg(long)]
    node_covariates: Option<PathBuf>,
    #[arg(long)]
    dyad_covariates: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Comma-separated node filter.
    #[arg(long, value_delimiter = ',')]
    nodes: Option<Vec<String>>,
    #[arg(long)]
    initial_year: Option<i64>,
    #[arg(long)]
    train_end: Option<i64>,
    #[arg(long)]
    test_year: Option<i64>,
    /// Use flows and covariates as given.
    #[arg(long)]
    no_log: bool,
    /// Comma-separated subset of nvard, vcnvard, baselines.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Comma-separated design-column labels that drift over time.
    #[arg(long, value_delimiter = ',')]
    varying: Option<Vec<String>>,
    #[arg(long)]
    chain_length: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// TOML simulation spec; a small built-in instance when absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Design-column labels treated as time-varying in the ratio check.
    #[arg(long, value_delimiter = ',', default_value = "intercept")]
    varying: Vec<String>,
    /// Coefficient whose marginal is tabulated.
    #[arg(long, default_value = "lag_self")]
    coefficient: String,
    #[arg(long, default_value_t = 100)]
    probes: usize,
    #[arg(long, default_value_t = 1e-8)]
    ratio_tolerance: f64,
    #[arg(long, default_value_t = 1e-3)]
    density_tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
        if v.is_some() {
            slot.clone_from(v);
        }
    };
    set(&mut cfg.data.flows, &args.flows);
    set(&mut cfg.data.node_covariates, &args.node_covariates);
    set(&mut cfg.data.dyad_covariates, &args.dyad_covariates);
    set(&mut cfg.data.weights, &args.weights);
    if args.nodes.is_some() {
        cfg.nodes.clone_from(&args.nodes);
    }
    cfg.initial_year = args.initial_year.or(cfg.initial_year);
    cfg.train_end = args.train_end.or(cfg.train_end);
    cfg.test_year = args.test_year.or(cfg.test_year);
    if args.no_log {
        cfg.log_transform = false;
    }
    if let Some(models) = &args.models {
        cfg.models = models
            .iter()
            .filter(|m| !m.trim().is_empty())
            .map(|m| {
                ModelKind::parse(m)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown model {m:?}")))
            })
            .collect::<Result<_>>()?;
    }
    if let Some(v) = &args.varying {
        cfg.varying.clone_from(v);
    }
    if let Some(v) = args.chain_length {
        cfg.gibbs.chain_length = v;
    }
    if let Some(v) = args.burn_in {
        cfg.gibbs.burn_in = v;
    }
    if let Some(v) = args.thin {
        cfg.gibbs.thin = v;
    }
    if let Some(v) = args.chains {
        cfg.gibbs.n_chains = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.out {
        cfg.output.clone_from(v);
    }
    Ok(cfg)
}

fn fit(args: &RunArgs, with_test: bool) -> Result<(RunConfig, nvard_core::harness::EvalReport)> {
    let cfg = run_config(args)?;
    let ing = ingest(&cfg, with_test)?;
    let report = run_fit_predict(&ing, &cfg)?;
    fs::create_dir_all(&cfg.output)?;
    Ok((cfg, report))
}

fn node_names(n: usize) -> Vec<String> {
    let width = (n - 1).to_string().len();
    (0..n).map(|i| format!("v{i:0width$}")).collect()
}

#[derive(Serialize)]
struct Truth<'a> {
    spec: &'a SimSpec,
    varying: Vec<String>,
    years: Vec<i64>,
    /// Full coefficient vector per period, `1..=T`.
    path: Vec<Vec<f64>>,
}

fn write_simulation(sim: &Simulated, spec: &SimSpec, args: &SimulateArgs, varying: Vec<String>) -> Result<()> {
    let out = &args.out;
    fs::create_dir_all(out)?;
    let n = spec.n;
    let nodes = node_names(n);
    let years: Vec<i64> = (0..=spec.periods as i64).map(|t| args.first_year + t).collect();

    let mut w = csv::Writer::from_path(out.join("flows.csv"))?;
    w.write_record(["origin", "dest", "year", "value"])?;
    for (t, &year) in years.iter().enumerate() {
        let flow = sim.panel.flow(t)?;
        for (i, j) in dyads(n) {
            w.write_record([&nodes[i], &nodes[j], &year.to_string(), &flow.get(i, j)?.to_string()])?;
        }
    }
    w.flush()?;

    let names = sim.covariates.names().to_vec();
    let has_covariates = !names.is_empty();
    if has_covariates {
        let mut w = csv::Writer::from_path(out.join("dyad_covariates.csv"))?;
        w.write_record(["origin", "dest", "name", "value", "year"])?;
        for t in 1..=spec.periods + 1 {
            let year = (args.first_year + t as i64).to_string();
            for (i, j) in dyads(n) {
                for (name, v) in names.iter().zip(sim.covariates.get(i, j, t)?) {
                    w.write_record([&nodes[i], &nodes[j], name, &v.to_string(), &year])?;
                }
            }
        }
        w.flush()?;
    }

    let mut w = csv::Writer::from_path(out.join("weights.csv"))?;
    w.write_record(["family", "origin", "dest", "k", "weight"])?;
    for fam in WeightFamily::ALL {
        for (i, j) in dyads(n) {
            for k in eligible(n, i, j) {
                let v = sim.weights.weight(fam, i, j, k)?;
                w.write_record([fam.label(), &nodes[i], &nodes[j], &nodes[k], &v.to_string()])?;
            }
        }
    }
    w.flush()?;

    let truth = Truth {
        spec,
        varying: varying.clone(),
        years: years.clone(),
        path: sim.path.iter().map(|b| b.iter().copied().collect()).collect(),
    };
    fs::write(out.join("truth.json"), serde_json::to_string_pretty(&truth)? + "\n")?;

    let mut cfg = RunConfig {
        initial_year: Some(years[0]),
        train_end: Some(years[spec.periods - 1]),
        test_year: Some(years[spec.periods]),
        log_transform: false,
        output: PathBuf::from("out"),
        seed: spec.seed,
        ..RunConfig::default()
    };
    cfg.gibbs.seed = spec.seed;
    cfg.data.flows = Some(PathBuf::from("flows.csv"));
    cfg.data.weights = Some(PathBuf::from("weights.csv"));
    if has_covariates {
        cfg.data.dyad_covariates = Some(PathBuf::from("dyad_covariates.csv"));
    }
    if !varying.is_empty() {
        cfg.varying = varying;
    } else {
        cfg.varying = vec!["intercept".into()];
    }
    fs::write(out.join("run.toml"), cfg.to_toml()?)?;
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut spec: SimSpec = toml::from_str(&fs::read_to_string(&args.spec)?)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if spec.periods < 2 {
        return Err(Error::InvalidArgument(
            "simulate needs periods >= 2 to leave a test year".into(),
        ));
    }
    let (sim, varying) = match &spec.walk {
        Some(walk) => (simulate_vcnvard(&spec)?.0, walk.varying.clone()),
        None => (simulate_nvard(&spec)?, Vec::new()),
    };
    write_simulation(&sim, &spec, args, varying)
}

fn default_oracle_spec() -> SimSpec {
    SimSpec {
        n: 3,
        periods: 4,
        covariates: Vec::new(),
        beta: vec![0.5, 0.2, -0.1, 0.1, 0.05, -0.05, 0.1],
        sigma2_eps: 0.5,
        walk: None,
        weights: Default::default(),
        initial: Default::default(),
        seed: 0,
    }
}

#[derive(Serialize)]
struct OracleSummary {
    coefficient: String,
    density_gap: MarginalGap,
    density_tolerance: f64,
    resolution_gap: f64,
    ratio: RatioReport,
    ratio_tolerance: f64,
}

fn oracle_check(args: &OracleArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(path) => toml::from_str(&fs::read_to_string(path)?)?,
        None => default_oracle_spec(),
    };
    spec.seed = args.seed;
    let sim = simulate_nvard(&SimSpec { walk: None, ..spec.clone() })?;
    let data = RegressionData::from_panel(&sim.panel, &sim.weights, &sim.covariates, spec.periods)?;
    let labels = data.labels().to_vec();
    let coordinate = labels
        .iter()
        .position(|l| *l == args.coefficient)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown coefficient {:?}", args.coefficient)))?;

    let post = fit_nvard(&data.suff_stats()?)?;
    let marginals = brute_force_nvard_posterior(&data, coordinate, &GridSpec::default())?;
    let gap = closed_form_gap(&post, &marginals)?;

    let split = ColumnSplit::from_labels(&labels, &args.varying)?;
    let vd = VcnvardData::new(&data, &split)?;
    let check = RatioCheck {
        n_probes: args.probes,
        tolerance: args.ratio_tolerance,
        ..RatioCheck::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let ratio = conditional_ratio_check(&vd, &check, &mut rng)?;

    let summary = OracleSummary {
        coefficient: args.coefficient.clone(),
        density_gap: gap,
        density_tolerance: args.density_tolerance,
        resolution_gap: marginals.resolution_gap,
        ratio,
        ratio_tolerance: args.ratio_tolerance,
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    let worst = gap.beta.max(gap.sigma2);
    if !(worst < args.density_tolerance) {
        return Err(Error::OracleFailure {
            family: "quadrature".into(),
            deviation: worst,
            tolerance: args.density_tolerance,
        });
    }
    Ok(())
}

fn write(path: &Path, text: String) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => simulate(&args),
        Command::Fit(args) => {
            let (cfg, rep) = fit(&args, false)?;
            write(&cfg.output.join(FIT_JSON), report::fit_json(&rep)?)
        }
        Command::Predict(args) => {
            let (cfg, rep) = fit(&args, false)?;
            write(&cfg.output.join(PREDICTIONS), report::predictions(&rep)?)
        }
        Command::Evaluate(args) => {
            let (cfg, rep) = fit(&args, true)?;
            emit_report(&rep, &cfg.output)?;
            print!("{}", report::rmse_table(&rep)?);
            Ok(())
        }
        Command::OracleCheck(args) => oracle_check(&args),
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    message: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = ErrorRecord {
                error: e.kind(),
                message: e.to_string(),
            };
            eprintln!("{}", serde_json::to_string(&record).expect("plain record"));
            ExitCode::FAILURE
        }
    }
}
