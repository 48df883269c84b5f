//! CSV ingestion.
//!
//! Formats (UTF-8, headers required, `.` decimal separator):
//!
//! ```text
//! flows            origin,dest,year,value
//! node covariates  node,year,name,value         -> columns <name>_origin, <name>_dest
//! dyad covariates  origin,dest,name,value[,year] -> column <name>; no year = time-invariant
//! weights          family,origin,dest,k,weight  (family in oo, od, do, dd)
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::Deserialize;

use super::config::RunConfig;
use crate::dyad::{
    dyads, equal_weights, validate_weights, CovariateTensor, DyadMatrix, DyadicPanel, WeightFamily, WeightScheme,
};
use crate::error::{Error, MissingCell, Result};

#[derive(Debug, Deserialize)]
struct FlowRecord {
    origin: String,
    dest: String,
    year: i64,
    value: f64,
}

#[derive(Debug, Deserialize)]
struct NodeRecord {
    node: String,
    year: i64,
    name: String,
    value: f64,
}

#[derive(Debug, Deserialize)]
struct DyadRecord {
    origin: String,
    dest: String,
    name: String,
    value: f64,
    #[serde(default)]
    year: Option<i64>,
}

#[derive(Debug, Deserialize)]
struct WeightRecord {
    family: String,
    origin: String,
    dest: String,
    k: String,
    weight: f64,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Assembled inputs of one run.
#[derive(Debug, Clone)]
pub struct Ingested {
    /// Flows from the initial year through the last year read.
    pub panel: DyadicPanel,
    /// Covariates for every period up to and including the test year.
    pub covariates: CovariateTensor,
    pub weights: WeightScheme,
    /// Year label of every period, initial year first, test year last.
    pub years: Vec<i64>,
    /// Training transitions `T`.
    pub train_periods: usize,
}

impl Ingested {
    pub fn test_period(&self) -> usize {
        self.train_periods + 1
    }

    /// Whether the panel holds the test-year flows.
    pub fn has_test_flows(&self) -> bool {
        self.panel.periods() > self.train_periods
    }

    pub fn training_panel(&self) -> Result<DyadicPanel> {
        self.panel.truncated(self.train_periods)
    }
}

fn log_value(value: f64, location: impl FnOnce() -> String) -> Result<f64> {
    if value > 0.0 {
        Ok(value.ln())
    } else {
        Err(Error::NonPositiveLog {
            location: location(),
            value,
        })
    }
}

/// Year labels `initial..=test`, checked to be evenly spaced.
fn period_years(flow_years: &BTreeSet<i64>, initial: i64, end: i64, test: i64) -> Result<Vec<i64>> {
    let mut years: Vec<i64> = flow_years
        .range(initial..=end)
        .copied()
        .collect();
    if years.first() != Some(&initial) || years.last() != Some(&end) {
        return Err(Error::InvalidArgument(format!(
            "flows must contain both the initial year {initial} and the training end {end}"
        )));
    }
    let step = years[1] - years[0];
    if years.windows(2).any(|w| w[1] - w[0] != step) {
        return Err(Error::InvalidArgument(format!(
            "training years are not evenly spaced: {years:?}"
        )));
    }
    if test != end + step {
        return Err(Error::InvalidArgument(format!(
            "test year {test} must be one step ({step}) after the training end {end}"
        )));
    }
    years.push(test);
    Ok(years)
}

/// Read and assemble the configured files. With `require_test_flows` the
/// test-year flows must be complete too; otherwise they are not read.
pub fn ingest(config: &RunConfig, require_test_flows: bool) -> Result<Ingested> {
    let (initial, end, test) = config.years()?;
    let flows: Vec<FlowRecord> = read_csv(config.flows_path()?)?;

    let nodes: Vec<String> = match &config.nodes {
        Some(list) => {
            let mut seen = BTreeSet::new();
            if let Some(dup) = list.iter().find(|n| !seen.insert(n.as_str())) {
                return Err(Error::InvalidArgument(format!("node {dup} listed twice")));
            }
            list.clone()
        }
        None => flows
            .iter()
            .flat_map(|r| [r.origin.clone(), r.dest.clone()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    if nodes.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 nodes, got {}",
            nodes.len()
        )));
    }
    let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

    let flow_years: BTreeSet<i64> = flows.iter().map(|r| r.year).collect();
    let years = period_years(&flow_years, initial, end, test)?;
    let year_pos: HashMap<i64, usize> = years.iter().enumerate().map(|(p, &y)| (y, p)).collect();
    let read_periods = if require_test_flows { years.len() } else { years.len() - 1 };

    let mut cells: HashMap<(usize, usize, usize), f64> = HashMap::new();
    for r in &flows {
        let (Some(&i), Some(&j), Some(&p)) = (
            index.get(r.origin.as_str()),
            index.get(r.dest.as_str()),
            year_pos.get(&r.year),
        ) else {
            continue;
        };
        if i == j || p >= read_periods {
            continue;
        }
        if cells.insert((i, j, p), r.value).is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate flow for ({}, {}, {})",
                r.origin, r.dest, r.year
            )));
        }
    }

    let n = nodes.len();
    let mut missing = Vec::new();
    let mut matrices = Vec::with_capacity(read_periods);
    for (p, &year) in years.iter().take(read_periods).enumerate() {
        let mut m = DyadMatrix::from_fn(n, |_, _| 0.0)?;
        for (i, j) in dyads(n) {
            match cells.get(&(i, j, p)) {
                Some(&v) => {
                    let v = if config.log_transform {
                        log_value(v, || format!("flow ({}, {}, {year})", nodes[i], nodes[j]))?
                    } else {
                        v
                    };
                    m.set(i, j, v)?;
                }
                None => missing.push(MissingCell {
                    origin: nodes[i].clone(),
                    dest: nodes[j].clone(),
                    year,
                }),
            }
        }
        matrices.push(m);
    }
    if !missing.is_empty() {
        return Err(Error::MissingCells(missing));
    }
    let panel = DyadicPanel::new(
        nodes.clone(),
        years[..read_periods].to_vec(),
        matrices,
        config.log_transform,
    )?;

    let covariates = read_covariates(config, &nodes, &index, &years)?;
    let weights = match &config.data.weights {
        Some(path) => read_weights(path, &nodes, &index)?,
        None => equal_weights(n)?,
    };
    Ok(Ingested {
        panel,
        covariates,
        weights,
        train_periods: years.len() - 2,
        years,
    })
}

enum Source {
    /// Values per `(node, year)`, expanded to origin and destination columns.
    Node(HashMap<(usize, i64), f64>),
    /// Values per `(origin, dest, year)`; `None` year applies to every period.
    Dyad(HashMap<(usize, usize, Option<i64>), f64>),
}

fn read_covariates(
    config: &RunConfig,
    nodes: &[String],
    index: &HashMap<&str, usize>,
    years: &[i64],
) -> Result<CovariateTensor> {
    let mut sources: BTreeMap<String, Source> = BTreeMap::new();
    let mut node_names = BTreeSet::new();
    if let Some(path) = &config.data.node_covariates {
        for r in read_csv::<NodeRecord>(path)? {
            let Some(&i) = index.get(r.node.as_str()) else { continue };
            node_names.insert(r.name.clone());
            let entry = sources
                .entry(r.name.clone())
                .or_insert_with(|| Source::Node(HashMap::new()));
            match entry {
                Source::Node(map) => {
                    if map.insert((i, r.year), r.value).is_some() {
                        return Err(Error::InvalidArgument(format!(
                            "duplicate node covariate {} for ({}, {})",
                            r.name, r.node, r.year
                        )));
                    }
                }
                Source::Dyad(_) => unreachable!("node names are inserted as node sources"),
            }
        }
    }
    if let Some(path) = &config.data.dyad_covariates {
        for r in read_csv::<DyadRecord>(path)? {
            let (Some(&i), Some(&j)) = (index.get(r.origin.as_str()), index.get(r.dest.as_str()))
            else {
                continue;
            };
            if i == j {
                continue;
            }
            if node_names.contains(&r.name) {
                return Err(Error::InvalidArgument(format!(
                    "covariate {} appears in both the node and the dyad file",
                    r.name
                )));
            }
            let entry = sources
                .entry(r.name.clone())
                .or_insert_with(|| Source::Dyad(HashMap::new()));
            if let Source::Dyad(map) = entry {
                if map.insert((i, j, r.year), r.value).is_some() {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate dyad covariate {} for ({}, {})",
                        r.name, r.origin, r.dest
                    )));
                }
            }
        }
    }

    let logged: BTreeSet<&str> = match (&config.log_covariates, config.log_transform) {
        (_, false) => BTreeSet::new(),
        (None, true) => sources.keys().map(String::as_str).collect(),
        (Some(list), true) => {
            if let Some(bad) = list.iter().find(|n| !sources.contains_key(*n)) {
                return Err(Error::InvalidArgument(format!(
                    "log_covariates names unknown covariate {bad}"
                )));
            }
            list.iter().map(String::as_str).collect()
        }
    };

    let mut names = Vec::new();
    for (name, src) in &sources {
        match src {
            Source::Node(_) => {
                names.push(format!("{name}_origin"));
                names.push(format!("{name}_dest"));
            }
            Source::Dyad(_) => names.push(name.clone()),
        }
    }

    let n = nodes.len();
    let mut problems: Vec<String> = Vec::new();
    let mut values = Vec::with_capacity(years.len() - 1);
    for &year in &years[1..] {
        let mut block = Vec::with_capacity(names.len() * n * (n - 1));
        for (i, j) in dyads(n) {
            for (name, src) in &sources {
                let log = logged.contains(name.as_str());
                let mut take = |v: Option<f64>, what: String| -> Result<f64> {
                    match v {
                        Some(v) if log => log_value(v, || what),
                        Some(v) => Ok(v),
                        None => {
                            problems.push(what);
                            Ok(f64::NAN)
                        }
                    }
                };
                match src {
                    Source::Node(map) => {
                        for node in [i, j] {
                            let v = map.get(&(node, year)).copied();
                            block.push(take(v, format!("{name} ({}, {year})", nodes[node]))?);
                        }
                    }
                    Source::Dyad(map) => {
                        let v = map
                            .get(&(i, j, Some(year)))
                            .or_else(|| map.get(&(i, j, None)))
                            .copied();
                        block.push(take(v, format!("{name} ({}, {}, {year})", nodes[i], nodes[j]))?);
                    }
                }
            }
        }
        values.push(block);
    }
    if !problems.is_empty() {
        problems.dedup();
        return Err(Error::InvalidArgument(format!(
            "{} missing covariate value(s): {}",
            problems.len(),
            problems.join(", ")
        )));
    }
    CovariateTensor::new(n, names, values)
}

fn read_weights(
    path: &Path,
    nodes: &[String],
    index: &HashMap<&str, usize>,
) -> Result<WeightScheme> {
    let mut map: HashMap<(WeightFamily, usize, usize, usize), f64> = HashMap::new();
    for r in read_csv::<WeightRecord>(path)? {
        let family = WeightFamily::parse(&r.family).ok_or_else(|| {
            Error::InvalidWeights(format!("unknown family {:?} (expected oo, od, do, dd)", r.family))
        })?;
        let (Some(&i), Some(&j), Some(&k)) = (
            index.get(r.origin.as_str()),
            index.get(r.dest.as_str()),
            index.get(r.k.as_str()),
        ) else {
            continue;
        };
        map.insert((family, i, j, k), r.weight);
    }
    let mut missing = Vec::new();
    let scheme = WeightScheme::from_fn(nodes.len(), |fam, i, j, k| {
        map.get(&(fam, i, j, k)).copied().unwrap_or_else(|| {
            missing.push(format!("{} ({}, {}, {})", fam, nodes[i], nodes[j], nodes[k]));
            f64::NAN
        })
    })?;
    if !missing.is_empty() {
        return Err(Error::InvalidWeights(format!(
            "{} missing weight(s), first: {}",
            missing.len(),
            missing[0]
        )));
    }
    let violations = validate_weights(&scheme);
    if !violations.is_empty() {
        let shown: Vec<String> = violations.iter().take(5).map(|v| v.to_string()).collect();
        return Err(Error::InvalidWeights(format!(
            "{} violation(s): {}",
            violations.len(),
            shown.join("; ")
        )));
    }
    Ok(scheme)
}
