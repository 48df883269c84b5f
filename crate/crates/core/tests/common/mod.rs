//! Property checks shared by the proptest target and the acceptance runner.
#![allow(dead_code)]

use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use nvard_core::design::{build_design, build_row, RegressionData, BASE_COLUMNS};
use nvard_core::dyad::{
    dyad_count, equal_weights, unvecd, validate_weights, vecd, CovariateTensor, DyadMatrix,
    DyadicPanel, WeightFamily, WeightScheme,
};

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn fail(msg: impl Into<String>) -> TestCaseError {
    TestCaseError::fail(msg.into())
}

/// Square matrix with its size.
fn square(lo: usize, hi: usize) -> impl Strategy<Value = (usize, Vec<f64>)> {
    (lo..hi).prop_flat_map(|n| (Just(n), prop::collection::vec(-1e3f64..1e3, n * n)))
}

/// `vecd` reads off-diagonals column by column, and `unvecd` inverts it.
pub fn vecd_round_trip(cases: u32) -> Result<(), String> {
    run(cases, square(2, 10), |(n, cells)| {
        let a = DMatrix::from_column_slice(n, n, &cells);
        let v = vecd(&a).map_err(|e| fail(e.to_string()))?;
        if v.len() != n * n - n {
            return Err(fail(format!("length {} for n = {n}", v.len())));
        }
        // position j(n-1) + i - [i > j], written out independently
        let mut p = 0;
        for j in 0..n {
            for i in 0..n {
                if i == j {
                    continue;
                }
                if v[p] != a[(i, j)] || p != j * (n - 1) + i - usize::from(i > j) {
                    return Err(fail(format!("cell ({i}, {j}) misplaced")));
                }
                p += 1;
            }
        }
        let back = unvecd(v.as_slice(), n).map_err(|e| fail(e.to_string()))?;
        if back.vecd() != v {
            return Err(fail("unvecd(vecd(A)) lost entries"));
        }
        for j in 0..n {
            for i in 0..n {
                if i != j && back.get(i, j).unwrap() != a[(i, j)] {
                    return Err(fail(format!("round trip changed ({i}, {j})")));
                }
            }
        }
        Ok(())
    })
}

fn raw_weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..10.0, 4 * n * n * n)
}

fn normalised(n: usize, raw: &[f64]) -> WeightScheme {
    let idx = |f: WeightFamily, i: usize, j: usize, k: usize| ((f as usize * n + i) * n + j) * n + k;
    WeightScheme::from_fn(n, |f, i, j, k| {
        let total: f64 = (0..n).filter(|&q| q != i && q != j).map(|q| raw[idx(f, i, j, q)]).sum();
        raw[idx(f, i, j, k)] / total
    })
    .unwrap()
}

/// Normalised positive weights pass validation; equal weights are
/// `1/(n-2)`; a scaled row is caught as exactly one violation.
pub fn weight_normalisation(cases: u32) -> Result<(), String> {
    let strat = (3usize..9).prop_flat_map(|n| (Just(n), raw_weights(n), 0.5f64..0.99));
    run(cases, strat, |(n, raw, scale)| {
        let w = normalised(n, &raw);
        if !validate_weights(&w).is_empty() {
            return Err(fail("normalised weights rejected"));
        }
        let eq = equal_weights(n).unwrap();
        for f in WeightFamily::ALL {
            for (i, j) in nvard_core::dyad::dyads(n) {
                let mut sum = 0.0;
                for k in (0..n).filter(|&k| k != i && k != j) {
                    let v = eq.weight(f, i, j, k).unwrap();
                    if (v - 1.0 / (n - 2) as f64).abs() > 1e-15 {
                        return Err(fail("equal weight is not 1/(n-2)"));
                    }
                    sum += w.weight(f, i, j, k).unwrap();
                }
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(fail(format!("row ({i}, {j}) sums to {sum}")));
                }
            }
        }
        let bad = WeightScheme::from_fn(n, |f, i, j, k| {
            let v = w.weight(f, i, j, k).unwrap();
            if f == WeightFamily::DestOrigin && (i, j) == (1, 0) {
                v * scale
            } else {
                v
            }
        })
        .unwrap();
        let found = validate_weights(&bad);
        if found.len() != 1 || found[0].family != WeightFamily::DestOrigin {
            return Err(fail(format!("expected one violation, got {found:?}")));
        }
        Ok(())
    })
}

#[derive(Debug, Clone)]
pub struct DesignCase {
    n: usize,
    m: usize,
    flows: Vec<f64>,
    raw: Vec<f64>,
    x: Vec<f64>,
}

fn design_case() -> impl Strategy<Value = DesignCase> {
    (3usize..8, 0usize..4).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-5.0f64..5.0, 2 * n * n),
            raw_weights(n),
            prop::collection::vec(-3.0f64..3.0, n * n * m),
        )
            .prop_map(move |(flows, raw, x)| DesignCase { n, m, flows, raw, x })
    })
}

fn assemble(c: &DesignCase) -> (DyadicPanel, WeightScheme, CovariateTensor) {
    let n = c.n;
    let mats = (0..2)
        .map(|t| DyadMatrix::from_fn(n, |i, j| c.flows[t * n * n + j * n + i]).unwrap())
        .collect();
    let panel = DyadicPanel::unlabeled(mats).unwrap();
    let names = (0..c.m).map(|q| format!("x{q}")).collect();
    let rows = dyad_count(n);
    let x = CovariateTensor::new(n, names, vec![c.x[..rows * c.m].to_vec()]).unwrap();
    (panel, normalised(n, &c.raw), x)
}

/// Every design entry equals the aggregate written out term by term.
pub fn design_row_brute_force(cases: u32) -> Result<(), String> {
    run(cases, design_case(), |c| {
        let n = c.n;
        let (panel, w, x) = assemble(&c);
        let z = build_design(&panel, &w, &x, 1).map_err(|e| fail(e.to_string()))?;
        let y = |i: usize, j: usize| c.flows[j * n + i];
        let mut p = 0;
        for j in 0..n {
            for i in 0..n {
                if i == j {
                    continue;
                }
                let mut want = vec![1.0, y(i, j), y(j, i), 0.0, 0.0, 0.0, 0.0];
                for k in 0..n {
                    if k == i || k == j {
                        continue;
                    }
                    want[3] += w.weight(WeightFamily::OriginOrigin, i, j, k).unwrap() * y(i, k);
                    want[4] += w.weight(WeightFamily::OriginDest, i, j, k).unwrap() * y(k, i);
                    want[5] += w.weight(WeightFamily::DestOrigin, i, j, k).unwrap() * y(j, k);
                    want[6] += w.weight(WeightFamily::DestDest, i, j, k).unwrap() * y(k, j);
                }
                want.extend_from_slice(&c.x[p * c.m..(p + 1) * c.m]);
                let row = build_row(&panel, &w, &x, i, j, 1).map_err(|e| fail(e.to_string()))?;
                for (col, &v) in want.iter().enumerate() {
                    let tol = 1e-12 * (1.0 + v.abs());
                    if (z.rows[(p, col)] - v).abs() > tol || (row[col] - v).abs() > tol {
                        return Err(fail(format!("pair ({i}, {j}) column {col}")));
                    }
                }
                p += 1;
            }
        }
        Ok(())
    })
}

/// Designs are `(n^2 - n) x (7 + M)` with matching labels and statistics.
pub fn dimensions(cases: u32) -> Result<(), String> {
    run(cases, design_case(), |c| {
        let n = c.n;
        let k = BASE_COLUMNS + c.m;
        if k != 7 + c.m {
            return Err(fail("base column count is not 7"));
        }
        let (panel, w, x) = assemble(&c);
        let data = RegressionData::from_panel(&panel, &w, &x, 1).map_err(|e| fail(e.to_string()))?;
        let z = &data.designs[0];
        if z.k() != k || z.nrows() != n * n - n || z.labels.len() != k || data.responses[0].len() != n * n - n {
            return Err(fail(format!("design {}x{} for n = {n}, M = {}", z.nrows(), z.k(), c.m)));
        }
        let stats = data.suff_stats().map_err(|e| fail(e.to_string()))?;
        if stats.k() != k || stats.n_obs != n * n - n {
            return Err(fail("sufficient statistics have the wrong shape"));
        }
        if build_design(&panel, &w, &x, 3).is_ok() {
            return Err(fail("design beyond the panel accepted"));
        }
        Ok(())
    })
}
