//! Regressor construction.
//!
//! Each ordered pair `(i, j)` at period `t` gets the row
//!
//! ```text
//! (1, y_ij(t-1), y_ji(t-1),
//!  sum_k w_oo y_ik(t-1), sum_k w_od y_ki(t-1),
//!  sum_k w_do y_jk(t-1), sum_k w_dd y_kj(t-1),
//!  X_ijt)
//! ```
//!
//! with sums over `k not in {i, j}`. Stacking rows in `vecd` order gives the
//! `(n^2 - n) x K` design `Z_t`, `K = 7 + M`. Only period `t - 1` flows are
//! read, so building `Z_{T+1}` for forecasting needs no future responses.

use nalgebra::{DMatrix, DVector};

use crate::dyad::{dyad_count, dyads, eligible, CovariateTensor, DyadicPanel, WeightFamily, WeightScheme};
use crate::error::{Error, Result};

/// Labels of the seven network columns, in order.
pub const BASE_LABELS: [&str; 7] = [
    "intercept",
    "lag_self",
    "lag_inverse",
    "agg_oo",
    "agg_od",
    "agg_do",
    "agg_dd",
];

/// Number of columns that do not come from covariates.
pub const BASE_COLUMNS: usize = BASE_LABELS.len();

pub fn column_labels(covariates: &[String]) -> Vec<String> {
    BASE_LABELS
        .iter()
        .map(|s| s.to_string())
        .chain(covariates.iter().cloned())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub t: usize,
    pub rows: DMatrix<f64>,
    pub labels: Vec<String>,
}

impl DesignMatrix {
    pub fn k(&self) -> usize {
        self.rows.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.rows.nrows()
    }
}

fn check_inputs(
    panel: &DyadicPanel,
    weights: &WeightScheme,
    x: &CovariateTensor,
    t: usize,
) -> Result<()> {
    let n = panel.n();
    if weights.n() != n || x.n() != n {
        return Err(Error::Dimension(format!(
            "panel has n = {n}, weights n = {}, covariates n = {}",
            weights.n(),
            x.n()
        )));
    }
    if t == 0 || t > panel.periods() + 1 {
        return Err(Error::InvalidArgument(format!(
            "design period t = {t} outside 1..={}",
            panel.periods() + 1
        )));
    }
    if !x.has_period(t) {
        return Err(Error::InvalidArgument(format!(
            "covariates missing for period {t}"
        )));
    }
    Ok(())
}

fn fill_row(
    out: &mut [f64],
    prev: &crate::dyad::DyadMatrix,
    weights: &WeightScheme,
    xrow: &[f64],
    i: usize,
    j: usize,
) {
    let n = prev.n();
    out[0] = 1.0;
    out[1] = prev.at(i, j);
    out[2] = prev.at(j, i);
    let agg = |fam: WeightFamily, cell: &dyn Fn(usize) -> f64| -> f64 {
        eligible(n, i, j)
            .zip(weights.row(fam, i, j))
            .map(|(k, w)| w * cell(k))
            .sum()
    };
    out[3] = agg(WeightFamily::OriginOrigin, &|k| prev.at(i, k));
    out[4] = agg(WeightFamily::OriginDest, &|k| prev.at(k, i));
    out[5] = agg(WeightFamily::DestOrigin, &|k| prev.at(j, k));
    out[6] = agg(WeightFamily::DestDest, &|k| prev.at(k, j));
    out[BASE_COLUMNS..].copy_from_slice(xrow);
}

/// Regressor row `Z_ijt`, length `7 + M`.
pub fn build_row(
    panel: &DyadicPanel,
    weights: &WeightScheme,
    x: &CovariateTensor,
    i: usize,
    j: usize,
    t: usize,
) -> Result<DVector<f64>> {
    if i == j {
        return Err(Error::DiagonalAccess(i));
    }
    let n = panel.n();
    if i >= n || j >= n {
        return Err(Error::InvalidArgument(format!("pair ({i}, {j}) with n = {n}")));
    }
    check_inputs(panel, weights, x, t)?;
    let prev = panel.flow(t - 1)?;
    let mut row = vec![0.0; BASE_COLUMNS + x.m()];
    fill_row(&mut row, prev, weights, x.get(i, j, t)?, i, j);
    Ok(DVector::from_vec(row))
}

/// Stacked design `Z_t`; row `p` belongs to the pair at `vecd` position `p`.
pub fn build_design(
    panel: &DyadicPanel,
    weights: &WeightScheme,
    x: &CovariateTensor,
    t: usize,
) -> Result<DesignMatrix> {
    check_inputs(panel, weights, x, t)?;
    let n = panel.n();
    let k = BASE_COLUMNS + x.m();
    let prev = panel.flow(t - 1)?;
    let mut rows = DMatrix::zeros(dyad_count(n), k);
    let mut buf = vec![0.0; k];
    for (pos, (i, j)) in dyads(n).enumerate() {
        fill_row(&mut buf, prev, weights, x.row(t, pos)?, i, j);
        for (c, v) in buf.iter().enumerate() {
            rows[(pos, c)] = *v;
        }
    }
    Ok(DesignMatrix {
        t,
        rows,
        labels: column_labels(x.names()),
    })
}

/// Designs and responses for periods `first..=last`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub designs: Vec<DesignMatrix>,
    pub responses: Vec<DVector<f64>>,
}

impl RegressionData {
    pub fn from_panel(
        panel: &DyadicPanel,
        weights: &WeightScheme,
        x: &CovariateTensor,
        last: usize,
    ) -> Result<Self> {
        if last == 0 || last > panel.periods() {
            return Err(Error::InvalidArgument(format!(
                "training periods 1..={last} not inside panel with T = {}",
                panel.periods()
            )));
        }
        let mut designs = Vec::with_capacity(last);
        let mut responses = Vec::with_capacity(last);
        for t in 1..=last {
            designs.push(build_design(panel, weights, x, t)?);
            responses.push(panel.response(t)?);
        }
        Ok(Self { designs, responses })
    }

    pub fn periods(&self) -> usize {
        self.designs.len()
    }

    pub fn labels(&self) -> &[String] {
        self.designs.first().map_or(&[], |d| &d.labels)
    }

    /// Restrict every design to the given columns.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        let designs = self
            .designs
            .iter()
            .map(|d| select(d, columns))
            .collect::<Result<_>>()?;
        Ok(Self {
            designs,
            responses: self.responses.clone(),
        })
    }
}

fn select(z: &DesignMatrix, columns: &[usize]) -> Result<DesignMatrix> {
    if let Some(&bad) = columns.iter().find(|&&c| c >= z.k()) {
        return Err(Error::InvalidArgument(format!(
            "column {bad} outside design with K = {}",
            z.k()
        )));
    }
    Ok(DesignMatrix {
        t: z.t,
        rows: z.rows.select_columns(columns),
        labels: columns.iter().map(|&c| z.labels[c].clone()).collect(),
    })
}

/// Partition of the `K` design columns into constant- and
/// varying-coefficient blocks, each in ascending column order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSplit {
    k: usize,
    constant: Vec<usize>,
    varying: Vec<usize>,
}

impl ColumnSplit {
    pub fn new(k: usize, varying: &[usize]) -> Result<Self> {
        if varying.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one varying column is required".into(),
            ));
        }
        let mut v = varying.to_vec();
        v.sort_unstable();
        if let Some(&bad) = v.iter().find(|&&c| c >= k) {
            return Err(Error::InvalidArgument(format!(
                "varying column {bad} outside design with K = {k}"
            )));
        }
        if v.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate varying column".into()));
        }
        let constant = (0..k).filter(|c| v.binary_search(c).is_err()).collect();
        Ok(Self {
            k,
            constant,
            varying: v,
        })
    }

    /// Resolve varying columns by label.
    pub fn from_labels(labels: &[String], varying: &[String]) -> Result<Self> {
        let idx = varying
            .iter()
            .map(|name| {
                labels.iter().position(|l| l == name).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "unknown varying column '{name}' (have: {})",
                        labels.join(", ")
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(labels.len(), &idx)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of varying coefficients.
    pub fn m(&self) -> usize {
        self.varying.len()
    }

    pub fn constant(&self) -> &[usize] {
        &self.constant
    }

    pub fn varying(&self) -> &[usize] {
        &self.varying
    }

    pub fn apply(&self, z: &DesignMatrix) -> Result<DesignSplit> {
        if z.k() != self.k {
            return Err(Error::Dimension(format!(
                "split built for K = {}, design has K = {}",
                self.k,
                z.k()
            )));
        }
        Ok(DesignSplit {
            t: z.t,
            z1: z.rows.select_columns(&self.constant),
            z2: z.rows.select_columns(&self.varying),
            split: self.clone(),
        })
    }

    /// Split a full coefficient vector into (constant, varying) blocks.
    pub fn split_vector(&self, beta: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (beta.select_rows(&self.constant), beta.select_rows(&self.varying))
    }

    /// Inverse of [`ColumnSplit::split_vector`].
    pub fn join_vector(&self, beta1: &DVector<f64>, beta2: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.k);
        for (v, &c) in beta1.iter().zip(&self.constant) {
            out[c] = *v;
        }
        for (v, &c) in beta2.iter().zip(&self.varying) {
            out[c] = *v;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSplit {
    pub t: usize,
    /// Constant-coefficient columns.
    pub z1: DMatrix<f64>,
    /// Varying-coefficient columns.
    pub z2: DMatrix<f64>,
    pub split: ColumnSplit,
}

impl DesignSplit {
    pub fn m(&self) -> usize {
        self.split.m()
    }

    /// Put the columns back in their original positions.
    pub fn reassemble(&self) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.z1.nrows().max(self.z2.nrows()), self.split.k);
        for (src, &c) in self.split.constant.iter().enumerate() {
            z.set_column(c, &self.z1.column(src));
        }
        for (src, &c) in self.split.varying.iter().enumerate() {
            z.set_column(c, &self.z2.column(src));
        }
        z
    }
}

pub fn split_design(z: &DesignMatrix, varying: &[usize]) -> Result<DesignSplit> {
    ColumnSplit::new(z.k(), varying)?.apply(z)
}
