//! Storage for directed dyadic panels.
//!
//! A dyadic panel holds one `n x n` flow matrix per period with the diagonal
//! undefined: a node never has a flow to itself. Matrices are flattened with
//! [`vecd`], which walks the off-diagonal entries column by column:
//! `(a21, a31, ..., an1, a12, a32, ..., an2, ..., a(n-1)n)`.
//!
//! All indices in this module are zero-based.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the row sums of a [`WeightScheme`].
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Number of off-diagonal cells of an `n x n` matrix.
pub fn dyad_count(n: usize) -> usize {
    n * n.saturating_sub(1)
}

/// Position of the ordered pair `(i, j)` in `vecd` order.
///
/// Caller guarantees `i != j` and both `< n`.
#[inline]
pub fn vecd_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i != j && i < n && j < n);
    j * (n - 1) + i - usize::from(i > j)
}

/// Inverse of [`vecd_index`].
#[inline]
pub fn vecd_pair(n: usize, pos: usize) -> (usize, usize) {
    let j = pos / (n - 1);
    let r = pos % (n - 1);
    let i = if r < j { r } else { r + 1 };
    (i, j)
}

/// Iterate ordered pairs `(i, j)` in `vecd` order.
pub fn dyads(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |j| (0..n).filter(move |&i| i != j).map(move |i| (i, j)))
}

/// Vectorise the off-diagonal entries of a square matrix, column-major.
/// Diagonal entries are never read.
pub fn vecd(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!(
            "vecd needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "vecd needs n >= 2, got n = {n}"
        )));
    }
    Ok(DVector::from_iterator(
        dyad_count(n),
        dyads(n).map(|(i, j)| a[(i, j)]),
    ))
}

/// Rebuild a masked matrix from its `vecd` form.
pub fn unvecd(v: &[f64], n: usize) -> Result<DyadMatrix> {
    if n < 2 || v.len() != dyad_count(n) {
        return Err(Error::Dimension(format!(
            "unvecd: vector of length {} does not match n = {} (expected {})",
            v.len(),
            n,
            dyad_count(n)
        )));
    }
    let mut m = DMatrix::from_element(n, n, f64::NAN);
    for (pos, (i, j)) in dyads(n).enumerate() {
        m[(i, j)] = v[pos];
    }
    Ok(DyadMatrix { data: m })
}

/// Square matrix whose diagonal is masked.
///
/// The diagonal is filled with NaN and every accessor rejects `(i, i)`.
#[derive(Debug, Clone)]
pub struct DyadMatrix {
    data: DMatrix<f64>,
}

/// Equality of the off-diagonal entries; the masked diagonal is ignored.
impl PartialEq for DyadMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n() == other.n() && dyads(self.n()).all(|(i, j)| self.at(i, j) == other.at(i, j))
    }
}

impl DyadMatrix {
    /// Take the off-diagonal part of `m`. The diagonal of `m` is ignored.
    pub fn from_matrix(mut m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n || n < 2 {
            return Err(Error::Dimension(format!(
                "dyad matrix must be square with n >= 2, got {}x{}",
                n,
                m.ncols()
            )));
        }
        for (i, j) in dyads(n) {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite(format!("cell ({i}, {j})")));
            }
        }
        for i in 0..n {
            m[(i, i)] = f64::NAN;
        }
        Ok(Self { data: m })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let m = DMatrix::from_fn(n, n, |i, j| if i == j { f64::NAN } else { f(i, j) });
        Self::from_matrix(m)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.n();
        if i == j {
            return Err(Error::DiagonalAccess(i));
        }
        if i >= n || j >= n {
            return Err(Error::InvalidArgument(format!(
                "cell ({i}, {j}) outside {n}x{n} matrix"
            )));
        }
        Ok(self.data[(i, j)])
    }

    /// Unchecked off-diagonal read for hot loops; debug builds still assert.
    #[inline]
    pub(crate) fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i != j);
        self.data[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if i == j {
            return Err(Error::DiagonalAccess(i));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("cell ({i}, {j})")));
        }
        self.data[(i, j)] = value;
        Ok(())
    }

    pub fn vecd(&self) -> DVector<f64> {
        let n = self.n();
        DVector::from_iterator(dyad_count(n), dyads(n).map(|(i, j)| self.data[(i, j)]))
    }

    /// Full matrix view, diagonal NaN.
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        Self::from_fn(self.n(), |i, j| f(self.data[(i, j)]))
    }
}

/// Directed flows observed over periods `t = 0..=T`; period 0 is the
/// initial observation that only ever enters as a lag.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicPanel {
    nodes: Vec<String>,
    time_labels: Vec<i64>,
    flows: Vec<DyadMatrix>,
    transformed: bool,
}

impl DyadicPanel {
    pub fn new(
        nodes: Vec<String>,
        time_labels: Vec<i64>,
        flows: Vec<DyadMatrix>,
        transformed: bool,
    ) -> Result<Self> {
        let n = nodes.len();
        if n < 3 {
            return Err(Error::InvalidArgument(format!(
                "a dyadic panel needs at least 3 nodes, got {n}"
            )));
        }
        if flows.is_empty() || flows.len() != time_labels.len() {
            return Err(Error::Dimension(format!(
                "{} flow matrices for {} time labels",
                flows.len(),
                time_labels.len()
            )));
        }
        if let Some(bad) = flows.iter().position(|f| f.n() != n) {
            return Err(Error::Dimension(format!(
                "flow matrix {bad} is {0}x{0}, expected {n}x{n}",
                flows[bad].n()
            )));
        }
        Ok(Self {
            nodes,
            time_labels,
            flows,
            transformed,
        })
    }

    /// Panel with generated node labels `"1".."n"` and time labels `0..=T`.
    pub fn unlabeled(flows: Vec<DyadMatrix>) -> Result<Self> {
        let n = flows.first().map_or(0, DyadMatrix::n);
        let nodes = (1..=n).map(|i| i.to_string()).collect();
        let labels = (0..flows.len() as i64).collect();
        Self::new(nodes, labels, flows, false)
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    /// Number of transitions `T`; the panel holds `T + 1` matrices.
    pub fn periods(&self) -> usize {
        self.flows.len() - 1
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn time_labels(&self) -> &[i64] {
        &self.time_labels
    }

    pub fn is_transformed(&self) -> bool {
        self.transformed
    }

    pub fn flow(&self, t: usize) -> Result<&DyadMatrix> {
        self.flows.get(t).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "period {t} outside panel 0..={}",
                self.periods()
            ))
        })
    }

    pub fn y(&self, i: usize, j: usize, t: usize) -> Result<f64> {
        self.flow(t)?.get(i, j)
    }

    /// `Y_t = vecd(flow matrix at t)`.
    pub fn response(&self, t: usize) -> Result<DVector<f64>> {
        Ok(self.flow(t)?.vecd())
    }

    /// Keep periods `0..=last`.
    pub fn truncated(&self, last: usize) -> Result<Self> {
        if last >= self.flows.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate panel with T = {} at period {last}",
                self.periods()
            )));
        }
        Ok(Self {
            nodes: self.nodes.clone(),
            time_labels: self.time_labels[..=last].to_vec(),
            flows: self.flows[..=last].to_vec(),
            transformed: self.transformed,
        })
    }

    /// Natural log of every flow. Non-positive flows are rejected.
    pub fn log_transformed(&self) -> Result<Self> {
        if self.transformed {
            return Err(Error::InvalidArgument("panel is already log-transformed".into()));
        }
        let n = self.n();
        let mut flows = Vec::with_capacity(self.flows.len());
        for (t, f) in self.flows.iter().enumerate() {
            for (i, j) in dyads(n) {
                let v = f.at(i, j);
                if v <= 0.0 {
                    return Err(Error::NonPositiveLog {
                        location: format!(
                            "flow ({}, {}, {})",
                            self.nodes[i], self.nodes[j], self.time_labels[t]
                        ),
                        value: v,
                    });
                }
            }
            flows.push(f.map(f64::ln)?);
        }
        Ok(Self {
            nodes: self.nodes.clone(),
            time_labels: self.time_labels.clone(),
            flows,
            transformed: true,
        })
    }
}

/// Covariates `X_ijt` for periods `t = 1..=periods`, stored per period as a
/// row-major `(n^2 - n) x M` block in `vecd` row order.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTensor {
    n: usize,
    names: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl CovariateTensor {
    /// `values[t - 1]` holds period `t`, rows in `vecd` order.
    pub fn new(n: usize, names: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let rows = dyad_count(n);
        let m = names.len();
        for (idx, block) in values.iter().enumerate() {
            if block.len() != rows * m {
                return Err(Error::Dimension(format!(
                    "covariate block for period {} has {} values, expected {}",
                    idx + 1,
                    block.len(),
                    rows * m
                )));
            }
            if let Some(p) = block.iter().position(|v| !v.is_finite()) {
                let (i, j) = vecd_pair(n, p / m);
                return Err(Error::NonFinite(format!(
                    "covariate {} at ({i}, {j}), period {}",
                    names[p % m],
                    idx + 1
                )));
            }
        }
        Ok(Self { n, names, values })
    }

    /// No covariates (`M = 0`), available for every period.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_fn(
        n: usize,
        names: Vec<String>,
        periods: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let m = names.len();
        let values = (1..=periods)
            .map(|t| {
                dyads(n)
                    .flat_map(|(i, j)| (0..m).map(move |c| (i, j, c)))
                    .map(|(i, j, c)| f(i, j, t, c))
                    .collect()
            })
            .collect();
        Self::new(n, names, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Whether period `t` is covered. With `M = 0` every period is.
    pub fn has_period(&self, t: usize) -> bool {
        self.m() == 0 || (t >= 1 && t <= self.values.len())
    }

    /// Last covered period, `None` when `M = 0` (unbounded).
    pub fn last_period(&self) -> Option<usize> {
        (self.m() > 0).then_some(self.values.len())
    }

    /// Covariate vector of the pair at `vecd` position `pos` for period `t`.
    pub fn row(&self, t: usize, pos: usize) -> Result<&[f64]> {
        let m = self.m();
        if m == 0 {
            return Ok(&[]);
        }
        if !self.has_period(t) {
            return Err(Error::InvalidArgument(format!(
                "covariates missing for period {t} (available 1..={})",
                self.values.len()
            )));
        }
        Ok(&self.values[t - 1][pos * m..(pos + 1) * m])
    }

    pub fn get(&self, i: usize, j: usize, t: usize) -> Result<&[f64]> {
        if i == j {
            return Err(Error::DiagonalAccess(i));
        }
        self.row(t, vecd_index(self.n, i, j))
    }

    /// Keep periods `1..=last`.
    pub fn truncated(&self, last: usize) -> Self {
        let keep = last.min(self.values.len());
        Self {
            n: self.n,
            names: self.names.clone(),
            values: self.values[..keep].to_vec(),
        }
    }
}

/// The four neighbouring-flow families sharing a node with `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WeightFamily {
    /// `y_ik`
    #[serde(rename = "oo")]
    OriginOrigin,
    /// `y_ki`
    #[serde(rename = "od")]
    OriginDest,
    /// `y_jk`
    #[serde(rename = "do")]
    DestOrigin,
    /// `y_kj`
    #[serde(rename = "dd")]
    DestDest,
}

impl WeightFamily {
    pub const ALL: [WeightFamily; 4] = [
        WeightFamily::OriginOrigin,
        WeightFamily::OriginDest,
        WeightFamily::DestOrigin,
        WeightFamily::DestDest,
    ];

    pub fn label(self) -> &'static str {
        match self {
            WeightFamily::OriginOrigin => "oo",
            WeightFamily::OriginDest => "od",
            WeightFamily::DestOrigin => "do",
            WeightFamily::DestDest => "dd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.label() == s)
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for WeightFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Aggregation weights `w_ijk` over `k not in {i, j}` for each family.
///
/// Stored densely: for each pair in `vecd` order, `n - 2` weights in
/// ascending `k` with `i` and `j` skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightScheme {
    n: usize,
    families: [Vec<f64>; 4],
}

impl WeightScheme {
    pub fn from_fn(
        n: usize,
        mut f: impl FnMut(WeightFamily, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidArgument(format!(
                "weights need n >= 3, got n = {n}"
            )));
        }
        let families = WeightFamily::ALL.map(|fam| {
            dyads(n)
                .flat_map(|(i, j)| eligible(n, i, j).map(move |k| (i, j, k)))
                .map(|(i, j, k)| f(fam, i, j, k))
                .collect()
        });
        Ok(Self { n, families })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        let slot = k - usize::from(k > i) - usize::from(k > j);
        vecd_index(self.n, i, j) * (self.n - 2) + slot
    }

    /// `w_ijk` for the given family. `k` must differ from both `i` and `j`.
    pub fn weight(&self, family: WeightFamily, i: usize, j: usize, k: usize) -> Result<f64> {
        let n = self.n;
        if i == j {
            return Err(Error::DiagonalAccess(i));
        }
        if k == i || k == j || i >= n || j >= n || k >= n {
            return Err(Error::InvalidArgument(format!(
                "no weight for ({i}, {j}) at k = {k}"
            )));
        }
        Ok(self.families[family.slot()][self.offset(i, j, k)])
    }

    /// Weights for pair `(i, j)`, aligned with [`eligible`]`(n, i, j)`.
    pub(crate) fn row(&self, family: WeightFamily, i: usize, j: usize) -> &[f64] {
        let start = vecd_index(self.n, i, j) * (self.n - 2);
        &self.families[family.slot()][start..start + self.n - 2]
    }
}

/// Nodes `k` in ascending order with `k != i` and `k != j`.
pub fn eligible(n: usize, i: usize, j: usize) -> impl Iterator<Item = usize> {
    (0..n).filter(move |&k| k != i && k != j)
}

/// Every weight equal to `1 / (n - 2)`.
pub fn equal_weights(n: usize) -> Result<WeightScheme> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "equal weights need n >= 3, got n = {n}"
        )));
    }
    let w = 1.0 / (n - 2) as f64;
    WeightScheme::from_fn(n, |_, _, _, _| w)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    RowSum(f64),
    Negative { k: usize, weight: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightViolation {
    pub family: WeightFamily,
    pub origin: usize,
    pub dest: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for WeightViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ViolationKind::RowSum(s) => write!(
                f,
                "family {} pair ({}, {}): weights sum to {s:.12}",
                self.family, self.origin, self.dest
            ),
            ViolationKind::Negative { k, weight } => write!(
                f,
                "family {} pair ({}, {}): negative weight {weight} at k = {k}",
                self.family, self.origin, self.dest
            ),
        }
    }
}

/// Check non-negativity and unit row sums. Returns every violation found.
pub fn validate_weights(scheme: &WeightScheme) -> Vec<WeightViolation> {
    let n = scheme.n;
    let mut out = Vec::new();
    for family in WeightFamily::ALL {
        for (i, j) in dyads(n) {
            let row = scheme.row(family, i, j);
            for (k, &w) in eligible(n, i, j).zip(row) {
                if !(w >= 0.0) {
                    out.push(WeightViolation {
                        family,
                        origin: i,
                        dest: j,
                        kind: ViolationKind::Negative { k, weight: w },
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= WEIGHT_SUM_TOL) {
                out.push(WeightViolation {
                    family,
                    origin: i,
                    dest: j,
                    kind: ViolationKind::RowSum(sum),
                });
            }
        }
    }
    out
}
