//! Symmetric positive definite solves with a conditioning check.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// Reciprocal condition estimates below this are treated as singular.
pub const RCOND_THRESHOLD: f64 = 1e-12;

enum Factor {
    Chol(Cholesky<f64, Dyn>),
    Svd(SVD<f64, Dyn, Dyn>),
}

/// Factorisation of a Jacobi-equilibrated SPD matrix `D^-1/2 A D^-1/2`.
///
/// Equilibration makes the condition estimate independent of column scale,
/// so a log-GDP column next to an intercept is not flagged spuriously.
pub struct SpdFactor {
    factor: Factor,
    scale: DVector<f64>,
    rcond: f64,
}

impl SpdFactor {
    pub fn new(a: &DMatrix<f64>, labels: &[String]) -> Result<Self> {
        let k = a.nrows();
        if a.ncols() != k {
            return Err(Error::Dimension(format!(
                "expected a square matrix, got {}x{}",
                k,
                a.ncols()
            )));
        }
        let name = |c: usize| labels.get(c).cloned().unwrap_or_else(|| format!("#{c}"));
        if k == 0 {
            return Ok(Self {
                factor: Factor::Chol(Cholesky::new(DMatrix::zeros(0, 0)).expect("empty")),
                scale: DVector::zeros(0),
                rcond: 1.0,
            });
        }
        let zero_cols: Vec<String> = (0..k)
            .filter(|&c| !(a[(c, c)] > 0.0) || !a[(c, c)].is_finite())
            .map(name)
            .collect();
        if !zero_cols.is_empty() {
            return Err(Error::RankDeficient {
                rcond: 0.0,
                columns: zero_cols,
            });
        }
        let scale = DVector::from_iterator(k, (0..k).map(|c| a[(c, c)].sqrt().recip()));
        let mut s = a.clone();
        for r in 0..k {
            for c in 0..k {
                s[(r, c)] *= scale[r] * scale[c];
            }
        }
        // exact symmetry for the eigen solver
        let s = (&s + s.transpose()) * 0.5;

        let eig = SymmetricEigen::new(s.clone());
        let (imin, lmin) = eig.eigenvalues.argmin();
        let lmax = eig.eigenvalues.max();
        let rcond = if lmax > 0.0 { (lmin / lmax).max(0.0) } else { 0.0 };
        if !(rcond >= RCOND_THRESHOLD) {
            let null = eig.eigenvectors.column(imin);
            let columns = (0..k).filter(|&c| null[c].abs() > 0.1).map(name).collect();
            return Err(Error::RankDeficient { rcond, columns });
        }

        let factor = match Cholesky::new(s.clone()) {
            Some(ch) => Factor::Chol(ch),
            None => Factor::Svd(SVD::new(s, true, true)),
        };
        Ok(Self {
            factor,
            scale,
            rcond,
        })
    }

    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let rhs = b.component_mul(&self.scale);
        let y = match &self.factor {
            Factor::Chol(ch) => ch.solve(&rhs),
            Factor::Svd(svd) => svd
                .solve(&rhs, f64::EPSILON)
                .expect("svd computed with both singular bases"),
        };
        y.component_mul(&self.scale)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let k = self.scale.len();
        let inner = match &self.factor {
            Factor::Chol(ch) => ch.inverse(),
            Factor::Svd(svd) => svd
                .clone()
                .pseudo_inverse(f64::EPSILON)
                .expect("svd computed with both singular bases"),
        };
        let mut out = inner;
        for r in 0..k {
            for c in 0..k {
                out[(r, c)] *= self.scale[r] * self.scale[c];
            }
        }
        (&out + out.transpose()) * 0.5
    }
}
