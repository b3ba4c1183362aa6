//! Mask-weighted least squares through a Householder QR of the observed rows.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A factored design restricted to the observed grid positions.
///
/// Columns are given on the full grid; only rows with `mask[i]` enter the
/// factorization. Coefficients for any response on the same grid are then
/// one triangular solve away, which is what the bootstrap loops rely on.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    rows: Vec<usize>,
    columns: Vec<Vec<f64>>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    /// Design times coefficients at every grid position, observed or not.
    pub fitted: Vec<f64>,
    /// `y - fitted` at observed positions, zero elsewhere.
    pub residuals: Vec<f64>,
    pub ssr: f64,
}

impl LeastSquares {
    pub fn new(columns: Vec<Vec<f64>>, mask: &[bool]) -> Result<Self> {
        let p = columns.len();
        if p == 0 {
            return Err(Error::invalid("design has no columns"));
        }
        for c in &columns {
            if c.len() != mask.len() {
                return Err(Error::LengthMismatch {
                    expected: mask.len(),
                    actual: c.len(),
                });
            }
        }
        let rows: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let n = rows.len();
        if n < p {
            return Err(Error::Singular(format!("{n} observed points for {p} regressors")));
        }
        let x = DMatrix::from_fn(n, p, |r, c| columns[c][rows[r]]);
        let max_norm = (0..p).map(|c| x.column(c).norm()).fold(0.0, f64::max);
        let qr = x.qr();
        let r = qr.r();
        let tol = f64::EPSILON * max_norm * n.max(p) as f64;
        for k in 0..p {
            if r[(k, k)].abs() <= tol {
                return Err(Error::Singular(format!(
                    "design column {k} is linearly dependent on the others over the observed points"
                )));
            }
        }
        let q = qr.q();
        Ok(Self { rows, columns, q, r })
    }

    pub fn n_obs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_params(&self) -> usize {
        self.columns.len()
    }

    /// Observed grid positions, in order (rows of [`Self::q`]).
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Thin orthonormal factor over the observed rows.
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn coefficients(&self, y: &[f64]) -> Vec<f64> {
        let yo = DVector::from_iterator(self.rows.len(), self.rows.iter().map(|&i| y[i]));
        let qty = self.q.tr_mul(&yo);
        let beta = self
            .r
            .solve_upper_triangular(&qty)
            .expect("diagonal checked at construction");
        beta.iter().copied().collect()
    }

    pub fn predict(&self, coefficients: &[f64]) -> Vec<f64> {
        let len = self.columns[0].len();
        let mut out = vec![0.0; len];
        for (c, b) in self.columns.iter().zip(coefficients) {
            for (o, x) in out.iter_mut().zip(c) {
                *o += b * x;
            }
        }
        out
    }

    pub fn fit(&self, y: &[f64]) -> OlsFit {
        let coefficients = self.coefficients(y);
        let fitted = self.predict(&coefficients);
        let mut residuals = vec![0.0; fitted.len()];
        let mut ssr = 0.0;
        for &i in &self.rows {
            let e = y[i] - fitted[i];
            residuals[i] = e;
            ssr += e * e;
        }
        OlsFit {
            coefficients,
            fitted,
            residuals,
            ssr,
        }
    }
}
