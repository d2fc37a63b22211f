//! Tikhonov-regularized least squares via accumulated normal equations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Running `XᵀDX` / `XᵀDy` sums, so large design matrices (reservoir
/// states) can be streamed in blocks and folds can be merged.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    /// `yᵀDy`, for residuals without revisiting the rows.
    yy: f64,
    rows: usize,
}

impl NormalEquations {
    pub fn new(dim: usize) -> Self {
        Self { gram: DMatrix::zeros(dim, dim), rhs: DVector::zeros(dim), yy: 0.0, rows: 0 }
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn add_row(&mut self, x: &[f64], y: f64, weight: f64) -> Result<()> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::Dimension { expected: d, got: x.len() });
        }
        if !(weight >= 0.0) {
            return Err(Error::InvalidData(format!("sample weight {weight} is negative")));
        }
        for j in 0..d {
            let wxj = weight * x[j];
            self.rhs[j] += wxj * y;
            for i in 0..d {
                self.gram[(i, j)] += wxj * x[i];
            }
        }
        self.yy += weight * y * y;
        self.rows += 1;
        Ok(())
    }

    /// Add all rows of `x` (N×d) with targets `y` and optional sample weights.
    pub fn add_rows(&mut self, x: &DMatrix<f64>, y: &[f64], weights: Option<&[f64]>) -> Result<()> {
        let d = self.dim();
        if x.ncols() != d {
            return Err(Error::Dimension { expected: d, got: x.ncols() });
        }
        if y.len() != x.nrows() {
            return Err(Error::Dimension { expected: x.nrows(), got: y.len() });
        }
        let weighted = match weights {
            Some(w) => {
                if w.len() != x.nrows() {
                    return Err(Error::Dimension { expected: x.nrows(), got: w.len() });
                }
                if let Some(bad) = w.iter().find(|v| !(**v >= 0.0)) {
                    return Err(Error::InvalidData(format!("sample weight {bad} is negative")));
                }
                let mut dx = x.clone();
                for (mut row, wk) in dx.row_iter_mut().zip(w) {
                    row *= *wk;
                }
                dx
            }
            None => x.clone(),
        };
        self.yy += match weights {
            Some(w) => y.iter().zip(w).map(|(v, s)| s * v * v).sum::<f64>(),
            None => y.iter().map(|v| v * v).sum::<f64>(),
        };
        let xt = weighted.transpose();
        self.gram += &xt * x;
        self.rhs += &xt * DVector::from_column_slice(y);
        self.rows += x.nrows();
        Ok(())
    }

    pub fn merge(&mut self, other: &NormalEquations) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: other.dim() });
        }
        self.gram += &other.gram;
        self.rhs += &other.rhs;
        self.yy += other.yy;
        self.rows += other.rows;
        Ok(())
    }

    /// Weighted residual sum of squares `Σ s_k (y_k − w·x_k)²` of the
    /// accumulated rows, clamped at zero against round-off.
    pub fn sse(&self, w: &DVector<f64>) -> Result<f64> {
        if w.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: w.len() });
        }
        let gw = &self.gram * w;
        Ok((self.yy - 2.0 * w.dot(&self.rhs) + w.dot(&gw)).max(0.0))
    }

    /// Solve `(XᵀDX + αI) w = XᵀDy`.
    pub fn solve(&self, alpha: f64) -> Result<DVector<f64>> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidSpec(format!("regularization factor must be >= 0, got {alpha}")));
        }
        if self.rows == 0 {
            return Err(Error::InvalidData("ridge regression over zero samples".into()));
        }
        let d = self.dim();
        let mut a = self.gram.clone();
        for i in 0..d {
            a[(i, i)] += alpha;
        }
        let scale = (0..d).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
        let singular = || {
            Error::Numeric(format!(
                "normal equations are singular (alpha = {alpha}); use a positive regularization factor"
            ))
        };
        let w = match a.clone().cholesky() {
            Some(chol) => {
                let l = chol.l_dirty();
                let min_pivot = (0..d).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
                if alpha == 0.0 && min_pivot <= scale * 1e-13 {
                    return Err(singular());
                }
                chol.solve(&self.rhs)
            }
            None => {
                if alpha == 0.0 {
                    return Err(singular());
                }
                a.lu().solve(&self.rhs).ok_or_else(singular)?
            }
        };
        if w.iter().any(|v| !v.is_finite()) {
            return Err(singular());
        }
        Ok(w)
    }
}

/// `argmin_w Σ s_k (y_k − w·x_k)² + α‖w‖²` with `s_k` from `weights` (or 1).
/// `x` must already contain any unit column.
pub fn ridge_solve(x: &DMatrix<f64>, y: &[f64], alpha: f64, weights: Option<&[f64]>) -> Result<DVector<f64>> {
    if x.nrows() == 0 {
        return Err(Error::InvalidData("ridge regression over zero samples".into()));
    }
    let mut ne = NormalEquations::new(x.ncols());
    ne.add_rows(x, y, weights)?;
    ne.solve(alpha)
}
