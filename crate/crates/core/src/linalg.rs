//! Weighted least squares with HC0 sandwich covariance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot size below which a design is treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct WlsFit {
    pub coef: DVector<f64>,
    /// Heteroskedasticity-robust (HC0) covariance, weights treated as
    /// sampling weights.
    pub cov: DMatrix<f64>,
}

impl WlsFit {
    pub fn se(&self, j: usize) -> f64 {
        self.cov[(j, j)].max(0.0).sqrt()
    }
}

/// Solves `min sum w_i (y_i - x_i'b)^2` by QR of the weighted design.
pub fn wls(x: &DMatrix<f64>, y: &[f64], w: Option<&[f64]>) -> Result<WlsFit> {
    let (n, k) = x.shape();
    assert_eq!(y.len(), n);
    let weight = |i: usize| w.map_or(1.0, |w| w[i]);
    if n < k {
        return Err(Error::Singular);
    }
    let xw = DMatrix::from_fn(n, k, |i, j| weight(i).sqrt() * x[(i, j)]);
    let yw = DVector::from_fn(n, |i, _| weight(i).sqrt() * y[i]);
    let qr = xw.qr();
    let r = qr.r();
    let dmax = (0..k).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if !(dmax > 0.0) || (0..k).any(|j| r[(j, j)].abs() <= RANK_TOL * dmax) {
        return Err(Error::Singular);
    }
    let qty = qr.q().transpose() * yw;
    let coef = r.solve_upper_triangular(&qty).ok_or(Error::Singular)?;
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(Error::Singular)?;
    let bread = &rinv * rinv.transpose();

    let mut meat = DMatrix::zeros(k, k);
    for i in 0..n {
        let wi = weight(i);
        if wi == 0.0 {
            continue;
        }
        let xi = x.row(i);
        let e = y[i] - (xi * &coef)[0];
        let s = (wi * e) * (wi * e);
        for a in 0..k {
            let xa = xi[a] * s;
            for b in 0..k {
                meat[(a, b)] += xa * xi[b];
            }
        }
    }
    let cov = &bread * meat * &bread;
    Ok(WlsFit { coef, cov })
}

/// Design matrix `[1, extra..., x]`.
pub fn design(x: &DMatrix<f64>, rows: &[usize], leading: &[&[f64]]) -> DMatrix<f64> {
    let p = x.ncols();
    let k = 1 + leading.len() + p;
    DMatrix::from_fn(rows.len(), k, |r, c| {
        let i = rows[r];
        if c == 0 {
            1.0
        } else if c <= leading.len() {
            leading[c - 1][i]
        } else {
            x[(i, c - 1 - leading.len())]
        }
    })
}
