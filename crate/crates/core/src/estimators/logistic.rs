//! Logistic propensity model fitted by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::support::DiscardReport;

const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;
/// Deviance below which the classes are treated as perfectly separated.
const SEPARATION_DEVIANCE: f64 = 1e-6;

pub fn inv_logit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    /// Intercept first, then one coefficient per covariate.
    pub coef: Vec<f64>,
    /// Linear predictor for every unit of the dataset the model was applied to.
    pub linear_scores: Vec<f64>,
    pub pscores: Vec<f64>,
    /// Inverse observed information at the estimate.
    pub cov: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl PropensityModel {
    pub fn se(&self, j: usize) -> f64 {
        self.cov[(j, j)].max(0.0).sqrt()
    }
}

fn with_intercept(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols() + 1, |r, c| if c == 0 { 1.0 } else { x[(rows[r], c - 1)] })
}

/// Maximum-likelihood logit of `z` on `[1, x]` over `rows`. Aliased columns
/// keep a zero coefficient (minimum-norm Newton steps).
fn irls(x: &DMatrix<f64>, z: &[u8], rows: &[usize]) -> Result<(DVector<f64>, DMatrix<f64>, bool, usize)> {
    let xd = with_intercept(x, rows);
    let k = xd.ncols();
    let zr: DVector<f64> = DVector::from_iterator(rows.len(), rows.iter().map(|&i| z[i] as f64));
    let mut beta = DVector::zeros(k);
    for iter in 0..=MAX_ITER {
        let eta = &xd * &beta;
        let p = eta.map(inv_logit);
        let deviance: f64 = -2.0
            * zr.iter()
                .zip(eta.iter())
                .map(|(&zi, &e)| if zi == 1.0 { -softplus(-e) } else { -softplus(e) })
                .sum::<f64>();
        if deviance < SEPARATION_DEVIANCE {
            return Err(Error::Separation);
        }
        let w = p.map(|v| v * (1.0 - v));
        let xw = DMatrix::from_fn(xd.nrows(), k, |r, c| xd[(r, c)] * w[r]);
        let hess = xd.transpose() * xw;
        if hess.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular);
        }
        let svd = hess.svd(true, true);
        let eps = 1e-12 * svd.singular_values.max();
        let grad = xd.transpose() * (&zr - &p);
        let converged = grad.amax() < GRAD_TOL;
        if converged || iter == MAX_ITER {
            if !converged && eta.amax() > 30.0 {
                return Err(Error::Separation);
            }
            let cov = svd.pseudo_inverse(eps).map_err(|_| Error::Singular)?;
            return Ok((beta, cov, converged, iter));
        }
        let step = svd.solve(&grad, eps).map_err(|_| Error::Singular)?;
        beta += step;
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Separation);
        }
    }
    unreachable!()
}

fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

fn model_for_all(x: &DMatrix<f64>, beta: DVector<f64>, cov: DMatrix<f64>, converged: bool, iterations: usize) -> PropensityModel {
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let linear_scores: Vec<f64> = (with_intercept(x, &rows) * &beta).iter().copied().collect();
    let pscores = linear_scores.iter().map(|&e| inv_logit(e)).collect();
    PropensityModel { coef: beta.iter().copied().collect(), linear_scores, pscores, cov, converged, iterations }
}

/// Fits `P(z = 1 | x)` on every unit.
pub fn fit_logistic(x: &DMatrix<f64>, z: &[u8]) -> Result<PropensityModel> {
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let (beta, cov, converged, it) = irls(x, z, &rows)?;
    Ok(model_for_all(x, beta, cov, converged, it))
}

/// Refits the propensity model on the units a discard rule retained. Scores
/// are returned for every unit of `d`; discarded units are simply not used
/// downstream.
pub fn reestimate_propensity_after_discard(d: &Dataset, report: &DiscardReport) -> Result<PropensityModel> {
    let rows: Vec<usize> = (0..d.n()).filter(|&i| report.is_retained(i)).collect();
    let kept_treated = rows.iter().filter(|&&i| d.z()[i] == 1).count();
    if kept_treated == 0 || kept_treated == rows.len() {
        return Err(Error::EmptyGroup);
    }
    let (beta, cov, converged, it) = irls(d.x(), d.z(), &rows)?;
    Ok(model_for_all(d.x(), beta, cov, converged, it))
}
