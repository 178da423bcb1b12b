//! Bayesian additive regression trees for causal effect estimation.
//!
//! The outcome is modelled as `y = f(z, x) + e` with `f` a sum of small
//! regression trees. The treatment indicator is one more split variable, so
//! a single fitted forest yields draws of both `f(0, x_i)` and `f(1, x_i)`
//! for every training unit.

pub mod conjugate;
pub mod sampler;
pub mod tree;

use nalgebra::DMatrix;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::{standardize_outcome, Dataset, Seed, Stream};
use crate::error::{Error, Result};
use crate::linalg;

pub use sampler::{Prior, Sampler};
pub use tree::{Tree, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BartConfig {
    pub num_trees: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub tree_prior_alpha: f64,
    pub tree_prior_beta: f64,
    pub leaf_k: f64,
    pub sigma_nu: f64,
    pub sigma_q: f64,
    /// Minimum number of training units in any leaf.
    pub min_leaf: usize,
}

impl Default for BartConfig {
    fn default() -> Self {
        BartConfig {
            num_trees: 100,
            iterations: 3500,
            burn_in: 500,
            tree_prior_alpha: 0.95,
            tree_prior_beta: 2.0,
            leaf_k: 2.0,
            sigma_nu: 3.0,
            sigma_q: 0.90,
            min_leaf: 5,
        }
    }
}

impl BartConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_owned()));
        if self.num_trees == 0 {
            return bad("num_trees must be positive");
        }
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return bad("need 0 <= burn_in < iterations");
        }
        if !(self.tree_prior_alpha > 0.0 && self.tree_prior_alpha < 1.0) {
            return bad("tree_prior_alpha must lie in (0, 1)");
        }
        if !(self.tree_prior_beta >= 0.0) {
            return bad("tree_prior_beta must be nonnegative");
        }
        if !(self.leaf_k > 0.0) || !(self.sigma_nu > 0.0) {
            return bad("leaf_k and sigma_nu must be positive");
        }
        if !(self.sigma_q > 0.0 && self.sigma_q < 1.0) {
            return bad("sigma_q must lie in (0, 1)");
        }
        if self.min_leaf == 0 {
            return bad("min_leaf must be positive");
        }
        Ok(())
    }

    pub fn kept_draws(&self) -> usize {
        self.iterations - self.burn_in
    }
}

/// Post-burn-in posterior draws on the original outcome scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSurface {
    /// R x n draws of f(0, x_i).
    pub f0_draws: DMatrix<f64>,
    /// R x n draws of f(1, x_i).
    pub f1_draws: DMatrix<f64>,
    /// Kept draws of the residual standard deviation.
    pub sigma_draws: Vec<f64>,
    /// Residual standard deviation at every iteration, burn-in included.
    pub sigma_trace: Vec<f64>,
    pub z: Vec<u8>,
    pub warnings: Vec<String>,
}

impl PosteriorSurface {
    pub fn num_draws(&self) -> usize {
        self.f0_draws.nrows()
    }

    pub fn n(&self) -> usize {
        self.f0_draws.ncols()
    }

    /// Draws of the arm `z` for every unit.
    pub fn arm(&self, z: u8) -> &DMatrix<f64> {
        if z == 1 {
            &self.f1_draws
        } else {
            &self.f0_draws
        }
    }

    /// Posterior mean of the observed-arm fit for each unit.
    pub fn fitted_observed(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.arm(self.z[i]).column(i).mean()).collect()
    }
}

/// Residual standard deviation of a least-squares fit of `y` on `[1, x, z]`,
/// falling back to the sample sd of `y` when the fit is unavailable.
fn sigma_hat(d: &Dataset) -> f64 {
    let n = d.n();
    let y = d.y();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    let k = d.p() + 2;
    if n <= k {
        return sd;
    }
    let zf: Vec<f64> = d.z().iter().map(|&v| v as f64).collect();
    let rows: Vec<usize> = (0..n).collect();
    let x = linalg::design(d.x(), &rows, &[&zf]);
    match linalg::wls(&x, y, None) {
        Ok(fit) => {
            let ssr: f64 = (0..n).map(|i| (y[i] - (x.row(i) * &fit.coef)[0]).powi(2)).sum();
            let s = (ssr / (n - k) as f64).sqrt();
            if s > 1e-8 {
                s
            } else {
                sd
            }
        }
        Err(_) => sd,
    }
}

/// Fits the forest and returns draws at every unit under both arms.
pub fn fit_bart(d: &Dataset, cfg: &BartConfig, seed: Seed) -> Result<PosteriorSurface> {
    cfg.validate()?;
    let (ds, transform) = standardize_outcome(d)?;
    let mut warnings = Vec::new();
    if cfg.num_trees > d.n() {
        warnings.push(format!("num_trees {} exceeds sample size {}", cfg.num_trees, d.n()));
    }

    let sigma0 = sigma_hat(&ds);
    let chi = ChiSquared::new(cfg.sigma_nu).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    let lambda = sigma0 * sigma0 * chi.inverse_cdf(1.0 - cfg.sigma_q) / cfg.sigma_nu;
    let prior = Prior {
        alpha: cfg.tree_prior_alpha,
        beta: cfg.tree_prior_beta,
        sigma_mu: 0.5 / (cfg.leaf_k * (cfg.num_trees as f64).sqrt()),
        nu: cfg.sigma_nu,
        lambda,
        min_leaf: cfg.min_leaf,
    };

    let cols: Vec<Vec<f64>> = (0..d.p()).map(|j| d.x().column(j).iter().copied().collect()).collect();
    let mut sampler = Sampler::new(cols, d.z(), ds.y().to_vec(), cfg.num_trees, prior, sigma0, seed.rng(Stream::BartChain));

    let n = d.n();
    let r = cfg.kept_draws();
    let mut f0 = DMatrix::zeros(r, n);
    let mut f1 = DMatrix::zeros(r, n);
    let mut sigma_draws = Vec::with_capacity(r);
    let mut sigma_trace = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        sampler.sweep();
        let sigma = sampler.sigma() * transform.scale;
        sigma_trace.push(sigma);
        if it < cfg.burn_in {
            continue;
        }
        let row = it - cfg.burn_in;
        let (obs, cf) = (sampler.fit(), sampler.counterfactual_fit());
        for i in 0..n {
            let (a, b) = if d.z()[i] == 1 { (cf[i], obs[i]) } else { (obs[i], cf[i]) };
            f0[(row, i)] = transform.inverse(a);
            f1[(row, i)] = transform.inverse(b);
        }
        sigma_draws.push(sigma);
    }
    Ok(PosteriorSurface { f0_draws: f0, f1_draws: f1, sigma_draws, sigma_trace, z: d.z().to_vec(), warnings })
}

/// `d[r, i] = f1[r, i] - f0[r, i]`.
pub fn individual_effect_draws(ps: &PosteriorSurface) -> DMatrix<f64> {
    &ps.f1_draws - &ps.f0_draws
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Linear-interpolation quantile of sorted data (`(R - 1) q` indexing).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, sample sd and equal-tailed interval of a set of draws.
pub fn summarize(draws: &[f64], level: f64) -> Result<Summary> {
    if draws.len() < 2 {
        return Err(Error::TooFewDraws);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::ConfigInvalid(format!("interval level {level} outside (0, 1)")));
    }
    let r = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / r;
    let sd = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    Ok(Summary { mean, sd, lo: quantile_sorted(&sorted, tail), hi: quantile_sorted(&sorted, 1.0 - tail) })
}

/// Column-wise summaries of an R x k draw matrix.
pub fn posterior_summary(draws: &DMatrix<f64>, level: f64) -> Result<Vec<Summary>> {
    draws.column_iter().map(|c| summarize(c.as_slice(), level)).collect()
}
