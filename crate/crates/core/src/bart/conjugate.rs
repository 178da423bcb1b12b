//! Conjugate pieces of the sum-of-trees posterior.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

/// Normal full conditional of a leaf value given `n` partial residuals
/// summing to `sum`, noise variance `sigma2` and prior variance `tau2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafPosterior {
    pub mean: f64,
    pub var: f64,
}

pub fn leaf_posterior(n: usize, sum: f64, sigma2: f64, tau2: f64) -> LeafPosterior {
    let precision = n as f64 / sigma2 + 1.0 / tau2;
    let var = 1.0 / precision;
    LeafPosterior { mean: var * sum / sigma2, var }
}

pub fn draw_leaf_mu<R: Rng + ?Sized>(rng: &mut R, n: usize, sum: f64, sigma2: f64, tau2: f64) -> f64 {
    let post = leaf_posterior(n, sum, sigma2, tau2);
    let z: f64 = StandardNormal.sample(rng);
    post.mean + post.var.sqrt() * z
}

/// Log marginal likelihood of a leaf with the leaf value integrated out,
/// dropping terms that cancel in tree-move ratios.
pub fn leaf_log_marginal(n: usize, sum: f64, sigma2: f64, tau2: f64) -> f64 {
    let denom = sigma2 + n as f64 * tau2;
    0.5 * (sigma2 / denom).ln() + tau2 * sum * sum / (2.0 * sigma2 * denom)
}

/// Scaled inverse-chi-squared full conditional of the noise variance:
/// `sigma^2 = (nu*lambda + ssr) / chi2(nu + n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaPosterior {
    pub dof: f64,
    pub scale_sum: f64,
}

impl SigmaPosterior {
    pub fn new(nu: f64, lambda: f64, n: usize, ssr: f64) -> Self {
        SigmaPosterior { dof: nu + n as f64, scale_sum: nu * lambda + ssr }
    }

    /// E[sigma^2]; finite when dof > 2.
    pub fn mean_variance(&self) -> f64 {
        self.scale_sum / (self.dof - 2.0)
    }

    pub fn draw_variance<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let chi = ChiSquared::new(self.dof).expect("positive degrees of freedom");
        self.scale_sum / chi.sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Seed, Stream};

    #[test]
    fn leaf_mean_hand_algebra() {
        // n = 3 residuals {0.3, 0.1, 0.2}, sigma^2 = 0.04, tau^2 = 0.01:
        // mean = ybar * n / (n + sigma^2/tau^2) = 0.2 * 3 / 7.
        let post = leaf_posterior(3, 0.6, 0.04, 0.01);
        assert!((post.mean - 0.2 * 3.0 / 7.0).abs() < 1e-15);
        assert!((post.var - 1.0 / (3.0 / 0.04 + 100.0)).abs() < 1e-15);
    }

    #[test]
    fn leaf_draw_moments() {
        let mut rng = Seed(1).rng(Stream::BartChain);
        let post = leaf_posterior(3, 0.6, 0.04, 0.01);
        let draws: Vec<f64> = (0..10_000).map(|_| draw_leaf_mu(&mut rng, 3, 0.6, 0.04, 0.01)).collect();
        let m = draws.iter().sum::<f64>() / 1e4;
        let v = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / 9999.0;
        assert!((m - post.mean).abs() / post.mean < 0.02);
        assert!((v - post.var).abs() / post.var < 0.05);
    }

    #[test]
    fn sigma_draw_mean_matches_closed_form() {
        // Zero residuals over 100 units: only the prior scale remains.
        let mut rng = Seed(2).rng(Stream::BartChain);
        let post = SigmaPosterior::new(3.0, 0.05, 100, 0.0);
        let m = (0..10_000).map(|_| post.draw_variance(&mut rng)).sum::<f64>() / 1e4;
        assert!((m - post.mean_variance()).abs() / post.mean_variance() < 0.02);
        assert!(m < 0.05);
    }

    #[test]
    fn marginal_prefers_matching_mean() {
        // Residuals concentrated away from zero favour a separate leaf.
        let split = leaf_log_marginal(10, 5.0, 0.1, 0.25) + leaf_log_marginal(10, -5.0, 0.1, 0.25);
        let joint = leaf_log_marginal(20, 0.0, 0.1, 0.25);
        assert!(split > joint);
    }
}
