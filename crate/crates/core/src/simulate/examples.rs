//! Small illustrative data-generating processes.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::GeneratedStudy;
use crate::data::{Dataset, Seed, Stream};
use crate::error::{Error, Result};
use crate::estimators::inv_logit;

/// Raw per-unit draws before any units are removed.
struct Draft {
    x: Vec<Vec<f64>>,
    z: Vec<u8>,
    mu0: Vec<f64>,
    mu1: Vec<f64>,
    y0: Vec<f64>,
    y1: Vec<f64>,
}

impl Draft {
    fn with_capacity(n: usize) -> Self {
        Draft {
            x: Vec::with_capacity(n),
            z: Vec::with_capacity(n),
            mu0: Vec::with_capacity(n),
            mu1: Vec::with_capacity(n),
            y0: Vec::with_capacity(n),
            y1: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, x: Vec<f64>, z: u8, mu: (f64, f64), y: (f64, f64)) {
        self.x.push(x);
        self.z.push(z);
        self.mu0.push(mu.0);
        self.mu1.push(mu.1);
        self.y0.push(y.0);
        self.y1.push(y.1);
    }

    /// Keeps the units for which `keep(x, z)` holds.
    fn finish(self, keep: impl Fn(&[f64], u8) -> bool, dgp: &str, seed: Seed) -> Result<GeneratedStudy> {
        let rows: Vec<usize> = (0..self.z.len()).filter(|&i| keep(&self.x[i], self.z[i])).collect();
        let p = self.x.first().map_or(0, Vec::len);
        if rows.len() < 2 {
            return Err(Error::DegenerateSample);
        }
        let x = DMatrix::from_fn(rows.len(), p, |r, c| self.x[rows[r]][c]);
        let z: Vec<u8> = rows.iter().map(|&i| self.z[i]).collect();
        let y: Vec<f64> = rows.iter().map(|&i| if self.z[i] == 1 { self.y1[i] } else { self.y0[i] }).collect();
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let dataset = Dataset::new(x, z, y, Dataset::default_names(p))?;
        if dataset.require_both_groups().is_err() {
            return Err(Error::DegenerateSample);
        }
        Ok(GeneratedStudy {
            mu0: pick(&self.mu0),
            mu1: pick(&self.mu1),
            y0: pick(&self.y0),
            y1: pick(&self.y1),
            dataset,
            dgp: dgp.to_owned(),
            seed,
        })
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Covariate ceiling of the one-predictor example.
pub const PRETEST_CEILING: f64 = 60.0;
/// Outcome ceiling of the one-predictor example.
pub const SCORE_CEILING: f64 = 120.0;

/// Noiseless control surface of the one-predictor example.
pub fn example_1d_mu0(x: f64) -> f64 {
    (72.0 + 3.0 * x.max(0.0).sqrt()).min(SCORE_CEILING)
}

/// Noiseless treated surface of the one-predictor example.
pub fn example_1d_mu1(x: f64) -> f64 {
    (90.0 + (0.06 * x).exp()).min(SCORE_CEILING)
}

/// One confounder (a pretest) with heterogeneous effects and poor overlap
/// above X = 40.
pub fn gen_example_1d(n: usize, seed: Seed) -> Result<GeneratedStudy> {
    gen_example_1d_with_noise(n, 1.0, seed)
}

pub fn gen_example_1d_with_noise(n: usize, noise_sd: f64, seed: Seed) -> Result<GeneratedStudy> {
    if n < 20 {
        return Err(Error::ConfigInvalid("the one-predictor example needs n >= 20".into()));
    }
    let mut rng = seed.rng(Stream::Dgp);
    let mut draft = Draft::with_capacity(n);
    for _ in 0..n {
        let z = u8::from(rng.random::<f64>() < 0.5);
        let centre = if z == 1 { 40.0 } else { 20.0 };
        let x = (centre + 10.0 * normal(&mut rng)).min(PRETEST_CEILING);
        let (e0, e1) = (normal(&mut rng), normal(&mut rng));
        let mu = (example_1d_mu0(x), example_1d_mu1(x));
        let y0 = (72.0 + 3.0 * x.max(0.0).sqrt() + noise_sd * e0).min(SCORE_CEILING);
        let y1 = (90.0 + (0.06 * x).exp() + noise_sd * e1).min(SCORE_CEILING);
        draft.push(vec![x], z, mu, (y0, y1));
    }
    draft.finish(|_, _| true, "example1d", seed)
}

/// Two independent predictors, no confounding: controls with `X1 > 0` are
/// removed and the outcome depends on `X2` only. `n` counts units before removal.
pub fn gen_example_2a(n: usize, seed: Seed) -> Result<GeneratedStudy> {
    let mut rng = seed.rng(Stream::Dgp);
    let mut draft = Draft::with_capacity(n);
    for _ in 0..n {
        let z = u8::from(rng.random::<f64>() < 0.5);
        let (x1, x2) = (normal(&mut rng), normal(&mut rng));
        let e = normal(&mut rng);
        let base = x2 + x2 * x2;
        draft.push(vec![x1, x2], z, (base, base + 1.0), (base + e, base + 1.0 + e));
    }
    draft.finish(|x, z| !(z == 0 && x[0] > 0.0), "example2a", seed)
}

/// Noiseless surface `E[Y | Z, X1, X2]` of the two-confounder example.
pub fn example_2b_surface(z: u8, x1: f64, x2: f64, phi: f64) -> f64 {
    z as f64 + 0.5 * x1 + 2.0 * x2 + phi * x1 * x2
}

/// Two confounders with a nonlinear assignment; controls in the quadrant
/// `X1 > 0, X2 > 0` are removed. Draws do not depend on `phi`, so the same
/// seed gives paired datasets across `phi`.
pub fn gen_example_2b(n: usize, phi: f64, seed: Seed) -> Result<GeneratedStudy> {
    let mut rng = seed.rng(Stream::Dgp);
    let mut draft = Draft::with_capacity(n);
    for _ in 0..n {
        let (x1, x2) = (normal(&mut rng), normal(&mut rng));
        let z = u8::from(rng.random::<f64>() < inv_logit(x1 + x2 - 0.5 * x1 * x2));
        let e = normal(&mut rng);
        let mu = (example_2b_surface(0, x1, x2, phi), example_2b_surface(1, x1, x2, phi));
        draft.push(vec![x1, x2], z, mu, (mu.0 + e, mu.1 + e));
    }
    draft.finish(|x, z| !(z == 0 && x[0] > 0.0 && x[1] > 0.0), "example2b", seed)
}

pub const PROFILING_N: usize = 600;
pub const PROFILING_P: usize = 40;

/// Noiseless surfaces of the profiling example, `x` indexed from `x[0] = X1`.
pub fn profiling_surfaces(x: &[f64]) -> (f64, f64) {
    let (x1, x2, x5, x6) = (x[0], x[1], x[4], x[5]);
    let shared = 0.5 * x1 + 2.0 * x2 + 0.5 * x5 + 2.0 * x6;
    let mu0 = shared + x5 * x6 + 0.5 * x5 * x5 + 1.5 * x6 * x6;
    let mu1 = shared + 0.2 * x5 * x6;
    (mu0, mu1)
}

/// Forty N(1, 1) predictors, random assignment, and controls removed from
/// two neighbourhoods of which only `X5 > 1, X6 > 1` matters for the outcome.
pub fn gen_profiling_example(seed: Seed) -> Result<GeneratedStudy> {
    let mut rng = seed.rng(Stream::Dgp);
    let mut draft = Draft::with_capacity(PROFILING_N);
    for _ in 0..PROFILING_N {
        let z = u8::from(rng.random::<f64>() < 0.5);
        let x: Vec<f64> = (0..PROFILING_P).map(|_| 1.0 + normal(&mut rng)).collect();
        let (e0, e1) = (normal(&mut rng), normal(&mut rng));
        let mu = profiling_surfaces(&x);
        draft.push(x, z, mu, (mu.0 + e0, mu.1 + e1));
    }
    let removed = |x: &[f64]| (x[2] > 1.0 && x[3] > 1.0) || (x[4] > 1.0 && x[5] > 1.0);
    draft.finish(|x, z| !(z == 0 && removed(x)), "profiling", seed)
}
