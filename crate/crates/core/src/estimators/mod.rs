//! Treatment-effect estimators on the retained sample.
//!
//! Every estimator takes an optional [`DiscardReport`]; discarded focal units
//! are removed before anything else happens, so they take no part in
//! matching, weighting or regression.

pub mod logistic;

use rand::seq::SliceRandom;

use crate::bart::{individual_effect_draws, summarize, PosteriorSurface};
use crate::data::{Dataset, Group, Seed, Stream};
use crate::error::{Error, Result};
use crate::linalg::{design, wls};
use crate::support::DiscardReport;

pub use logistic::{fit_logistic, inv_logit, reestimate_propensity_after_discard, PropensityModel};

/// Largest inverse-probability weight accepted.
pub const MAX_WEIGHT: f64 = 1e6;
const Z_95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimand {
    /// Average effect over retained treated units.
    Treated,
    /// Average effect over retained control units.
    Controls,
    All,
}

impl Estimand {
    pub fn for_focal(a: Group) -> Self {
        match a {
            Group::Treated => Estimand::Treated,
            Group::Control => Estimand::Controls,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectEstimate {
    pub method: String,
    pub estimand: Estimand,
    pub point: f64,
    /// Posterior sd or robust standard error.
    pub uncertainty: f64,
    pub lo: f64,
    pub hi: f64,
    pub n_focal_retained: usize,
    pub n_discarded: usize,
    /// Notes such as a regression-adjustment fallback.
    pub flags: Vec<String>,
}

fn retained(report: Option<&DiscardReport>, n: usize) -> Vec<bool> {
    match report {
        Some(r) => {
            assert_eq!(r.discard.len(), n, "discard report does not match the data");
            r.discard.iter().map(|&d| !d).collect()
        }
        None => vec![true; n],
    }
}

fn n_discarded(report: Option<&DiscardReport>) -> usize {
    report.map_or(0, DiscardReport::n_discarded)
}

/// Posterior of the average effect over retained focal units.
pub fn bart_effect(ps: &PosteriorSurface, report: Option<&DiscardReport>, a: Group) -> Result<EffectEstimate> {
    let keep = retained(report, ps.n());
    let units: Vec<usize> = (0..ps.n()).filter(|&i| ps.z[i] == a.z() && keep[i]).collect();
    if units.is_empty() {
        return Err(if ps.z.iter().any(|&z| z == a.z()) { Error::AllFocalDiscarded } else { Error::EmptyFocalGroup });
    }
    let d = individual_effect_draws(ps);
    let per_draw: Vec<f64> = (0..d.nrows())
        .map(|r| units.iter().map(|&i| d[(r, i)]).sum::<f64>() / units.len() as f64)
        .collect();
    let s = summarize(&per_draw, 0.95)?;
    Ok(EffectEstimate {
        method: "BART".into(),
        estimand: Estimand::for_focal(a),
        point: s.mean,
        uncertainty: s.sd,
        lo: s.lo,
        hi: s.hi,
        n_focal_retained: units.len(),
        n_discarded: n_discarded(report),
        flags: Vec::new(),
    })
}

fn regression_estimate(method: &str, estimand: Estimand, point: f64, se: f64, n_focal: usize, n_disc: usize, flags: Vec<String>) -> EffectEstimate {
    EffectEstimate {
        method: method.into(),
        estimand,
        point,
        uncertainty: se,
        lo: point - Z_95 * se,
        hi: point + Z_95 * se,
        n_focal_retained: n_focal,
        n_discarded: n_disc,
        flags,
    }
}

/// Treatment coefficient and HC0 se from a weighted regression of `y` on
/// `[1, z, x]` over `rows`.
fn adjusted_effect(d: &Dataset, rows: &[usize], w: &[f64]) -> Result<(f64, f64)> {
    let zf: Vec<f64> = d.z().iter().map(|&v| v as f64).collect();
    let xd = design(d.x(), rows, &[&zf]);
    let y: Vec<f64> = rows.iter().map(|&i| d.y()[i]).collect();
    let fit = wls(&xd, &y, Some(w))?;
    Ok((fit.coef[1], fit.se(1)))
}

/// Weighted difference in means (treated minus control) with HC0 se.
fn weighted_difference(d: &Dataset, rows: &[usize], w: &[f64]) -> Result<(f64, f64)> {
    let zf: Vec<f64> = d.z().iter().map(|&v| v as f64).collect();
    let xd = nalgebra::DMatrix::from_fn(rows.len(), 2, |r, c| if c == 0 { 1.0 } else { zf[rows[r]] });
    let y: Vec<f64> = rows.iter().map(|&i| d.y()[i]).collect();
    let fit = wls(&xd, &y, Some(w))?;
    Ok((fit.coef[1], fit.se(1)))
}

/// Nearest-neighbour matches, with replacement, of every retained focal unit
/// on the linear propensity score. Returns the comparison unit matched to
/// each focal unit, in focal order.
pub fn nearest_neighbor_matches(linear_scores: &[f64], focal: &[usize], comparison: &[usize], seed: Seed) -> Vec<usize> {
    let mut order = comparison.to_vec();
    order.shuffle(&mut seed.rng(Stream::MatchTieBreak));
    focal
        .iter()
        .map(|&i| {
            let mut best = order[0];
            let mut best_dist = (linear_scores[i] - linear_scores[best]).abs();
            for &j in &order[1..] {
                let dist = (linear_scores[i] - linear_scores[j]).abs();
                if dist < best_dist {
                    best = j;
                    best_dist = dist;
                }
            }
            best
        })
        .collect()
}

/// One-to-one nearest-neighbour matching with replacement followed by a
/// weighted regression adjustment; comparison units are weighted by the
/// number of times they were used.
pub fn match_effect(d: &Dataset, pm: &PropensityModel, report: Option<&DiscardReport>, a: Group, seed: Seed) -> Result<EffectEstimate> {
    let keep = retained(report, d.n());
    let focal: Vec<usize> = (0..d.n()).filter(|&i| d.z()[i] == a.z() && keep[i]).collect();
    let comparison: Vec<usize> = (0..d.n()).filter(|&i| d.z()[i] != a.z() && keep[i]).collect();
    if comparison.is_empty() {
        return Err(Error::EmptyComparisonGroup);
    }
    if focal.is_empty() {
        return Err(Error::AllFocalDiscarded);
    }
    let matches = nearest_neighbor_matches(&pm.linear_scores, &focal, &comparison, seed);
    let mut weight = vec![0.0; d.n()];
    for &i in &focal {
        weight[i] = 1.0;
    }
    for &j in &matches {
        weight[j] += 1.0;
    }
    let rows: Vec<usize> = (0..d.n()).filter(|&i| weight[i] > 0.0).collect();
    let w: Vec<f64> = rows.iter().map(|&i| weight[i]).collect();
    let mut flags = Vec::new();
    let (point, se) = match adjusted_effect(d, &rows, &w) {
        Ok(v) => v,
        Err(Error::Singular) => {
            flags.push("unadjusted".to_owned());
            weighted_difference(d, &rows, &w)?
        }
        Err(e) => return Err(e),
    };
    Ok(regression_estimate("Match", Estimand::for_focal(a), point, se, focal.len(), n_discarded(report), flags))
}

/// Inverse-probability weights targeting the focal group: focal units get 1,
/// comparison units the odds of belonging to the focal group.
pub fn iptw_weight(pscore: f64, z: u8, a: Group) -> f64 {
    if z == a.z() {
        1.0
    } else if a == Group::Treated {
        pscore / (1.0 - pscore)
    } else {
        (1.0 - pscore) / pscore
    }
}

/// Weighted regression of `y` on `[1, z, x]` with inverse-probability weights.
pub fn iptw_effect(d: &Dataset, pm: &PropensityModel, report: Option<&DiscardReport>, a: Group) -> Result<EffectEstimate> {
    let keep = retained(report, d.n());
    let rows: Vec<usize> = (0..d.n()).filter(|&i| keep[i]).collect();
    let n_focal = rows.iter().filter(|&&i| d.z()[i] == a.z()).count();
    if n_focal == 0 {
        return Err(Error::AllFocalDiscarded);
    }
    if n_focal == rows.len() {
        return Err(Error::EmptyComparisonGroup);
    }
    let w: Vec<f64> = rows.iter().map(|&i| iptw_weight(pm.pscores[i], d.z()[i], a)).collect();
    if let Some(&bad) = w.iter().find(|&&v| !(v <= MAX_WEIGHT)) {
        return Err(Error::ExtremeWeight(bad));
    }
    let (point, se) = adjusted_effect(d, &rows, &w)?;
    Ok(regression_estimate("IPTW", Estimand::for_focal(a), point, se, n_focal, n_discarded(report), Vec::new()))
}

/// Ordinary least squares of `y` on `[1, z, x]` over retained units.
pub fn ols_effect(d: &Dataset, report: Option<&DiscardReport>) -> Result<EffectEstimate> {
    let keep = retained(report, d.n());
    let rows: Vec<usize> = (0..d.n()).filter(|&i| keep[i]).collect();
    let w = vec![1.0; rows.len()];
    let (point, se) = adjusted_effect(d, &rows, &w)?;
    let n_focal = report.map_or(d.n(), |r| rows.iter().filter(|&&i| d.z()[i] == r.focal.z()).count());
    Ok(regression_estimate("OLS", Estimand::All, point, se, n_focal, n_discarded(report), Vec::new()))
}
