//! Counterfactual-uncertainty statistics and the discard rules built on them.
//!
//! For a focal group `a` (the units whose effect is being estimated), each
//! focal unit's counterfactual posterior sd `s_i^{f_{1-a}}` is compared with
//! the observed-arm sds `s_j^{f_a}` of the focal group. Three rules are
//! provided, together with the conventional propensity-score range rule.

use crate::bart::PosteriorSurface;
use crate::data::Group;
use crate::error::{Error, Result};

/// Chi-squared(1) upper 10% point used by the alpha = 0.10 ratio rule.
pub const RATIO_CUTOFF_10: f64 = 2.706;
/// Chi-squared(1) upper 5% point used by the alpha = 0.05 ratio rule.
pub const RATIO_CUTOFF_05: f64 = 3.841;

/// Sample standard deviation with denominator `len - 1`; zero for fewer
/// than two values. Values are shifted by the first one, so a constant
/// input gives exactly zero.
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let k = values[0];
    let mean = values.iter().map(|v| v - k).sum::<f64>() / n as f64;
    (values.iter().map(|v| (v - k - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualUncertainty {
    /// Posterior sd of f(0, x_i).
    pub s_f0: Vec<f64>,
    /// Posterior sd of f(1, x_i).
    pub s_f1: Vec<f64>,
    pub z: Vec<u8>,
}

impl CounterfactualUncertainty {
    pub fn new(s_f0: Vec<f64>, s_f1: Vec<f64>, z: Vec<u8>) -> Self {
        assert!(s_f0.len() == z.len() && s_f1.len() == z.len());
        CounterfactualUncertainty { s_f0, s_f1, z }
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    /// Sd of arm `g` for unit `i`.
    pub fn sd(&self, i: usize, g: Group) -> f64 {
        match g {
            Group::Control => self.s_f0[i],
            Group::Treated => self.s_f1[i],
        }
    }

    pub fn focal_units(&self, a: Group) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.z[i] == a.z()).collect()
    }

    fn observed_sds(&self, a: Group) -> Vec<f64> {
        self.focal_units(a).into_iter().map(|i| self.sd(i, a)).collect()
    }

    /// `m_a`: largest observed-arm sd within group `a` (0 if empty).
    pub fn max_observed(&self, a: Group) -> f64 {
        self.observed_sds(a).into_iter().fold(0.0, f64::max)
    }

    /// Sample sd of the observed-arm sds within group `a`.
    pub fn spread(&self, a: Group) -> f64 {
        sample_sd(&self.observed_sds(a))
    }

    /// Mean observed-arm sd within group `a`.
    pub fn mean_observed(&self, a: Group) -> f64 {
        let v = self.observed_sds(a);
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        CounterfactualUncertainty {
            s_f0: self.s_f0.iter().map(|v| v * c).collect(),
            s_f1: self.s_f1.iter().map(|v| v * c).collect(),
            z: self.z.clone(),
        }
    }
}

/// Per-unit posterior sds of both arms.
pub fn counterfactual_sds(ps: &PosteriorSurface) -> Result<CounterfactualUncertainty> {
    if ps.num_draws() < 2 {
        return Err(Error::TooFewDraws);
    }
    let col_sd = |m: &nalgebra::DMatrix<f64>| -> Vec<f64> { m.column_iter().map(|c| sample_sd(c.as_slice())).collect() };
    Ok(CounterfactualUncertainty::new(col_sd(&ps.f0_draws), col_sd(&ps.f1_draws), ps.z.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    /// Counterfactual sd above the focal group's max observed sd plus one sd.
    OneSd,
    /// Squared sd ratio above the chi-squared(1) 10% point.
    Ratio10,
    /// Squared sd ratio above the chi-squared(1) 5% point.
    Ratio05,
    /// Propensity score outside the comparison group's range.
    PropensityRange,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::OneSd => "1sd",
            Rule::Ratio10 => "alpha0.10",
            Rule::Ratio05 => "alpha0.05",
            Rule::PropensityRange => "ps-range",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Upper(f64),
    /// Comparison-group propensity range `[lo, hi]`.
    Range { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscardReport {
    pub rule: Rule,
    pub focal: Group,
    /// Rule statistic; NaN for non-focal units.
    pub statistic: Vec<f64>,
    pub threshold: Threshold,
    pub discard: Vec<bool>,
    /// Focal units whose observed-arm sd is zero (ratio rules only).
    pub zero_observed_sd: Vec<usize>,
}

impl DiscardReport {
    pub fn n_discarded(&self) -> usize {
        self.discard.iter().filter(|&&d| d).count()
    }

    pub fn is_retained(&self, i: usize) -> bool {
        !self.discard[i]
    }

    /// An empty report for `n` units that discards nothing.
    pub fn keep_all(focal: Group, z: &[u8]) -> Self {
        DiscardReport {
            rule: Rule::OneSd,
            focal,
            statistic: z.iter().map(|_| f64::NAN).collect(),
            threshold: Threshold::Upper(f64::INFINITY),
            discard: vec![false; z.len()],
            zero_observed_sd: Vec::new(),
        }
    }
}

pub fn discard_one_sd(cu: &CounterfactualUncertainty, a: Group) -> Result<DiscardReport> {
    let focal = cu.focal_units(a);
    if focal.is_empty() {
        return Err(Error::EmptyFocalGroup);
    }
    let threshold = cu.max_observed(a) + cu.spread(a);
    let mut statistic = vec![f64::NAN; cu.n()];
    let mut discard = vec![false; cu.n()];
    for i in focal {
        let s = cu.sd(i, a.other());
        statistic[i] = s;
        discard[i] = s > threshold;
    }
    Ok(DiscardReport { rule: Rule::OneSd, focal: a, statistic, threshold: Threshold::Upper(threshold), discard, zero_observed_sd: Vec::new() })
}

/// Squared ratio of counterfactual to observed sd. A zero observed sd gives
/// `+inf` when the counterfactual sd is positive and 0 when both vanish.
pub fn sd_ratio_stat(counterfactual: f64, observed: f64) -> f64 {
    if observed > 0.0 {
        (counterfactual / observed).powi(2)
    } else if counterfactual > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

pub fn discard_ratio(cu: &CounterfactualUncertainty, a: Group, rule: Rule) -> Result<DiscardReport> {
    let cutoff = match rule {
        Rule::Ratio10 => RATIO_CUTOFF_10,
        Rule::Ratio05 => RATIO_CUTOFF_05,
        _ => return Err(Error::ConfigInvalid(format!("{} is not a ratio rule", rule.name()))),
    };
    let focal = cu.focal_units(a);
    if focal.is_empty() {
        return Err(Error::EmptyFocalGroup);
    }
    let mut statistic = vec![f64::NAN; cu.n()];
    let mut discard = vec![false; cu.n()];
    let mut zero_observed_sd = Vec::new();
    for i in focal {
        let obs = cu.sd(i, a);
        if obs == 0.0 {
            zero_observed_sd.push(i);
        }
        let s = sd_ratio_stat(cu.sd(i, a.other()), obs);
        statistic[i] = s;
        discard[i] = s > cutoff;
    }
    Ok(DiscardReport { rule, focal: a, statistic, threshold: Threshold::Upper(cutoff), discard, zero_observed_sd })
}

/// Applies any of the three posterior-uncertainty rules.
pub fn discard_bart(cu: &CounterfactualUncertainty, a: Group, rule: Rule) -> Result<DiscardReport> {
    match rule {
        Rule::OneSd => discard_one_sd(cu, a),
        Rule::Ratio10 | Rule::Ratio05 => discard_ratio(cu, a, rule),
        Rule::PropensityRange => Err(Error::ConfigInvalid("propensity rule needs scores".into())),
    }
}

/// Discards focal units whose score lies outside the comparison group's range.
pub fn discard_propensity_range(pscores: &[f64], z: &[u8], a: Group) -> Result<DiscardReport> {
    assert_eq!(pscores.len(), z.len());
    let comparison: Vec<f64> = (0..z.len()).filter(|&i| z[i] != a.z()).map(|i| pscores[i]).collect();
    if comparison.is_empty() {
        return Err(Error::EmptyComparisonGroup);
    }
    if !z.iter().any(|&v| v == a.z()) {
        return Err(Error::EmptyFocalGroup);
    }
    let lo = comparison.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = comparison.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut statistic = vec![f64::NAN; z.len()];
    let mut discard = vec![false; z.len()];
    for i in (0..z.len()).filter(|&i| z[i] == a.z()) {
        statistic[i] = pscores[i];
        discard[i] = pscores[i] > hi || pscores[i] < lo;
    }
    Ok(DiscardReport { rule: Rule::PropensityRange, focal: a, statistic, threshold: Threshold::Range { lo, hi }, discard, zero_observed_sd: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn cu_treated(cf: &[f64], obs: &[f64]) -> CounterfactualUncertainty {
        let n = cf.len();
        CounterfactualUncertainty::new(cf.to_vec(), obs.to_vec(), vec![1; n])
    }

    #[test]
    fn cutoffs_are_exact() {
        assert_eq!(RATIO_CUTOFF_10, 2.706);
        assert_eq!(RATIO_CUTOFF_05, 3.841);
    }

    #[test]
    fn sds_from_draws() {
        let f0 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 1.0]);
        let ps = PosteriorSurface {
            f1_draws: f0.clone() * 3.0,
            f0_draws: f0,
            sigma_draws: vec![1.0; 2],
            sigma_trace: vec![1.0; 2],
            z: vec![0, 1],
            warnings: vec![],
        };
        let cu = counterfactual_sds(&ps).unwrap();
        assert!((cu.s_f0[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(cu.s_f0[1], 0.0);
        assert!((cu.s_f1[0] - 3.0 * 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn constant_draws_give_zero_sds() {
        let m = DMatrix::from_element(4, 3, 2.5);
        let ps = PosteriorSurface { f0_draws: m.clone(), f1_draws: m, sigma_draws: vec![1.0; 4], sigma_trace: vec![], z: vec![0, 1, 1], warnings: vec![] };
        let cu = counterfactual_sds(&ps).unwrap();
        assert!(cu.s_f0.iter().chain(&cu.s_f1).all(|&v| v == 0.0));
        assert_eq!(cu.max_observed(Group::Treated), 0.0);
        assert_eq!(cu.spread(Group::Treated), 0.0);
    }

    #[test]
    fn too_few_draws() {
        let m = DMatrix::from_element(1, 3, 2.5);
        let ps = PosteriorSurface { f0_draws: m.clone(), f1_draws: m, sigma_draws: vec![1.0], sigma_trace: vec![], z: vec![0, 1, 1], warnings: vec![] };
        assert!(matches!(counterfactual_sds(&ps), Err(Error::TooFewDraws)));
    }

    #[test]
    fn one_sd_hand_example() {
        let cu = cu_treated(&[1.0, 3.0], &[1.0, 1.2]);
        assert_eq!(cu.max_observed(Group::Treated), 1.2);
        assert!((cu.spread(Group::Treated) - 0.141421356).abs() < 1e-8);
        let r = discard_one_sd(&cu, Group::Treated).unwrap();
        let Threshold::Upper(t) = r.threshold else { panic!() };
        assert!((t - 1.341421356).abs() < 1e-8);
        assert_eq!(r.discard, [false, true]);
    }

    #[test]
    fn one_sd_perfect_overlap_keeps_all() {
        let cu = cu_treated(&[0.4, 0.7, 0.5], &[0.4, 0.7, 0.5]);
        assert_eq!(discard_one_sd(&cu, Group::Treated).unwrap().n_discarded(), 0);
    }

    #[test]
    fn one_sd_single_unit_group() {
        let cu = CounterfactualUncertainty::new(vec![2.0, 0.5], vec![1.0, 0.1], vec![1, 0]);
        let r = discard_one_sd(&cu, Group::Treated).unwrap();
        assert_eq!(r.threshold, Threshold::Upper(1.0));
        assert_eq!(r.discard, [true, false]);
        let empty = CounterfactualUncertainty::new(vec![1.0], vec![1.0], vec![0]);
        assert!(matches!(discard_one_sd(&empty, Group::Treated), Err(Error::EmptyFocalGroup)));
    }

    #[test]
    fn ratio_rules() {
        let cu = cu_treated(&[2.0, 1.0], &[1.0, 1.0]);
        for rule in [Rule::Ratio10, Rule::Ratio05] {
            let r = discard_ratio(&cu, Group::Treated, rule).unwrap();
            assert_eq!(r.statistic, [4.0, 1.0]);
            assert_eq!(r.discard, [true, false]);
        }
    }

    #[test]
    fn ratio_zero_observed_sd() {
        let cu = cu_treated(&[1.0, 0.0, 0.5], &[0.0, 0.0, 1.0]);
        let r = discard_ratio(&cu, Group::Treated, Rule::Ratio05).unwrap();
        assert_eq!(r.statistic[0], f64::INFINITY);
        assert_eq!(r.statistic[1], 0.0);
        assert_eq!(r.discard, [true, false, false]);
        assert_eq!(r.zero_observed_sd, [0, 1]);
    }

    #[test]
    fn threshold_ties_are_retained() {
        let cu = cu_treated(&[RATIO_CUTOFF_10.sqrt(), 1.0], &[1.0, 1.0]);
        let stat = sd_ratio_stat(RATIO_CUTOFF_10.sqrt(), 1.0);
        let r = discard_ratio(&cu, Group::Treated, Rule::Ratio10).unwrap();
        assert_eq!(r.discard[0], stat > RATIO_CUTOFF_10);
    }

    #[test]
    fn propensity_range_hand_example() {
        let r = discard_propensity_range(&[0.2, 0.9, 0.1, 0.8], &[1, 1, 0, 0], Group::Treated).unwrap();
        assert_eq!(r.discard, [false, true, false, false]);
        assert_eq!(r.threshold, Threshold::Range { lo: 0.1, hi: 0.8 });
        let inside = discard_propensity_range(&[0.3, 0.4, 0.1, 0.8], &[1, 1, 0, 0], Group::Treated).unwrap();
        assert_eq!(inside.n_discarded(), 0);
        assert!(matches!(discard_propensity_range(&[0.3, 0.4], &[1, 1], Group::Treated), Err(Error::EmptyComparisonGroup)));
    }

    #[test]
    fn non_focal_never_discarded() {
        let cu = CounterfactualUncertainty::new(vec![9.0, 9.0, 0.1], vec![0.1, 0.1, 9.0], vec![0, 1, 0]);
        for a in [Group::Treated, Group::Control] {
            for rule in [Rule::OneSd, Rule::Ratio10, Rule::Ratio05] {
                let r = discard_bart(&cu, a, rule).unwrap();
                assert!((0..3).all(|i| !r.discard[i] || cu.z[i] == a.z()));
            }
        }
    }
}
