//! Named analysis strategies run against one dataset, sharing a single BART
//! fit and a single propensity model.

use std::fmt;
use std::str::FromStr;

use crate::bart::{fit_bart, BartConfig, PosteriorSurface};
use crate::data::{Dataset, Group, Seed};
use crate::error::{Error, Result};
use crate::estimators::{bart_effect, fit_logistic, iptw_effect, match_effect, ols_effect, reestimate_propensity_after_discard, EffectEstimate, PropensityModel};
use crate::support::{counterfactual_sds, discard_bart, discard_propensity_range, CounterfactualUncertainty, DiscardReport, Rule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// The true conditional effect; only meaningful in simulations.
    Oracle,
    Bart,
    BartD1,
    BartD2,
    BartD3,
    Match,
    MatchD,
    MatchDRe,
    Iptw,
    IptwD,
    IptwDRe,
    Ols,
}

impl Method {
    pub const ALL: [Method; 12] = [
        Method::Oracle,
        Method::Bart,
        Method::BartD1,
        Method::BartD2,
        Method::BartD3,
        Method::Match,
        Method::MatchD,
        Method::MatchDRe,
        Method::Iptw,
        Method::IptwD,
        Method::IptwDRe,
        Method::Ols,
    ];

    /// Rows reported by a data analysis.
    pub const ANALYSIS: [Method; 11] = [
        Method::Bart,
        Method::BartD1,
        Method::BartD2,
        Method::BartD3,
        Method::Match,
        Method::MatchD,
        Method::MatchDRe,
        Method::Iptw,
        Method::IptwD,
        Method::IptwDRe,
        Method::Ols,
    ];

    /// Strategies compared in the simulation study. Propensity discarding is
    /// always followed by re-estimation there.
    pub const STUDY: [Method; 8] = [
        Method::Bart,
        Method::BartD1,
        Method::BartD2,
        Method::BartD3,
        Method::Match,
        Method::MatchDRe,
        Method::Iptw,
        Method::IptwDRe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::Bart => "BART",
            Method::BartD1 => "BART-D1",
            Method::BartD2 => "BART-D2",
            Method::BartD3 => "BART-D3",
            Method::Match => "Match",
            Method::MatchD => "Match-D",
            Method::MatchDRe => "Match-D-RE",
            Method::Iptw => "IPTW",
            Method::IptwD => "IPTW-D",
            Method::IptwDRe => "IPTW-D-RE",
            Method::Ols => "OLS",
        }
    }

    /// The discard rule the method applies, if any.
    pub fn rule(self) -> Option<Rule> {
        match self {
            Method::BartD1 => Some(Rule::OneSd),
            Method::BartD2 => Some(Rule::Ratio10),
            Method::BartD3 => Some(Rule::Ratio05),
            Method::MatchD | Method::MatchDRe | Method::IptwD | Method::IptwDRe => Some(Rule::PropensityRange),
            _ => None,
        }
    }

    pub fn uses_bart(self) -> bool {
        matches!(self, Method::Bart | Method::BartD1 | Method::BartD2 | Method::BartD3)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub estimate: EffectEstimate,
    /// Units the method's rule discarded; `None` for methods without a rule.
    pub report: Option<DiscardReport>,
}

/// Lazily computes and caches the pieces shared between methods.
#[derive(Debug)]
pub struct Pipeline<'a> {
    data: &'a Dataset,
    focal: Group,
    bart: BartConfig,
    seed: Seed,
    surface: Option<PosteriorSurface>,
    uncertainty: Option<CounterfactualUncertainty>,
    propensity: Option<PropensityModel>,
}

impl<'a> Pipeline<'a> {
    pub fn new(data: &'a Dataset, focal: Group, bart: BartConfig, seed: Seed) -> Self {
        Pipeline { data, focal, bart, seed, surface: None, uncertainty: None, propensity: None }
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn focal(&self) -> Group {
        self.focal
    }

    pub fn surface(&mut self) -> Result<&PosteriorSurface> {
        if self.surface.is_none() {
            self.surface = Some(fit_bart(self.data, &self.bart, self.seed)?);
        }
        Ok(self.surface.as_ref().unwrap())
    }

    pub fn uncertainty(&mut self) -> Result<&CounterfactualUncertainty> {
        if self.uncertainty.is_none() {
            let cu = counterfactual_sds(self.surface()?)?;
            self.uncertainty = Some(cu);
        }
        Ok(self.uncertainty.as_ref().unwrap())
    }

    pub fn propensity(&mut self) -> Result<&PropensityModel> {
        if self.propensity.is_none() {
            self.propensity = Some(fit_logistic(self.data.x(), self.data.z())?);
        }
        Ok(self.propensity.as_ref().unwrap())
    }

    /// The report `rule` produces on this dataset.
    pub fn discard(&mut self, rule: Rule) -> Result<DiscardReport> {
        let (z, a) = (self.data.z(), self.focal);
        match rule {
            Rule::PropensityRange => discard_propensity_range(&self.propensity()?.pscores, z, a),
            _ => discard_bart(self.uncertainty()?, a, rule),
        }
    }

    pub fn run(&mut self, method: Method) -> Result<MethodResult> {
        let report = match method.rule() {
            Some(rule) => Some(self.discard(rule)?),
            None => None,
        };
        let (d, a, seed) = (self.data, self.focal, self.seed);
        let mut estimate = match method {
            Method::Oracle => return Err(Error::ConfigInvalid("the oracle needs simulation truths".into())),
            Method::Bart | Method::BartD1 | Method::BartD2 | Method::BartD3 => bart_effect(self.surface()?, report.as_ref(), a)?,
            Method::Match | Method::MatchD => match_effect(d, self.propensity()?, report.as_ref(), a, seed)?,
            Method::Iptw | Method::IptwD => iptw_effect(d, self.propensity()?, report.as_ref(), a)?,
            Method::MatchDRe | Method::IptwDRe => {
                let r = report.as_ref().expect("propensity methods carry a report");
                let pm = reestimate_propensity_after_discard(d, r)?;
                if method == Method::MatchDRe {
                    match_effect(d, &pm, Some(r), a, seed)?
                } else {
                    iptw_effect(d, &pm, Some(r), a)?
                }
            }
            Method::Ols => ols_effect(d, report.as_ref())?,
        };
        estimate.method = method.name().to_owned();
        Ok(MethodResult { estimate, report })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("GBM".parse::<Method>().is_err());
        assert_eq!(Method::ANALYSIS.len(), 11);
    }

    #[test]
    fn rules_follow_names() {
        assert_eq!(Method::BartD1.rule(), Some(Rule::OneSd));
        assert_eq!(Method::BartD2.rule(), Some(Rule::Ratio10));
        assert_eq!(Method::BartD3.rule(), Some(Rule::Ratio05));
        assert_eq!(Method::Match.rule(), None);
    }
}
