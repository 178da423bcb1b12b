//! Data-generating processes with known truths, and the replicated
//! method-comparison harness.

pub mod examples;
pub mod scenario;
pub mod study;

use crate::data::{Dataset, Group, Seed};

pub use examples::{gen_example_1d, gen_example_2a, gen_example_2b, gen_profiling_example};
pub use scenario::{calibrate_offset, gen_scenario, Alignment, Assignment, Ratio, ScenarioConfig, ScenarioGenerator, Surfaces};
pub use study::{evaluate_methods, run_study, run_study_with_progress, CellMetrics, RepOutcome, StudyConfig, StudyMetrics};

/// A simulated dataset together with its potential-outcome truths.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedStudy {
    pub dataset: Dataset,
    /// Noiseless E[Y(0) | X_i].
    pub mu0: Vec<f64>,
    /// Noiseless E[Y(1) | X_i].
    pub mu1: Vec<f64>,
    /// Realized potential outcomes.
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub dgp: String,
    pub seed: Seed,
}

impl GeneratedStudy {
    /// `E[Y(1) - Y(0) | X_i]` for every unit.
    pub fn true_unit_effects(&self) -> Vec<f64> {
        self.mu1.iter().zip(&self.mu0).map(|(a, b)| a - b).collect()
    }

    fn group_mean(&self, g: Group, retained: Option<&[bool]>, v: impl Fn(usize) -> f64) -> f64 {
        let z = self.dataset.z();
        let units: Vec<usize> = (0..z.len()).filter(|&i| z[i] == g.z() && retained.is_none_or(|r| r[i])).collect();
        units.iter().map(|&i| v(i)).sum::<f64>() / units.len() as f64
    }

    /// Conditional average effect over (retained) units of group `g`.
    pub fn conditional_effect(&self, g: Group, retained: Option<&[bool]>) -> f64 {
        self.group_mean(g, retained, |i| self.mu1[i] - self.mu0[i])
    }

    /// Sample average effect over (retained) units of group `g`.
    pub fn sample_effect(&self, g: Group, retained: Option<&[bool]>) -> f64 {
        self.group_mean(g, retained, |i| self.y1[i] - self.y0[i])
    }

    pub fn catt(&self) -> f64 {
        self.conditional_effect(Group::Treated, None)
    }

    pub fn satt(&self) -> f64 {
        self.sample_effect(Group::Treated, None)
    }

    pub fn catc(&self) -> f64 {
        self.conditional_effect(Group::Control, None)
    }

    pub fn satc(&self) -> f64 {
        self.sample_effect(Group::Control, None)
    }
}

/// Sample standard deviation of the observed outcome.
pub fn outcome_sd(d: &Dataset) -> f64 {
    crate::support::sample_sd(d.y())
}
