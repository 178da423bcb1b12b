//! Replicated comparison of analysis strategies across scenario cells.

use std::io::Write;

use super::scenario::{ScenarioConfig, ScenarioGenerator};
use super::{outcome_sd, GeneratedStudy};
use crate::bart::BartConfig;
use crate::data::{Group, Seed};
use crate::error::{Error, Result};
use crate::parallel::{map_indexed, Execution};
use crate::pipeline::{Method, Pipeline};

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub cells: Vec<ScenarioConfig>,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub seed: Seed,
    pub bart: BartConfig,
    pub execution: Execution,
}

impl StudyConfig {
    pub fn new(cells: Vec<ScenarioConfig>, methods: Vec<Method>, reps: usize, seed: Seed) -> Self {
        StudyConfig { cells, methods, reps, seed, bart: BartConfig::default(), execution: Execution::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::ConfigInvalid("reps must be at least 1".into()));
        }
        if self.methods.is_empty() || self.cells.is_empty() {
            return Err(Error::ConfigInvalid("need at least one cell and one method".into()));
        }
        for c in &self.cells {
            c.validate()?;
        }
        if self.methods.iter().any(|m| m.uses_bart()) {
            self.bart.validate()?;
        }
        Ok(())
    }

    /// Seed of replication `rep` in `cell`; stable under reordering or
    /// subsetting of the cell list.
    pub fn replication_seed(&self, cell: &ScenarioConfig, rep: usize) -> Seed {
        self.seed.derive(cell.canonical_index() as u64).derive(rep as u64)
    }
}

/// Outcome of one method on one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepOutcome {
    /// Estimate minus the retained-unit truth, divided by sd(y).
    pub std_error: f64,
    pub covered: bool,
    pub drop_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellMetrics {
    pub cell: ScenarioConfig,
    pub method: Method,
    pub reps: usize,
    pub completed: usize,
    pub failures: usize,
    /// Absolute value of the mean standardized error.
    pub abs_bias: f64,
    pub rmse: f64,
    pub drop_rate: f64,
    pub coverage: f64,
}

impl CellMetrics {
    fn aggregate(cell: ScenarioConfig, method: Method, outcomes: &[Option<RepOutcome>]) -> Self {
        let ok: Vec<&RepOutcome> = outcomes.iter().flatten().collect();
        let k = ok.len() as f64;
        let mean = |f: &dyn Fn(&RepOutcome) -> f64| if ok.is_empty() { f64::NAN } else { ok.iter().map(|o| f(o)).sum::<f64>() / k };
        CellMetrics {
            cell,
            method,
            reps: outcomes.len(),
            completed: ok.len(),
            failures: outcomes.len() - ok.len(),
            abs_bias: mean(&|o| o.std_error).abs(),
            rmse: mean(&|o| o.std_error * o.std_error).sqrt(),
            drop_rate: mean(&|o| o.drop_rate),
            coverage: mean(&|o| if o.covered { 1.0 } else { 0.0 }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyMetrics {
    /// One entry per cell and method, cells in input order.
    pub rows: Vec<CellMetrics>,
}

impl StudyMetrics {
    pub fn get(&self, cell: &ScenarioConfig, method: Method) -> Option<&CellMetrics> {
        self.rows.iter().find(|r| &r.cell == cell && r.method == method)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["cell", "n", "method", "reps", "completed", "failures", "abs_bias", "rmse", "drop_rate", "coverage"])?;
        for r in &self.rows {
            out.write_record([
                r.cell.to_string(),
                r.cell.n.to_string(),
                r.method.name().to_owned(),
                r.reps.to_string(),
                r.completed.to_string(),
                r.failures.to_string(),
                r.abs_bias.to_string(),
                r.rmse.to_string(),
                r.drop_rate.to_string(),
                r.coverage.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs every method on one generated dataset, treated units focal.
pub fn evaluate_methods(g: &GeneratedStudy, methods: &[Method], bart: BartConfig, seed: Seed) -> Vec<Option<RepOutcome>> {
    let d = &g.dataset;
    let sd = outcome_sd(d);
    let n_focal = d.group_size(Group::Treated) as f64;
    let mut pipe = Pipeline::new(d, Group::Treated, bart, seed);
    methods
        .iter()
        .map(|&m| {
            if m == Method::Oracle {
                let truth = g.catt();
                return Some(RepOutcome { std_error: 0.0, covered: true, drop_rate: 0.0 }).filter(|_| truth.is_finite());
            }
            let res = pipe.run(m).ok()?;
            let retained: Option<Vec<bool>> = res.report.as_ref().map(|r| r.discard.iter().map(|&x| !x).collect());
            let truth = g.conditional_effect(Group::Treated, retained.as_deref());
            let e = &res.estimate;
            Some(RepOutcome {
                std_error: (e.point - truth) / sd,
                covered: e.lo <= truth && truth <= e.hi,
                drop_rate: res.report.as_ref().map_or(0.0, |r| r.n_discarded() as f64 / n_focal),
            })
        })
        .collect()
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudyMetrics> {
    run_study_with_progress(cfg, &|_, _| {})
}

/// As [`run_study`], calling `progress(done, total)` as replications finish
/// (in completion order, which is nondeterministic when run in parallel).
pub fn run_study_with_progress(cfg: &StudyConfig, progress: &(dyn Fn(usize, usize) + Sync)) -> Result<StudyMetrics> {
    cfg.validate()?;
    let generators = cfg.cells.iter().map(|c| ScenarioGenerator::new(*c)).collect::<Result<Vec<_>>>()?;
    let total = cfg.cells.len() * cfg.reps;
    let done = std::sync::atomic::AtomicUsize::new(0);
    let results = map_indexed(total, cfg.execution, |job| {
        let (c, rep) = (job / cfg.reps, job % cfg.reps);
        let seed = cfg.replication_seed(&cfg.cells[c], rep);
        let out = match generators[c].generate(seed) {
            Ok(g) => evaluate_methods(&g, &cfg.methods, cfg.bart, seed),
            Err(_) => vec![None; cfg.methods.len()],
        };
        progress(done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1, total);
        out
    });
    let mut rows = Vec::with_capacity(cfg.cells.len() * cfg.methods.len());
    for (c, cell) in cfg.cells.iter().enumerate() {
        let reps = &results[c * cfg.reps..(c + 1) * cfg.reps];
        for (k, &m) in cfg.methods.iter().enumerate() {
            let column: Vec<Option<RepOutcome>> = reps.iter().map(|r| r[k]).collect();
            rows.push(CellMetrics::aggregate(*cell, m, &column));
        }
    }
    Ok(StudyMetrics { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_bart() -> BartConfig {
        BartConfig { num_trees: 20, iterations: 200, burn_in: 50, ..BartConfig::default() }
    }

    #[test]
    fn zero_reps_rejected() {
        let cfg = StudyConfig::new(ScenarioConfig::desk(100), vec![Method::Oracle], 0, Seed(1));
        assert!(matches!(run_study(&cfg), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn oracle_is_exact() {
        let cfg = StudyConfig::new(ScenarioConfig::all(100), vec![Method::Oracle], 2, Seed(1));
        let m = run_study(&cfg).unwrap();
        assert_eq!(m.rows.len(), 32);
        for r in &m.rows {
            assert_eq!((r.abs_bias, r.rmse, r.coverage, r.failures), (0.0, 0.0, 1.0, 0));
        }
    }

    #[test]
    fn deterministic_and_execution_independent() {
        let cells = vec!["linear-aligned-1to4-p10-parallel".parse::<ScenarioConfig>().unwrap()];
        let mut cfg = StudyConfig::new(
            cells.into_iter().map(|c| ScenarioConfig { n: 120, ..c }).collect(),
            vec![Method::BartD1, Method::MatchDRe, Method::Ols],
            3,
            Seed(5),
        );
        cfg.bart = small_bart();
        let a = run_study(&cfg).unwrap();
        cfg.execution = Execution::Sequential;
        let b = run_study(&cfg).unwrap();
        assert_eq!(a, b);
        for r in &a.rows {
            assert!(r.rmse >= r.abs_bias);
            assert!((0.0..=1.0).contains(&r.drop_rate) && (0.0..=1.0).contains(&r.coverage));
        }
    }
}
