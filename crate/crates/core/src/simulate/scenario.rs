//! The 32-cell factorial simulation design.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::GeneratedStudy;
use crate::data::{Dataset, Seed, Stream};
use crate::error::{Error, Result};
use crate::estimators::inv_logit;

/// Number of covariates the design's coefficients refer to.
pub const ACTIVE_COVARIATES: usize = 10;
/// Size of the sample used to calibrate the assignment offset.
pub const CALIBRATION_DRAWS: usize = 100_000;
const CALIBRATION_SEED: Seed = Seed(0x0ff5e7);

/// Columns of the coefficient table: each term is the product of the listed
/// (zero-based) covariates.
pub const TERMS: [&[usize]; 21] = [
    &[0],
    &[1],
    &[0, 0],
    &[1, 1],
    &[1, 5],
    &[4],
    &[5],
    &[6],
    &[7],
    &[8],
    &[9],
    &[4, 4],
    &[5, 5],
    &[4, 5],
    &[4, 5, 6],
    &[6, 6],
    &[6, 6, 6],
    &[7, 7],
    &[6, 7],
    &[8, 8],
    &[8, 9],
];

type Row = [f64; 21];

pub const ASSIGN_LINEAR: Row = [0.0, 0.0, 0.0, 0.0, 0.0, 0.4, 0.2, 0.4, 0.2, 0.4, 0.4, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
pub const ASSIGN_NONLINEAR: Row = [0.0, 0.0, 0.0, 0.0, 0.0, 0.4, 0.2, 0.4, 0.2, 0.4, 0.4, 0.8, 0.8, 0.5, 0.3, 0.8, 0.2, 0.4, 0.3, 0.8, 0.5];
pub const ALIGNED_Y0: Row = [0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 2.0, 0.0, 0.5, 2.0, 0.4, 0.8, 0.0, 0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.7];
pub const ALIGNED_Y1: Row = [0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 1.0, 0.5, 0.0, 0.8, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
pub const MISALIGNED_Y0: Row = [0.5, 2.0, 0.4, 0.5, 1.0, 0.5, 2.0, 0.0, 0.0, 0.0, 0.0, 0.5, 1.5, 0.7, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
pub const MISALIGNED_Y1: Row = [0.5, 0.5, 0.0, 0.0, 0.0, 0.5, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];

/// Constant effect added to the treated surface when surfaces are parallel.
pub const PARALLEL_EFFECT: f64 = 4.0;

/// Evaluates `sum_k row[k] * prod(x[TERMS[k]])`.
pub fn evaluate(row: &Row, x: &[f64]) -> f64 {
    row.iter()
        .zip(TERMS.iter())
        .filter(|(c, _)| **c != 0.0)
        .map(|(c, vars)| c * vars.iter().map(|&j| x[j]).product::<f64>())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Assignment {
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Alignment {
    Aligned,
    NotAsAligned,
}

/// Treated-to-control ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ratio {
    FourToOne,
    OneToFour,
}

impl Ratio {
    pub fn treated_share(self) -> f64 {
        match self {
            Ratio::FourToOne => 0.8,
            Ratio::OneToFour => 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Surfaces {
    Parallel,
    NonParallel,
}

/// One cell of the factorial design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScenarioConfig {
    pub assignment: Assignment,
    pub alignment: Alignment,
    pub ratio: Ratio,
    pub num_covariates: usize,
    pub surfaces: Surfaces,
    pub n: usize,
}

pub const DEFAULT_SCENARIO_N: usize = 500;

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_covariates < ACTIVE_COVARIATES {
            return Err(Error::ConfigInvalid(format!("num_covariates must be at least {ACTIVE_COVARIATES}")));
        }
        if self.n < 10 {
            return Err(Error::ConfigInvalid("scenario n must be at least 10".into()));
        }
        Ok(())
    }

    /// All 32 cells, in a fixed order.
    pub fn all(n: usize) -> Vec<ScenarioConfig> {
        let mut out = Vec::with_capacity(32);
        for assignment in [Assignment::Linear, Assignment::Nonlinear] {
            for surfaces in [Surfaces::Parallel, Surfaces::NonParallel] {
                for alignment in [Alignment::Aligned, Alignment::NotAsAligned] {
                    for ratio in [Ratio::FourToOne, Ratio::OneToFour] {
                        for num_covariates in [10, 50] {
                            out.push(ScenarioConfig { assignment, alignment, ratio, num_covariates, surfaces, n });
                        }
                    }
                }
            }
        }
        out
    }

    /// The eight linear-assignment, parallel-surface cells.
    pub fn desk(n: usize) -> Vec<ScenarioConfig> {
        Self::all(n)
            .into_iter()
            .filter(|c| c.assignment == Assignment::Linear && c.surfaces == Surfaces::Parallel)
            .collect()
    }

    /// Position in [`ScenarioConfig::all`], ignoring `n`; unusual covariate
    /// counts share the index of their p = 50 sibling.
    pub fn canonical_index(&self) -> usize {
        let bit = |b: bool| b as usize;
        (bit(self.assignment == Assignment::Nonlinear) << 4)
            | (bit(self.surfaces == Surfaces::NonParallel) << 3)
            | (bit(self.alignment == Alignment::NotAsAligned) << 2)
            | (bit(self.ratio == Ratio::OneToFour) << 1)
            | bit(self.num_covariates != 10)
    }

    fn assignment_row(&self) -> &'static Row {
        match self.assignment {
            Assignment::Linear => &ASSIGN_LINEAR,
            Assignment::Nonlinear => &ASSIGN_NONLINEAR,
        }
    }

    /// Coefficient rows of the two surfaces plus the constant effect.
    fn response_rows(&self) -> (&'static Row, &'static Row, f64) {
        let (y0, y1) = match self.alignment {
            Alignment::Aligned => (&ALIGNED_Y0, &ALIGNED_Y1),
            Alignment::NotAsAligned => (&MISALIGNED_Y0, &MISALIGNED_Y1),
        };
        match self.surfaces {
            Surfaces::Parallel => (y0, y0, PARALLEL_EFFECT),
            Surfaces::NonParallel => (y0, y1, 0.0),
        }
    }
}

impl fmt::Display for ScenarioConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = match self.assignment {
            Assignment::Linear => "linear",
            Assignment::Nonlinear => "nonlinear",
        };
        let b = match self.alignment {
            Alignment::Aligned => "aligned",
            Alignment::NotAsAligned => "misaligned",
        };
        let r = match self.ratio {
            Ratio::FourToOne => "4to1",
            Ratio::OneToFour => "1to4",
        };
        let s = match self.surfaces {
            Surfaces::Parallel => "parallel",
            Surfaces::NonParallel => "nonparallel",
        };
        write!(f, "{a}-{b}-{r}-p{}-{s}", self.num_covariates)
    }
}

impl FromStr for ScenarioConfig {
    type Err = Error;

    /// Parses ids like `linear-aligned-1to4-p10-parallel`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::ConfigInvalid(format!("unknown scenario cell `{s}`"));
        let parts: Vec<&str> = s.split('-').collect();
        let [a, b, r, p, f] = parts[..] else { return Err(bad()) };
        let assignment = match a {
            "linear" => Assignment::Linear,
            "nonlinear" => Assignment::Nonlinear,
            _ => return Err(bad()),
        };
        let alignment = match b {
            "aligned" => Alignment::Aligned,
            "misaligned" => Alignment::NotAsAligned,
            _ => return Err(bad()),
        };
        let ratio = match r {
            "4to1" => Ratio::FourToOne,
            "1to4" => Ratio::OneToFour,
            _ => return Err(bad()),
        };
        let num_covariates = p.strip_prefix('p').and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let surfaces = match f {
            "parallel" => Surfaces::Parallel,
            "nonparallel" => Surfaces::NonParallel,
            _ => return Err(bad()),
        };
        let cfg = ScenarioConfig { assignment, alignment, ratio, num_covariates, surfaces, n: DEFAULT_SCENARIO_N };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Finds `omega` with `mean(inv_logit(omega + eta_i)) = target_share` by
/// bisection.
pub fn calibrate_offset(eta: &[f64], target_share: f64) -> Result<f64> {
    if !(target_share > 0.0 && target_share < 1.0) {
        return Err(Error::ConfigInvalid("target share must lie in (0, 1)".into()));
    }
    if eta.is_empty() {
        return Err(Error::ConfigInvalid("empty calibration sample".into()));
    }
    let share = |w: f64| eta.iter().map(|&e| inv_logit(w + e)).sum::<f64>() / eta.len() as f64;
    let (mut lo, mut hi) = (-50.0_f64, 50.0_f64);
    if share(lo) > target_share || share(hi) < target_share {
        return Err(Error::NoBracket);
    }
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if share(mid) < target_share {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn draw_row<R: Rng>(rng: &mut R, p: usize) -> Vec<f64> {
    (0..p).map(|_| StandardNormal.sample(rng)).collect()
}

/// A cell with its calibrated offset, ready to draw replications.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGenerator {
    pub config: ScenarioConfig,
    pub omega: f64,
}

impl ScenarioGenerator {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = CALIBRATION_SEED.rng(Stream::Calibration);
        let row = config.assignment_row();
        let eta: Vec<f64> = (0..CALIBRATION_DRAWS).map(|_| evaluate(row, &draw_row(&mut rng, ACTIVE_COVARIATES))).collect();
        let omega = calibrate_offset(&eta, config.ratio.treated_share())?;
        Ok(ScenarioGenerator { config, omega })
    }

    pub fn propensity(&self, x: &[f64]) -> f64 {
        inv_logit(self.omega + evaluate(self.config.assignment_row(), x))
    }

    /// Noiseless `(E[Y(0) | x], E[Y(1) | x])`.
    pub fn surfaces(&self, x: &[f64]) -> (f64, f64) {
        let (r0, r1, tau) = self.config.response_rows();
        (evaluate(r0, x), evaluate(r1, x) + tau)
    }

    pub fn generate(&self, seed: Seed) -> Result<GeneratedStudy> {
        let cfg = &self.config;
        let (n, p) = (cfg.n, cfg.num_covariates);
        let mut rng = seed.rng(Stream::Dgp);
        let mut x = DMatrix::zeros(n, p);
        let (mut z, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
        let (mut mu0, mut mu1, mut y0, mut y1) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for i in 0..n {
            let row = draw_row(&mut rng, p);
            let zi = u8::from(rng.random::<f64>() < self.propensity(&row));
            let (e0, e1): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            let (m0, m1) = self.surfaces(&row);
            for (j, v) in row.into_iter().enumerate() {
                x[(i, j)] = v;
            }
            mu0.push(m0);
            mu1.push(m1);
            y0.push(m0 + e0);
            y1.push(m1 + e1);
            y.push(if zi == 1 { m1 + e1 } else { m0 + e0 });
            z.push(zi);
        }
        let dataset = Dataset::new(x, z, y, Dataset::default_names(p))?;
        if dataset.require_both_groups().is_err() {
            return Err(Error::DegenerateSample);
        }
        Ok(GeneratedStudy { dataset, mu0, mu1, y0, y1, dgp: cfg.to_string(), seed })
    }
}

/// Calibrates the cell's offset and draws one replication.
pub fn gen_scenario(cfg: ScenarioConfig, seed: Seed) -> Result<GeneratedStudy> {
    ScenarioGenerator::new(cfg)?.generate(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::logistic::logit;

    fn cell(id: &str) -> ScenarioConfig {
        id.parse().unwrap()
    }

    #[test]
    fn all_cells_distinct_and_indexed() {
        let all = ScenarioConfig::all(500);
        assert_eq!(all.len(), 32);
        for (i, c) in all.iter().enumerate() {
            assert_eq!(c.canonical_index(), i);
            assert_eq!(&c.to_string().parse::<ScenarioConfig>().unwrap(), c);
        }
        let desk = ScenarioConfig::desk(500);
        assert_eq!(desk.len(), 8);
    }

    #[test]
    fn bad_ids_rejected() {
        for s in ["linear-aligned-1to4-p10", "curvy-aligned-1to4-p10-parallel", "linear-aligned-1to4-p5-parallel", "linear-aligned-2to1-p10-parallel"] {
            assert!(s.parse::<ScenarioConfig>().is_err(), "{s}");
        }
    }

    #[test]
    fn calibration_closed_forms() {
        let zeros = vec![0.0; 1000];
        assert!(calibrate_offset(&zeros, 0.5).unwrap().abs() < 1e-6);
        assert!((calibrate_offset(&zeros, 0.8).unwrap() - logit(0.8)).abs() < 1e-6);
        assert!((logit(0.8) - 1.3863).abs() < 1e-4);
        assert!(calibrate_offset(&zeros, 1.0).is_err());
        assert!(matches!(calibrate_offset(&[1e9, -1e9], 0.7), Err(Error::NoBracket)));
    }

    #[test]
    fn calibrated_share_holds_on_fresh_draws() {
        for id in ["nonlinear-aligned-4to1-p10-parallel", "linear-aligned-1to4-p10-parallel"] {
            let g = ScenarioGenerator::new(cell(id)).unwrap();
            let mut rng = Seed(99).rng(Stream::Dgp);
            let share = (0..100_000).map(|_| g.propensity(&draw_row(&mut rng, 10))).sum::<f64>() / 1e5;
            assert!((share - g.config.ratio.treated_share()).abs() < 0.01, "{id} {share}");
        }
    }

    #[test]
    fn parallel_effect_is_four() {
        let g = gen_scenario(cell("nonlinear-misaligned-1to4-p50-parallel"), Seed(3)).unwrap();
        assert!(g.true_unit_effects().iter().all(|&t| (t - 4.0).abs() < 1e-12));
    }

    #[test]
    fn four_to_one_share() {
        let gen = ScenarioGenerator::new(cell("linear-aligned-4to1-p10-parallel")).unwrap();
        let shares: Vec<f64> = (0..50)
            .map(|s| gen.generate(Seed(s)).unwrap().dataset.z().iter().filter(|&&z| z == 1).count() as f64 / 500.0)
            .collect();
        let inside = shares.iter().filter(|s| (0.75..=0.85).contains(*s)).count();
        let mean = shares.iter().sum::<f64>() / 50.0;
        // binomial sd at n = 500 is 0.018, so the band is about 2.8 sd wide
        assert!(inside >= 47, "{inside}");
        assert!((0.79..=0.81).contains(&mean), "{mean}");
    }

    #[test]
    fn extra_covariates_are_inert() {
        let gen = ScenarioGenerator::new(cell("nonlinear-aligned-1to4-p50-nonparallel")).unwrap();
        let mut rng = Seed(1).rng(Stream::Dgp);
        for _ in 0..100 {
            let mut x = draw_row(&mut rng, 50);
            let before = (gen.surfaces(&x), gen.propensity(&x));
            for v in &mut x[10..] {
                *v = StandardNormal.sample(&mut rng);
            }
            assert_eq!((gen.surfaces(&x), gen.propensity(&x)), before);
        }
    }

    /// Coefficients keyed by term name, entered separately from the matrix
    /// above.
    fn keyed(label: &str) -> Vec<(&'static str, f64)> {
        match label {
            "assign-linear" => vec![("x5", 0.4), ("x6", 0.2), ("x7", 0.4), ("x8", 0.2), ("x9", 0.4), ("x10", 0.4)],
            "assign-nonlinear" => vec![
                ("x5", 0.4), ("x6", 0.2), ("x7", 0.4), ("x8", 0.2), ("x9", 0.4), ("x10", 0.4),
                ("x5^2", 0.8), ("x6^2", 0.8), ("x5*x6", 0.5), ("x5*x6*x7", 0.3), ("x7^2", 0.8),
                ("x7^3", 0.2), ("x8^2", 0.4), ("x7*x8", 0.3), ("x9^2", 0.8), ("x9*x10", 0.5),
            ],
            "aligned-y0" => vec![
                ("x5", 0.5), ("x7", 2.0), ("x9", 0.5), ("x10", 2.0), ("x5^2", 0.4), ("x6^2", 0.8),
                ("x7^2", 0.5), ("x8^2", 0.5), ("x9^2", 0.5), ("x9*x10", 0.7),
            ],
            "aligned-y1" => vec![("x5", 0.5), ("x7", 1.0), ("x8", 0.5), ("x10", 0.8), ("x5*x6", 0.3)],
            "misaligned-y0" => vec![
                ("x1", 0.5), ("x2", 2.0), ("x1^2", 0.4), ("x2^2", 0.5), ("x2*x6", 1.0), ("x5", 0.5),
                ("x6", 2.0), ("x5^2", 0.5), ("x6^2", 1.5), ("x5*x6", 0.7),
            ],
            "misaligned-y1" => vec![("x1", 0.5), ("x2", 0.5), ("x5", 0.5), ("x6", 2.0), ("x5*x6", 0.3)],
            _ => unreachable!(),
        }
    }

    fn eval_keyed(terms: &[(&str, f64)], x: &[f64]) -> f64 {
        terms
            .iter()
            .map(|(name, c)| {
                let v: f64 = name
                    .split('*')
                    .map(|f| match f.split_once('^') {
                        Some((v, k)) => x[v[1..].parse::<usize>().unwrap() - 1].powi(k.parse().unwrap()),
                        None => x[f[1..].parse::<usize>().unwrap() - 1],
                    })
                    .product();
                c * v
            })
            .sum()
    }

    #[test]
    fn coefficient_rows_match_keyed_table() {
        let rows: [(&str, &Row); 6] = [
            ("assign-linear", &ASSIGN_LINEAR),
            ("assign-nonlinear", &ASSIGN_NONLINEAR),
            ("aligned-y0", &ALIGNED_Y0),
            ("aligned-y1", &ALIGNED_Y1),
            ("misaligned-y0", &MISALIGNED_Y0),
            ("misaligned-y1", &MISALIGNED_Y1),
        ];
        let mut rng = Seed(17).rng(Stream::Dgp);
        for (label, row) in rows {
            assert_eq!(row.iter().filter(|&&c| c != 0.0).count(), keyed(label).len(), "{label}");
            for _ in 0..200 {
                let x = draw_row(&mut rng, 10);
                let (a, b) = (evaluate(row, &x), eval_keyed(&keyed(label), &x));
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{label}");
            }
        }
    }

    #[test]
    fn stored_truths_match_formulas() {
        let gen = ScenarioGenerator::new(cell("nonlinear-misaligned-4to1-p10-nonparallel")).unwrap();
        let g = gen.generate(Seed(12)).unwrap();
        for i in 0..g.dataset.n() {
            let x: Vec<f64> = g.dataset.x().row(i).iter().copied().collect();
            assert_eq!((g.mu0[i], g.mu1[i]), gen.surfaces(&x));
            assert!((g.mu0[i] - eval_keyed(&keyed("misaligned-y0"), &x)).abs() < 1e-12);
            assert!((g.mu1[i] - eval_keyed(&keyed("misaligned-y1"), &x)).abs() < 1e-12);
        }
    }
}
