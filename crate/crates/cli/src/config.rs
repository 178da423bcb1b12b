use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use bartcs::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Focal {
    Treated,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Example1d,
    Example2a,
    Example2b,
    Profiling,
}

/// Flags shared by every subcommand. Any flag left unset falls back to the
/// `--config` file and then to the built-in default.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON file with any of the options below (flags take precedence)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV with covariates, treatment and outcome columns
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub treatment_col: Option<String>,
    #[arg(long)]
    pub outcome_col: Option<String>,
    /// Group whose effect is estimated and whose units may be discarded
    #[arg(long, value_enum)]
    pub focal: Option<Focal>,
    /// Discard rules: d1 (1 sd), d2 (alpha 0.10), d3 (alpha 0.05), ps (propensity range)
    #[arg(long, value_delimiter = ',')]
    pub rules: Option<Vec<String>>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `all`, `desk`, or a comma-separated list of cell ids
    #[arg(long)]
    pub cells: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Simulated dataset to analyze instead of `--input`
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Maximum depth of profiling trees
    #[arg(long)]
    pub depth: Option<usize>,
    /// Units per simulated dataset
    #[arg(long)]
    pub n: Option<usize>,
    /// Interaction strength of the example2b preset
    #[arg(long)]
    pub phi: Option<f64>,
    /// Also write per-unit posterior summaries
    #[arg(long)]
    pub unit_summaries: bool,
    /// Run simulation replications one after another
    #[arg(long)]
    pub sequential: bool,
}

/// Fully resolved options; this is what gets echoed into artifact headers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treatment_col: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_col: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal: Option<Focal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trees: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burnin: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_summaries: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequential: Option<bool>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($field:ident),*) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field.clone(); } )*
    };
}

impl RunConfig {
    pub fn load(flags: &Flags, subcommand: &str) -> Result<RunConfig> {
        let mut cfg = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str::<RunConfig>(&text).map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if cfg.subcommand.as_deref().is_some_and(|s| s != subcommand) {
            return Err(Error::ConfigInvalid(format!("config file is for `{}`", cfg.subcommand.as_deref().unwrap_or_default())));
        }
        cfg.subcommand = Some(subcommand.to_owned());
        overlay!(cfg, flags, input, treatment_col, outcome_col, focal, rules, trees, iters, burnin, seed, out, cells, reps, methods, preset, depth, n, phi);
        if flags.unit_summaries {
            cfg.unit_summaries = Some(true);
        }
        if flags.sequential {
            cfg.sequential = Some(true);
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    /// Comment line echoing the fully resolved options.
    pub fn header(&self) -> String {
        format!("# bartcs {} config: {}\n", env!("CARGO_PKG_VERSION"), serde_json::to_string(self).expect("config serializes"))
    }
}
