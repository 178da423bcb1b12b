use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bartcs::bart::{individual_effect_draws, posterior_summary};
use bartcs::pipeline::{Method, Pipeline};
use bartcs::profile::{fit_cart, node_assignments, one_sd_margin, propensity_margin, ratio_stat, render_tree, ProfileResponse, DEFAULT_MIN_LEAF};
use bartcs::simulate::{gen_example_1d, gen_example_2a, gen_example_2b, gen_profiling_example, run_study_with_progress, ScenarioConfig, StudyConfig};
use bartcs::support::{DiscardReport, Rule};
use bartcs::estimators::Estimand;
use bartcs::{load_csv, BartConfig, Dataset, Error, Execution, Group, Result, Seed};

use crate::config::{Flags, Focal, Preset, RunConfig};

const ALL_RULES: [&str; 4] = ["d1", "d2", "d3", "ps"];

pub fn run(subcommand: &str, flags: &Flags) -> Result<()> {
    let mut cfg = RunConfig::load(flags, subcommand)?;
    let out = cfg.out.clone().ok_or_else(|| Error::ConfigInvalid("--out is required".into()))?;
    let files = match subcommand {
        "analyze" => analyze(&mut cfg)?,
        "simulate" => simulate(&mut cfg)?,
        "profile" => profile(&mut cfg)?,
        other => return Err(Error::ConfigInvalid(format!("unknown subcommand `{other}`"))),
    };
    write_all(&out, &files)
}

/// Writes every artifact or none of them.
fn write_all(dir: &Path, files: &[(&str, String)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        if let Err(e) = std::fs::write(&path, body) {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            let _ = std::fs::remove_file(&path);
            return Err(e.into());
        }
        written.push(path);
    }
    Ok(())
}

fn code_of(rule: Rule) -> &'static str {
    match rule {
        Rule::OneSd => "d1",
        Rule::Ratio10 => "d2",
        Rule::Ratio05 => "d3",
        Rule::PropensityRange => "ps",
    }
}

fn estimand_name(e: Estimand) -> &'static str {
    match e {
        Estimand::Treated => "ATT",
        Estimand::Controls => "ATC",
        Estimand::All => "ATE",
    }
}

fn rule_of(code: &str) -> Result<Rule> {
    match code {
        "d1" => Ok(Rule::OneSd),
        "d2" => Ok(Rule::Ratio10),
        "d3" => Ok(Rule::Ratio05),
        "ps" => Ok(Rule::PropensityRange),
        _ => Err(Error::ConfigInvalid(format!("unknown rule `{code}` (expected d1, d2, d3 or ps)"))),
    }
}

fn resolve_rules(cfg: &mut RunConfig, default: &[&str]) -> Result<Vec<Rule>> {
    let codes = cfg.rules.get_or_insert_with(|| default.iter().map(|s| s.to_string()).collect());
    let mut rules = Vec::new();
    for c in codes.iter() {
        let r = rule_of(c)?;
        if !rules.contains(&r) {
            rules.push(r);
        }
    }
    if rules.is_empty() {
        return Err(Error::ConfigInvalid("no rules selected".into()));
    }
    Ok(rules)
}

fn resolve_bart(cfg: &mut RunConfig) -> Result<BartConfig> {
    let d = BartConfig::default();
    let bart = BartConfig {
        num_trees: *cfg.trees.get_or_insert(d.num_trees),
        iterations: *cfg.iters.get_or_insert(d.iterations),
        burn_in: *cfg.burnin.get_or_insert(d.burn_in),
        ..d
    };
    bart.validate()?;
    Ok(bart)
}

fn resolve_focal(cfg: &mut RunConfig) -> Group {
    match cfg.focal.get_or_insert(Focal::Treated) {
        Focal::Treated => Group::Treated,
        Focal::Control => Group::Control,
    }
}

/// The dataset to analyze, read from `--input` or drawn from `--preset`.
fn resolve_data(cfg: &mut RunConfig) -> Result<Dataset> {
    let tcol = cfg.treatment_col.get_or_insert_with(|| "z".into()).clone();
    let ycol = cfg.outcome_col.get_or_insert_with(|| "y".into()).clone();
    let seed = Seed(*cfg.seed.get_or_insert(1));
    match (&cfg.input, cfg.preset) {
        (Some(path), None) => load_csv(path, &tcol, &ycol),
        (None, Some(preset)) => {
            let generated = match preset {
                Preset::Example1d => gen_example_1d(*cfg.n.get_or_insert(120), seed)?,
                Preset::Example2a => gen_example_2a(*cfg.n.get_or_insert(220), seed)?,
                Preset::Example2b => gen_example_2b(*cfg.n.get_or_insert(220), *cfg.phi.get_or_insert(1.0), seed)?,
                Preset::Profiling => gen_profiling_example(seed)?,
            };
            Ok(generated.dataset)
        }
        (Some(_), Some(_)) => Err(Error::ConfigInvalid("give either --input or --preset, not both".into())),
        (None, None) => Err(Error::ConfigInvalid("--input or --preset is required".into())),
    }
}

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

fn methods_for(rules: &[Rule]) -> Vec<Method> {
    Method::ANALYSIS.into_iter().filter(|m| m.rule().is_none_or(|r| rules.contains(&r))).collect()
}

fn analyze(cfg: &mut RunConfig) -> Result<Vec<(&'static str, String)>> {
    let data = resolve_data(cfg)?;
    let focal = resolve_focal(cfg);
    let rules = resolve_rules(cfg, &ALL_RULES)?;
    let bart = resolve_bart(cfg)?;
    cfg.unit_summaries.get_or_insert(false);
    let seed = Seed(cfg.seed());
    let header = cfg.header();

    let mut pipe = Pipeline::new(&data, focal, bart, seed);
    let mut effects = header.clone();
    effects.push_str("method,estimand,estimate,uncertainty,lo,hi,n_focal_retained,n_discarded,flags\n");
    for m in methods_for(&rules) {
        let e = pipe.run(m)?.estimate;
        let _ = writeln!(
            effects,
            "{},{},{},{},{},{},{},{},{}",
            e.method,
            estimand_name(e.estimand),
            e.point,
            e.uncertainty,
            e.lo,
            e.hi,
            e.n_focal_retained,
            e.n_discarded,
            e.flags.join(";")
        );
    }

    let reports: Vec<DiscardReport> = rules.iter().map(|&r| pipe.discard(r)).collect::<Result<_>>()?;
    let mut discards = header.clone();
    let cu = pipe.uncertainty()?;
    let _ = writeln!(
        discards,
        "# mean observed-arm sd: treated {} control {}",
        cu.mean_observed(Group::Treated),
        cu.mean_observed(Group::Control)
    );
    discards.push_str("unit,z");
    for r in &reports {
        let _ = write!(discards, ",{0}_stat,{0}_discard", code_of(r.rule));
    }
    discards.push('\n');
    for i in 0..data.n() {
        let _ = write!(discards, "{},{}", i + 1, data.z()[i]);
        for r in &reports {
            let _ = write!(discards, ",{},{}", num(r.statistic[i]), u8::from(r.discard[i]));
        }
        discards.push('\n');
    }

    let surface = pipe.surface()?;
    let mut trace = header.clone();
    trace.push_str("iteration,sigma,burn_in\n");
    for (it, s) in surface.sigma_trace.iter().enumerate() {
        let _ = writeln!(trace, "{},{},{}", it + 1, s, u8::from(it < bart.burn_in));
    }

    let mut files = vec![("effects.csv", effects), ("discards.csv", discards), ("sigma_trace.csv", trace)];
    if cfg.unit_summaries == Some(true) {
        let f0 = posterior_summary(&surface.f0_draws, 0.95)?;
        let f1 = posterior_summary(&surface.f1_draws, 0.95)?;
        let d = posterior_summary(&individual_effect_draws(surface), 0.95)?;
        let mut units = header.clone();
        units.push_str("unit,z,f0_mean,f0_sd,f1_mean,f1_sd,effect_mean,effect_lo,effect_hi\n");
        for i in 0..data.n() {
            let _ = writeln!(units, "{},{},{},{},{},{},{},{},{}", i + 1, data.z()[i], f0[i].mean, f0[i].sd, f1[i].mean, f1[i].sd, d[i].mean, d[i].lo, d[i].hi);
        }
        files.push(("unit_summaries.csv", units));
    }
    if cfg.preset.is_some() {
        let mut buf = Vec::new();
        data.write_csv(&mut buf, cfg.treatment_col.as_deref().unwrap_or("z"), cfg.outcome_col.as_deref().unwrap_or("y"))?;
        files.push(("data.csv", header + &String::from_utf8(buf).expect("csv output is utf-8")));
    }
    Ok(files)
}

fn resolve_cells(cfg: &mut RunConfig) -> Result<Vec<ScenarioConfig>> {
    let n = *cfg.n.get_or_insert(bartcs::simulate::scenario::DEFAULT_SCENARIO_N);
    let spec = cfg.cells.get_or_insert_with(|| "desk".into()).clone();
    let cells = match spec.as_str() {
        "all" => ScenarioConfig::all(n),
        "desk" => ScenarioConfig::desk(n),
        list => list.split(',').map(|id| id.trim().parse::<ScenarioConfig>().map(|c| ScenarioConfig { n, ..c })).collect::<Result<_>>()?,
    };
    for c in &cells {
        c.validate()?;
    }
    Ok(cells)
}

fn simulate(cfg: &mut RunConfig) -> Result<Vec<(&'static str, String)>> {
    let cells = resolve_cells(cfg)?;
    let names = cfg.methods.get_or_insert_with(|| Method::STUDY.iter().map(|m| m.name().to_owned()).collect()).clone();
    let methods: Vec<Method> = names.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    let reps = *cfg.reps.get_or_insert(50);
    let bart = resolve_bart(cfg)?;
    let seed = Seed(*cfg.seed.get_or_insert(1));
    let sequential = *cfg.sequential.get_or_insert(false);
    let header = cfg.header();

    let mut study = StudyConfig::new(cells, methods, reps, seed);
    study.bart = bart;
    study.execution = if sequential { Execution::Sequential } else { Execution::Parallel };
    let step = (study.cells.len() * reps / 20).max(1);
    let metrics = run_study_with_progress(&study, &|done, total| {
        if done % step == 0 || done == total {
            eprintln!("simulate: {done}/{total} replications");
        }
    })?;
    let mut buf = Vec::new();
    metrics.write_csv(&mut buf)?;
    Ok(vec![("metrics.csv", header + &String::from_utf8(buf).expect("csv output is utf-8"))])
}

fn profile(cfg: &mut RunConfig) -> Result<Vec<(&'static str, String)>> {
    let data = resolve_data(cfg)?;
    let focal = resolve_focal(cfg);
    let rules = resolve_rules(cfg, &["d1", "ps"])?;
    let bart = resolve_bart(cfg)?;
    let depth = *cfg.depth.get_or_insert(bartcs::profile::DEFAULT_MAX_DEPTH);
    let header = cfg.header();

    let mut pipe = Pipeline::new(&data, focal, bart, Seed(cfg.seed()));
    let mut text = header.clone();
    let mut responses: Vec<(Rule, ProfileResponse)> = Vec::new();
    for &rule in &rules {
        let response = match rule {
            Rule::OneSd => one_sd_margin(pipe.uncertainty()?, focal)?,
            Rule::Ratio10 | Rule::Ratio05 => ratio_stat(pipe.uncertainty()?, focal)?,
            Rule::PropensityRange => propensity_margin(&pipe.propensity()?.pscores, data.z(), focal)?,
        };
        responses.push((rule, response));
    }
    let mut nodes = header;
    nodes.push_str("unit");
    let mut leaves = Vec::new();
    for (rule, response) in &responses {
        let rows = response.rows_of(data.x());
        let tree = fit_cart(&rows, response, depth, DEFAULT_MIN_LEAF)?;
        let _ = writeln!(text, "\n[{}] {} response: {}", code_of(*rule), rule.name(), response.kind.name());
        text.push_str(&render_tree(&tree, data.names()));
        let _ = write!(nodes, ",{}_node", code_of(*rule));
        leaves.push(node_assignments(&tree, &rows));
    }
    nodes.push('\n');
    let units = &responses[0].1.units;
    for (k, unit) in units.iter().enumerate() {
        let _ = write!(nodes, "{}", unit + 1);
        for l in &leaves {
            let _ = write!(nodes, ",{}", l[k]);
        }
        nodes.push('\n');
    }
    print!("{text}");
    Ok(vec![("trees.txt", text), ("nodes.csv", nodes)])
}
