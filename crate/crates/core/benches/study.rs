use bartcs::pipeline::Method;
use bartcs::simulate::scenario::ScenarioConfig;
use bartcs::simulate::{run_study, StudyConfig};
use bartcs::{BartConfig, Execution, Seed};
use criterion::{criterion_group, criterion_main, Criterion};

fn small_study(execution: Execution) -> StudyConfig {
    let cells = ScenarioConfig::desk(150).into_iter().take(2).collect();
    let mut cfg = StudyConfig::new(cells, vec![Method::Bart, Method::BartD1, Method::MatchDRe, Method::Ols], 4, Seed(7));
    cfg.bart = BartConfig { num_trees: 20, iterations: 200, burn_in: 50, ..BartConfig::default() };
    cfg.execution = execution;
    cfg
}

fn study(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_study");
    group.sample_size(10);
    for (name, execution) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        let cfg = small_study(execution);
        group.bench_function(name, |b| b.iter(|| run_study(&cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, study);
criterion_main!(benches);
