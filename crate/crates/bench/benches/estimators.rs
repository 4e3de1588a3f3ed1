use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use ope_bench::{logged, table};
use ope_core::env::{simulate_bandit, AgentConfig, EpsilonSchedule};
use ope_core::estimators::{cadr_estimate, estimate};
use ope_core::models::{fit_linear, fit_tree, TrainingRow};
use ope_core::{normal_quantile, Engine, EstimatorConfig, EstimatorKind, TargetFunctional};

fn quantile(c: &mut Criterion) {
    c.bench_function("normal_quantile", |b| {
        b.iter(|| {
            let mut s = 0.0;
            for i in 1..1000 {
                s += normal_quantile(black_box(i as f64 / 1000.0)).unwrap();
            }
            s
        })
    });
}

fn fits(c: &mut Criterion) {
    let ds = logged(2000, Engine::Linear);
    let rows: Vec<TrainingRow<'_>> = ds
        .observations()
        .iter()
        .map(|o| TrainingRow {
            context: &o.context,
            arm: o.arm,
            reward: o.reward,
        })
        .collect();
    c.bench_function("fit_linear/2000", |b| {
        b.iter(|| fit_linear(black_box(&rows), None).unwrap())
    });
    c.bench_function("fit_tree/2000", |b| {
        b.iter(|| fit_tree(black_box(&rows), None).unwrap())
    });
}

fn simulation(c: &mut Criterion) {
    let t = table(200, 4, 3);
    let mut group = c.benchmark_group("simulate_bandit");
    group.sample_size(10);
    for engine in [Engine::Linear, Engine::Tree] {
        let agent = AgentConfig {
            engine: engine.into(),
            refit_every: 1,
        };
        group.bench_with_input(BenchmarkId::from_parameter(engine), &agent, |b, agent| {
            b.iter(|| simulate_bandit(&t, 1000, &EpsilonSchedule::default(), agent, 3).unwrap())
        });
    }
    group.finish();
}

fn estimators(c: &mut Criterion) {
    let gstar = TargetFunctional::arm(1, 3).unwrap();
    let mut group = c.benchmark_group("estimate");
    group.sample_size(10);
    for rounds in [500, 1000] {
        let ds = logged(rounds, Engine::Tree).into_matrix_form().unwrap();
        group.bench_with_input(BenchmarkId::new("cadr", rounds), &ds, |b, ds| {
            b.iter(|| cadr_estimate(ds, &gstar, &EstimatorConfig::new(EstimatorKind::Cadr)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("dr", rounds), &ds, |b, ds| {
            b.iter(|| estimate(ds, &gstar, &EstimatorConfig::new(EstimatorKind::Dr)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, quantile, fits, simulation, estimators);
criterion_main!(benches);
