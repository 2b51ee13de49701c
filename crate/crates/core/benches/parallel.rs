use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rti_nmpc::controller::ControllerMode;
use rti_nmpc::par::Execution;
use rti_nmpc::sim::{run_batch, ClosedLoop, ScenarioConfig};

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

/// Controller state after a short warm-up on the nominal scenario.
fn warmed_loop(horizon: usize) -> ClosedLoop {
    let s = ScenarioConfig {
        horizon,
        ..ScenarioConfig::nominal()
    };
    let mut run = ClosedLoop::new(&s, ControllerMode::Rti).unwrap();
    for _ in 0..25 {
        run.step();
    }
    run
}

fn linearization(c: &mut Criterion) {
    let mut group = c.benchmark_group("linearize");
    for horizon in [15, 60] {
        let mut run = warmed_loop(horizon);
        for exec in MODES {
            run.controller.config.execution = exec;
            let controller = run.controller.clone();
            group.bench_with_input(BenchmarkId::new(exec.as_str(), horizon), &controller, |b, ctl| {
                b.iter(|| ctl.linearize().unwrap())
            });
        }
    }
    group.finish();
}

fn batch(c: &mut Criterion) {
    let runs: Vec<_> = (1..=8)
        .map(|seed| {
            (
                ScenarioConfig {
                    duration: 1.0,
                    seed,
                    ..ScenarioConfig::nominal()
                },
                ControllerMode::Rti,
            )
        })
        .collect();
    let mut group = c.benchmark_group("batch_8_runs");
    group.sample_size(10);
    for exec in MODES {
        group.bench_function(exec.as_str(), |b| b.iter(|| run_batch(&runs, exec)));
    }
    group.finish();
}

fn controller_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("closed_loop_step");
    group.sample_size(20);
    for mode in [ControllerMode::Rti, ControllerMode::Sqp] {
        for exec in MODES {
            let mut base = warmed_loop(15);
            base.controller.config.mode = mode;
            base.controller.config.execution = exec;
            let id = BenchmarkId::new(mode.as_str(), exec.as_str());
            group.bench_function(id, |b| {
                b.iter_batched(
                    || base.controller.clone(),
                    |mut ctl| {
                        let x = ctl.state.state_guess[0].clone();
                        let r: Vec<_> = ctl
                            .state
                            .state_guess
                            .iter()
                            .map(|s| nalgebra::DVector::from_vec(vec![s[0], s[1], s[3]]))
                            .collect();
                        ctl.step(&x, &r).unwrap()
                    },
                    criterion::BatchSize::SmallInput,
                )
            });
        }
    }
    group.finish();
}

criterion_group!(benches, linearization, batch, controller_step);
criterion_main!(benches);
