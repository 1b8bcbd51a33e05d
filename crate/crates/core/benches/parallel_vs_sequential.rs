//! Instance-level fan-out: the rayon map against the sequential one on a
//! batch of short oracle runs. On a single-core host both take the same time.

use criterion::{criterion_group, criterion_main, Criterion};
use formation_core::experiment::{training_instances, ExperimentSpec};
use formation_core::formation::GainSet;
use formation_core::parallel::map_seq;
use formation_core::sim::{run, Controller, MonitorConfig, SimConfig};

fn bench(c: &mut Criterion) {
    let spec = ExperimentSpec {
        training_trajectories: 8,
        ..ExperimentSpec::exp1(0)
    };
    let instances = training_instances(&spec).expect("instances");
    let sim = SimConfig::with_duration(2.0);
    let mon = MonitorConfig::default();
    let ctrl = Controller::oracle(GainSet::standard(instances[0].n_agents()));
    let job = |_: usize, inst: &formation_core::instance::FormationInstance| {
        run(inst, &ctrl, &sim, &mon).expect("run").last().error_norm()
    };

    let mut group = c.benchmark_group("oracle_runs_x8");
    group.sample_size(10);
    group.bench_function("sequential", |b| b.iter(|| map_seq(&instances, job)));
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| formation_core::parallel::map_par(&instances, job))
    });
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
