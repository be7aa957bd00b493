use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use saddlemix_bench::{sampler, simulation, window_chain};
use saddlemix_core::markov::{derive_rng, SampleStream, StartState};
use saddlemix_core::simulation::{build_stream, iid_sampler, Regime, ReplaySettings};
use saddlemix_core::{primal_dual_gap, run_sgd, SaddlePoint, StepSchedule};

fn sgd_loop(c: &mut Criterion) {
    let inst = simulation(1001);
    let chain = window_chain(1001, 503, 0.003);
    let markov = sampler(&chain);
    let iid = iid_sampler(chain.stationary()).unwrap();
    let schedule = StepSchedule::constant(0.001).unwrap();
    let horizon = 10_000;
    let start = SaddlePoint::zeros(10, 10);
    let mut group = c.benchmark_group("run_sgd");
    group.throughput(Throughput::Elements(horizon as u64));
    group.bench_function("markov", |b| {
        b.iter(|| {
            let mut s = SampleStream::markov(markov.clone(), StartState::Stationary, derive_rng(0, 1)).unwrap();
            run_sgd(&inst, &mut s, &schedule, horizon, &start, &[]).unwrap()
        })
    });
    group.bench_function("markov_replay", |b| {
        let replay = Some(ReplaySettings { capacity: None, warmup: 1 });
        b.iter(|| {
            let mut s = build_stream(&Regime::Chain(markov.clone()), &iid, replay, 0).unwrap();
            run_sgd(&inst, &mut s, &schedule, horizon, &start, &[]).unwrap()
        })
    });
    group.finish();
}

fn gap(c: &mut Criterion) {
    let mut group = c.benchmark_group("primal_dual_gap");
    for dim in [2usize, 10, 50] {
        let inst = saddlemix_core::SimulationInstance::generate(
            saddlemix_core::SimulationSpec { dim, states: 11, ..Default::default() },
            &saddlemix_core::markov::uniform(11),
        )
        .unwrap();
        let z = SaddlePoint::new(nalgebra::DVector::from_element(dim, 3.0), nalgebra::DVector::from_element(dim, -3.0));
        group.bench_with_input(BenchmarkId::from_parameter(dim), &dim, |b, _| {
            b.iter(|| primal_dual_gap(inst.expected(), &z).unwrap().gap)
        });
    }
    group.finish();
}

criterion_group!(benches, sgd_loop, gap);
criterion_main!(benches);
