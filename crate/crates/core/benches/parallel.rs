//! Sequential vs data-parallel execution of the three hot loops.
//!
//! Built without the `parallel` feature both variants run sequentially,
//! which gives the fallback's overhead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use hybridfem::data::{generate_dataset, Family};
use hybridfem::exec::Exec;
use hybridfem::hybrid::{evaluate, train, Model, TrainConfig};
use hybridfem::mesh::MeshHierarchy;
use hybridfem::nn::Mlp;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn generation(c: &mut Criterion) {
    let mut g = c.benchmark_group("generate");
    g.sample_size(10);
    for (n0, l) in [(4, 1), (4, 3)] {
        let m = MeshHierarchy::new(n0, l).unwrap();
        for (name, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(name, format!("n0={n0},l={l}")), &exec, |b, &exec| {
                b.iter(|| generate_dataset(&m, 32, 1, Family::Verbatim, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn training(c: &mut Criterion) {
    let m = MeshHierarchy::new(4, 1).unwrap();
    let data = generate_dataset(&m, 256, 1, Family::Verbatim, Exec::Parallel).unwrap();
    let mut g = c.benchmark_group("train_5_epochs");
    g.sample_size(10);
    for hidden in [vec![64, 64], vec![128, 128, 128, 128]] {
        let label = format!("{}x{}", hidden.len(), hidden[0]);
        for (name, exec) in MODES {
            let cfg = TrainConfig {
                hidden: hidden.clone(),
                epochs: 5,
                exec,
                ..TrainConfig::default()
            };
            g.bench_with_input(BenchmarkId::new(name, &label), &cfg, |b, cfg| {
                b.iter(|| train(&data, None, cfg).unwrap())
            });
        }
    }
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let m = MeshHierarchy::new(4, 2).unwrap();
    let train_set = generate_dataset(&m, 16, 1, Family::Verbatim, Exec::Parallel).unwrap();
    let test_set = generate_dataset(&m, 16, 2, Family::Verbatim, Exec::Parallel).unwrap();
    let stamp = hybridfem::hybrid::Stamp {
        n0: 4,
        level: 2,
        coarse_input: Default::default(),
    };
    let layout = stamp.layout().unwrap();
    let net = Mlp::init(&[layout.input_dim(), 64, 64, layout.output_dim()], 1).unwrap();
    let model = Model::new(net, stamp).unwrap();
    let mut g = c.benchmark_group("evaluate");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| evaluate(&model, &train_set, &test_set, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, generation, training, evaluation);
criterion_main!(benches);
