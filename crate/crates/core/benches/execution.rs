//! Serial vs rayon execution of a federated round and of test-set evaluation.
//! Build with `--no-default-features` to measure the sequential fallback.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedtrans::data::{split_paired_unpaired, synth_dataset, Sample};
use fedtrans::exec::Execution;
use fedtrans::federation::{
    evaluate, run_round, ClientState, ModelConfig, RoundConfig, ServerState,
};
use fedtrans::models::{DiscriminatorConfig, GeneratorConfig};

fn models() -> ModelConfig {
    ModelConfig {
        generator: GeneratorConfig {
            image_size: 16,
            channels: vec![8, 16],
            latent_tap_index: 5,
        },
        discriminator: DiscriminatorConfig {
            image_size: 16,
            channels: vec![8],
        },
    }
}

fn clients(n: usize) -> Vec<ClientState> {
    (0..n)
        .map(|k| {
            let s: Vec<Arc<Sample>> = synth_dataset(8, 16, k as u64)
                .unwrap()
                .into_iter()
                .map(Arc::new)
                .collect();
            let ds = Arc::new(split_paired_unpaired(&s, 0.5, k as u64).unwrap());
            ClientState::new(k, 1.0 / n as f64, ds, &models(), 1).unwrap()
        })
        .collect()
}

const MODES: [(&str, Execution); 2] = [
    ("serial", Execution::Serial),
    ("parallel", Execution::Parallel),
];

fn round(c: &mut Criterion) {
    let cfg = RoundConfig {
        local_epochs: 1,
        ..RoundConfig::default()
    };
    let mut group = c.benchmark_group("round_4_clients");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter_batched(
                || (ServerState::new(&models(), 1).unwrap(), clients(4)),
                |(mut server, mut cs)| {
                    run_round(&mut server, &mut cs, &cfg, 1, &[], exec, None).unwrap()
                },
                criterion::BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let server = ServerState::new(&models(), 1).unwrap();
    let test = synth_dataset(64, 16, 99).unwrap();
    let mut group = c.benchmark_group("evaluate_64");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| evaluate(&server.gen_ab, &server.gen_ba, &test, 1, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, round, evaluation);
criterion_main!(benches);
