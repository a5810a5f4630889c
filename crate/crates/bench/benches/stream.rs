//! Amortized per-push cost of the streaming scorer at different re-solve
//! intervals.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rtad_bench::seasonal_series;
use rtad_core::net::{NetConfig, Network};
use rtad_core::stream::{StreamConfig, StreamState};

const PUSHES: usize = 64;

fn bench_stream(c: &mut Criterion) {
    let net_config = NetConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = Network::new(net_config, &mut rng).unwrap();

    let history = seasonal_series(960, 24);
    let feed = seasonal_series(960 + PUSHES, 24);
    let feed = &feed[960..];

    let mut group = c.benchmark_group("stream");
    group.throughput(Throughput::Elements(PUSHES as u64));
    group.sample_size(10);
    for q in [1usize, 5, 20] {
        let config = StreamConfig {
            resolve_every: q,
            ..StreamConfig::default()
        };
        group.bench_with_input(BenchmarkId::new("push", q), &config, |b, config| {
            b.iter_batched(
                || StreamState::new(net.clone(), config.clone(), &history).unwrap(),
                |mut state| {
                    for &value in feed {
                        black_box(state.push(black_box(value)).unwrap());
                    }
                },
                criterion::BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, bench_stream);
criterion_main!(benches);
