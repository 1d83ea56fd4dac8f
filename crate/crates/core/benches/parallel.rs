use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use fedrd_core::data::{gen_domains, SynthConfig};
use fedrd_core::federation::run_federation;
use fedrd_core::{ExecMode, FederationConfig, ModelSpec, Strategy};

fn bench_modes(c: &mut Criterion) {
    // Client work has to dwarf the per-round serial part (partitioning,
    // aggregation, held-out evaluation) for the mode comparison to mean
    // anything, hence the fat shards.
    let scfg = SynthConfig {
        num_domains: 4,
        num_classes: 5,
        samples_per_domain: 2000,
        feature_dim: 2,
        domain_rotation_degrees: vec![0.0, 30.0, 60.0, 90.0],
        class_center_radius: 2.0,
        noise_sigma: 0.35,
        dirichlet_alpha: 0.5,
    };
    let domains = gen_domains(&scfg, 7).expect("generation");
    let cfg = FederationConfig {
        num_clients: 6,
        rounds: 2,
        local_epochs: 5,
        batch_size: 32,
        learning_rate: 0.05,
        strategy: Strategy::FedRd,
        tau: 0.5,
        mu: 0.01,
        model: ModelSpec::new(2, vec![24], 5),
        seed: 7,
        held_out_domain: 3,
    };

    let mut group = c.benchmark_group("federation_rounds");
    group.sample_size(10);
    for (name, mode) in [
        ("parallel", ExecMode::Parallel),
        ("sequential", ExecMode::Sequential),
    ] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| run_federation(&cfg, &domains, scfg.dirichlet_alpha, mode).unwrap());
        });
    }
    group.finish();
}

criterion_group!(benches, bench_modes);
criterion_main!(benches);
