//! Criterion benchmarks of the design pipeline on a fixed desk-scale drop.

use criterion::{black_box, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rsma_core::clustering::cluster_subsets;
use rsma_core::evaluation::{mc_expected_rates, sample_drop, DropSeeds};
use rsma_core::optimizer::{init_design, mm_optimize, rank1_project, PowerModel};
use rsma_core::{ChannelSet, SchemeSpec, SolverSettings, SystemConfig};

fn drop() -> (SystemConfig, ChannelSet) {
    let cfg = SystemConfig::default();
    let channels = sample_drop(&cfg, DropSeeds::new(42, 0)).unwrap();
    (cfg, channels)
}

pub fn bench_clustering(c: &mut Criterion) {
    let cfg = SystemConfig { num_ues: 8, ..Default::default() };
    let channels = sample_drop(&cfg, DropSeeds::new(42, 0)).unwrap();
    c.bench_function("cluster_k8", |b| b.iter(|| cluster_subsets(black_box(&channels)).unwrap()));
}

pub fn bench_mm(c: &mut Criterion) {
    let (cfg, channels) = drop();
    let settings = SolverSettings::default();
    let mut group = c.benchmark_group("mm");
    group.sample_size(10);
    let sdma = SchemeSpec::sdma(cfg.num_ues);
    group.bench_function("sdma", |b| b.iter(|| mm_optimize(&sdma, &channels, &cfg, &settings).unwrap()));
    let rsma = cluster_subsets(&channels).unwrap();
    group.bench_function("rsma_k_minus_1", |b| b.iter(|| mm_optimize(&rsma, &channels, &cfg, &settings).unwrap()));
    group.finish();
}

pub fn bench_monte_carlo(c: &mut Criterion) {
    let (cfg, channels) = drop();
    let spec = cluster_subsets(&channels).unwrap();
    let power = PowerModel::from_config(&cfg).unwrap();
    let (_, design) = rank1_project(&init_design(&spec, &channels, &power), power.beta).unwrap();
    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(20);
    group.bench_function("rsma_1e4", |b| {
        b.iter(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            mc_expected_rates(&design, &channels, &spec, cfg.noise_power, None, 10_000, &mut rng).unwrap()
        })
    });
    group.finish();
}
