use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use touchstone_core::neuro::{batch_gradient, predict, prepare_input, AugmentParams, HardnessModel, ModelConfig};
use touchstone_core::par::Exec;
use touchstone_core::tactile::dataset::{object_set, random_fruits};
use touchstone_core::tactile::GelConfig;

const MODES: [(&str, Exec); 2] = [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)];

fn clip_generation(c: &mut Criterion) {
    let gel = GelConfig::default();
    let fruits = random_fruits(8, 1, 0);
    let mut g = c.benchmark_group("clip-generation");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| object_set("bench", 0, &fruits, 2, &gel, 7, exec).unwrap())
        });
    }
    g.finish();
}

fn training_step(c: &mut Criterion) {
    let gel = GelConfig::default();
    let samples = object_set("bench", 0, &random_fruits(8, 2, 0), 1, &gel, 3, Exec::Parallel).unwrap();
    let model = HardnessModel::new(ModelConfig::default(), 1).unwrap();
    let inputs: Vec<Vec<f64>> =
        samples.iter().map(|s| prepare_input(&s.clip, &model.config, &AugmentParams::IDENTITY).unwrap()).collect();
    let labels: Vec<f64> = samples.iter().map(|s| s.hardness).collect();
    let seeds: Vec<u64> = (0..inputs.len() as u64).collect();

    let mut g = c.benchmark_group("batch-gradient");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| batch_gradient(&model, &inputs, &labels, &seeds, exec).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("predict");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| predict(&model, &samples, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, clip_generation, training_step);
criterion_main!(benches);
