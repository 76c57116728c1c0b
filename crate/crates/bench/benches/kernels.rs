use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use trb_bench::{desk_model, scenes};
use trb_core::metrics::evaluate;
use trb_core::synth::GenConfig;
use trb_core::{
    generate_dataset, min_ade, train, ConstantVelocity, HorizonSet, PredictionSet, Predictor, RecurrentModel, TrainConfig,
    Vec2,
};

fn bench_min_ade(c: &mut Criterion) {
    let h = HorizonSet::default();
    let gt: Vec<Vec2> = (0..80).map(|i| Vec2::new(i as f64, 0.5 * i as f64)).collect();
    let mut group = c.benchmark_group("min_ade");
    for k in [1usize, 6] {
        let pred = PredictionSet {
            modes: (0..k).map(|m| gt.iter().map(|p| *p + Vec2::new(m as f64, 0.0)).collect()).collect(),
            probabilities: vec![1.0 / k as f64; k],
            covariances: None,
        };
        group.bench_with_input(BenchmarkId::from_parameter(k), &pred, |b, pred| {
            b.iter(|| min_ade(black_box(pred), black_box(&gt), &h).unwrap())
        });
    }
    group.finish();
}

fn bench_forward(c: &mut Criterion) {
    let data = scenes(4);
    let h = HorizonSet::default();
    let mut group = c.benchmark_group("predict");
    group.bench_function("cv", |b| b.iter(|| ConstantVelocity.predict(&data[0], data[0].targets[0], &h).unwrap()));
    for env in [false, true] {
        let model = RecurrentModel::new(desk_model(env)).unwrap();
        let name = if env { "recurrent_env" } else { "recurrent" };
        group.bench_function(name, |b| b.iter(|| model.predict(&data[0], data[0].targets[0], &h).unwrap()));
    }
    group.finish();
}

fn bench_train_epoch(c: &mut Criterion) {
    let data = scenes(16);
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("epoch_16_scenes", |b| {
        b.iter(|| train(RecurrentModel::new(desk_model(true)).unwrap(), &data, &cfg).unwrap())
    });
    group.finish();
}

fn bench_pipeline(c: &mut Criterion) {
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.bench_function("generate_50", |b| {
        b.iter(|| {
            generate_dataset(&GenConfig {
                scenes: 50,
                seed: 3,
                ..GenConfig::default()
            })
            .unwrap()
        })
    });
    let data = scenes(50);
    let h = HorizonSet::default();
    group.bench_function("evaluate_cv_50", |b| b.iter(|| evaluate(&ConstantVelocity, &data, None, &h)));
    group.finish();
}

criterion_group!(benches, bench_min_ade, bench_forward, bench_train_epoch, bench_pipeline);
criterion_main!(benches);
