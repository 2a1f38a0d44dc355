use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use proxymix_bench::fixture;
use proxymix_core::eval::{evaluate, fuse_scores};
use proxymix_core::trainer::StepRng;
use proxymix_core::{best_mix, forward, mix_pair, train_step, FusionParams, Group, TrainConfig};

fn kernels(c: &mut Criterion) {
    let fx = fixture();
    let reg = &fx.bench.registry;
    let base: Vec<_> = reg.in_group(Group::Base).collect();

    c.bench_function("mix_pair", |b| {
        b.iter(|| {
            mix_pair(
                &fx.prototypes[0],
                &fx.prototypes[1],
                &base[0].text_embedding,
                &base[1].text_embedding,
                black_box(0.37),
            )
            .unwrap()
        })
    });

    let candidates: Vec<(u32, &[f64])> = base.iter().map(|r| (r.id, &r.text_embedding[..])).collect();
    let target = &reg.in_group(Group::Novel).next().unwrap().text_embedding;
    c.bench_function("best_mix", |b| b.iter(|| best_mix(black_box(&candidates), target).unwrap()));

    let config = TrainConfig::default();
    let batch: Vec<_> = fx.bench.train.samples.iter().step_by(8).take(config.batch_size).collect();
    c.bench_function("train_step", |b| {
        b.iter_batched(
            || (fx.heads.clone(), StepRng::from_seed(3)),
            |(mut heads, mut rng)| train_step(&mut heads, &batch, reg, &config, &mut rng).unwrap(),
            criterion::BatchSize::SmallInput,
        )
    });

    let sample = &fx.bench.eval.samples[0];
    let rp = forward(&fx.heads.proxy, &sample.feature).unwrap();
    let rb = forward(&fx.heads.bce, &sample.feature).unwrap();
    let params = FusionParams::default();
    c.bench_function("fuse_scores", |b| b.iter(|| fuse_scores(black_box(&rp), &rb, reg, &params).unwrap()));

    c.bench_function("evaluate", |b| {
        b.iter(|| evaluate(&fx.heads, &fx.bench.eval.samples, reg, &params).unwrap())
    });
}

criterion_group!(benches, kernels);
criterion_main!(benches);
