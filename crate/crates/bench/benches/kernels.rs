use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use embryo_core::autoencoder::{build_autoencoder, EncoderSpec};
use embryo_core::eval::{bootstrap_auc, roc_auc, ScoredExample};
use embryo_core::nn::{conv2d, conv2d_backward, init_lstm, lstm_step, LstmParams};
use embryo_core::record::Frame;
use embryo_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = random(&[8, 16, 16], &mut rng);
    let k = random(&[16, 8, 3, 3], &mut rng);
    let y = conv2d(&x, &k, 2, 1).unwrap();
    let g = random(y.shape(), &mut rng);
    c.bench_function("conv2d 8x16x16 -> 16, s2", |b| {
        b.iter(|| conv2d(black_box(&x), &k, 2, 1).unwrap())
    });
    c.bench_function("conv2d backward 8x16x16 -> 16, s2", |b| {
        b.iter(|| conv2d_backward(black_box(&g), &x, &k, 2, 1).unwrap())
    });

    let model = build_autoencoder(&EncoderSpec::desk(), 0).unwrap();
    let frame = Frame::new(Tensor::from_fn(&[1, 32, 32], |_| rng.random())).unwrap();
    c.bench_function("desk encoder, one 32x32 frame", |b| {
        b.iter(|| model.encode_raw(black_box(&frame)).unwrap())
    });
}

fn lstm(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = init_lstm("trunk", 32, 64, &mut rng);
    let view = LstmParams::from_set(&params, "trunk").unwrap();
    let xs: Vec<Tensor> = (0..16).map(|_| random(&[32], &mut rng)).collect();
    c.bench_function("lstm 16 steps, 32 -> 64", |b| {
        b.iter(|| {
            let (mut h, mut cell) = (Tensor::zeros(&[64]), Tensor::zeros(&[64]));
            for x in &xs {
                (h, cell) = lstm_step(black_box(x), &h, &cell, &view).unwrap();
            }
            h
        })
    });
}

fn auc(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ex: Vec<ScoredExample> = (0..272)
        .map(|i| {
            let label = i < 216;
            ScoredExample::new(rng.random::<f64>() + if label { 0.3 } else { 0.0 }, label)
        })
        .collect();
    c.bench_function("roc_auc n=272", |b| b.iter(|| roc_auc(black_box(&ex)).unwrap()));
    let mut group = c.benchmark_group("bootstrap");
    group.sample_size(10);
    group.bench_function("bootstrap_auc n=272 reps=1000", |b| {
        b.iter(|| bootstrap_auc(black_box(&ex), 1000, 0).unwrap())
    });
    group.finish();
}

criterion_group!(benches, conv, lstm, auc);
criterion_main!(benches);
