use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use fpml::analysis::{golden_section_max, random_t, GOLDEN_TOL};
use fpml::model::{Activation, MlpSpec, NetworkModel, OutputHead, TrainConfig};
use fpml::objective::{jf_batch, ObjectiveConfig};
use fpml::{make_synthetic, train, ConjugateGrid, Divergence};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn objective_batch(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (n, k) = (1024, 10);
    for div in Divergence::ALL {
        let t = Array2::from_shape_fn((n, k), |_| random_t(div, &mut rng));
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        c.bench_function(&format!("jf_batch/{div}/1024x10"), |b| {
            b.iter(|| jf_batch(div, black_box(t.view()), black_box(&labels)).unwrap())
        });
    }
}

fn conjugate_grid(c: &mut Criterion) {
    let grid = ConjugateGrid::new(Divergence::Gan, 1e3, 100_000).unwrap();
    c.bench_function("conjugate_grid_sup/gan/1e5", |b| {
        b.iter(|| grid.sup(black_box(-0.7)).unwrap())
    });
}

fn golden_section(c: &mut Criterion) {
    for div in Divergence::ALL {
        c.bench_function(&format!("golden_section_max/{div}"), |b| {
            b.iter(|| golden_section_max(div, black_box(0.6), black_box(0.9), GOLDEN_TOL).unwrap())
        });
    }
}

fn training_epoch(c: &mut Criterion) {
    let (ds, _) = make_synthetic(3, 2000, 10, 4.0, 0).unwrap();
    let spec = MlpSpec {
        layer_sizes: vec![10, 32, 3],
        activation: Activation::Relu,
        head: OutputHead::SimplexD,
    };
    let init = NetworkModel::init(spec, 0).unwrap();
    let objective = ObjectiveConfig::plain(Divergence::Kl);
    let config = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    c.bench_function("train_epoch/kl/simplex/2000x10", |b| {
        b.iter_batched(
            || init.clone(),
            |m| train(m, &ds, None, &objective, &config).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(
    benches,
    objective_batch,
    conjugate_grid,
    golden_section,
    training_epoch
);
criterion_main!(benches);
