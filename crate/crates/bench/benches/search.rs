use criterion::{criterion_group, criterion_main, Criterion};

use noise_search::search::{run_search, Algorithm, SearchConfig};
use noise_search::singular::{decompose, reconstruct};
use noise_search::TensorShape;
use noise_search_bench::{noise, toy_objective};

fn svd(c: &mut Criterion) {
    let x = noise(&TensorShape::trellis(), 0);
    c.bench_function("decompose 8x64x64", |b| b.iter(|| decompose(&x).unwrap()));
    let space = decompose(&x).unwrap();
    let pivot = space.pivot();
    c.bench_function("reconstruct 8x64x64 + gn", |b| b.iter(|| reconstruct(&space, &pivot, true).unwrap()));
}

fn evaluation(c: &mut Criterion) {
    let (shape, objective) = toy_objective();
    let x = noise(&shape, 1);
    c.bench_function("toy sample + score (20 steps)", |b| b.iter(|| objective.evaluate(&x).unwrap()));
}

fn iteration(c: &mut Criterion) {
    let (shape, objective) = toy_objective();
    let mut group = c.benchmark_group("one iteration");
    group.sample_size(20);
    for alg in [Algorithm::ZeroOrder, Algorithm::Firefly] {
        let mut cfg = SearchConfig::defaults(alg);
        cfg.iterations = 1;
        group.bench_function(format!("{alg:?}"), |b| b.iter(|| run_search(&cfg, &shape, objective.as_ref()).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, svd, evaluation, iteration);
criterion_main!(benches);
