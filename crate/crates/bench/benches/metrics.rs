use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use vqaeval::augment::SynonymLookup;
use vqaeval::stats::{krippendorff_alpha, AlphaMetric};
use vqaeval::textmetrics::{formulaic_score, FormulaicMetric, MetricConfig};
use vqaeval::{spearman, AnnotationMatrix};
use vqaeval_bench::{score_vectors, sentence_pairs};

fn formulaic(c: &mut Criterion) {
    let pairs = sentence_pairs(1, 200, 12);
    let cfg = MetricConfig::default();
    let synonyms = SynonymLookup::default();
    let mut group = c.benchmark_group("formulaic_200_pairs");
    for metric in FormulaicMetric::ALL {
        group.bench_with_input(BenchmarkId::from_parameter(metric), &metric, |b, &m| {
            b.iter(|| {
                pairs
                    .iter()
                    .map(|(r, a)| formulaic_score("What is it?", a, r, m, &cfg, &synonyms).value)
                    .sum::<f64>()
            })
        });
    }
    group.finish();
}

fn correlation(c: &mut Criterion) {
    let mut group = c.benchmark_group("spearman");
    for n in [50, 1_000, 10_000] {
        let (x, y) = score_vectors(n as u64, n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &(x, y), |b, (x, y)| {
            b.iter(|| spearman(black_box(x), black_box(y)).unwrap())
        });
    }
    group.finish();
}

fn agreement(c: &mut Criterion) {
    let (x, y) = score_vectors(9, 2_000);
    let rows: Vec<Vec<u8>> = [x, y.clone(), y]
        .iter()
        .map(|r| r.iter().map(|v| (*v as u8) % 11).collect())
        .collect();
    let m = AnnotationMatrix::from_complete(&rows).unwrap();
    c.bench_function("alpha_interval_3x2000", |b| {
        b.iter(|| krippendorff_alpha(black_box(&m), AlphaMetric::Interval).unwrap())
    });
}

criterion_group!(benches, formulaic, correlation, agreement);
criterion_main!(benches);
