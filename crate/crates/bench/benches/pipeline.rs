use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use lexvar_bench::corpus;
use lexvar_core::analysis::build_distance_matrix;
use lexvar_core::ingest::{scan_matches, tokenize};
use lexvar_core::{
    ConceptScope, GridSpec, IngestOptions, Ingestor, Lexicon, MetricKind, SkipReport,
};

fn tokenize_and_scan(c: &mut Criterion) {
    let lexicon = Lexicon::shipped(false);
    let texts: Vec<String> = corpus(1000, 1).iter().map(|l| record_text(l)).collect();
    let mut group = c.benchmark_group("scan");
    group.throughput(Throughput::Elements(texts.len() as u64));
    group.bench_function("tokenize+scan 1k tweets", |b| {
        b.iter(|| {
            texts
                .iter()
                .map(|t| scan_matches(&tokenize(black_box(t)), &lexicon).len())
                .sum::<usize>()
        })
    });
    group.finish();
}

fn record_text(line: &str) -> String {
    lexvar_core::ingest::parse_record(line).unwrap().text
}

fn ingest_and_matrix(c: &mut Criterion) {
    let lines = corpus(20_000, 2).join("\n");
    let lexicon = Arc::new(Lexicon::shipped(false));

    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.throughput(Throughput::Elements(20_000));
    for workers in [1, 4] {
        let opts = IngestOptions {
            workers,
            ..IngestOptions::default()
        };
        let ing = Ingestor::new(lexicon.clone(), GridSpec::iberia(), opts).unwrap();
        group.bench_with_input(
            BenchmarkId::new("ingest 20k", workers),
            &lines,
            |b, lines| {
                b.iter(|| {
                    let mut model = ing.empty_model();
                    let mut report = SkipReport::default();
                    ing.ingest_reader(lines.as_bytes(), &mut model, &mut report)
                        .unwrap();
                    model
                })
            },
        );
    }
    group.finish();

    let ing = Ingestor::new(lexicon, GridSpec::iberia(), IngestOptions::default()).unwrap();
    let mut model = ing.empty_model();
    ing.ingest_reader(lines.as_bytes(), &mut model, &mut SkipReport::default())
        .unwrap();
    let mut group = c.benchmark_group("matrix");
    group.sample_size(10);
    for kind in MetricKind::ALL {
        group.bench_function(BenchmarkId::new("all concepts", kind.to_string()), |b| {
            b.iter(|| build_distance_matrix(&model, &ConceptScope::All, kind).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, tokenize_and_scan, ingest_and_matrix);
criterion_main!(benches);
