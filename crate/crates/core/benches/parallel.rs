//! Corpus feature extraction and SVM cross-validation on one worker versus
//! the default pool. Built without the `parallel` feature both arms run the
//! sequential code path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use herdgraph::config::{streams, Config};
use herdgraph::evalkit;
use herdgraph::features::FEATURE_DIM;
use herdgraph::synthlab::{self, CorpusSpec};

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let default = rayon::ThreadPoolBuilder::new().build().unwrap();
    let n = default.current_num_threads();
    vec![
        ("sequential".into(), rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        (format!("parallel-{n}"), default),
    ]
}

fn bench(c: &mut Criterion) {
    let cfg = Config::default();
    let spec = CorpusSpec {
        n_per_class: 20,
        ..cfg.corpus_spec()
    };
    let clips = synthlab::corpus(&spec).unwrap();
    let processing = cfg.processing();
    let samples = evalkit::corpus_samples(&clips, &processing);
    let seed = cfg.seed_for(streams::FOLDS);
    let folds = evalkit::sample_folds(&samples, cfg.eval.folds, seed).unwrap();
    let columns: Vec<usize> = (0..FEATURE_DIM).collect();

    let mut g = c.benchmark_group("corpus");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_with_input(BenchmarkId::new("features", &name), &pool, |b, pool| {
            b.iter(|| pool.install(|| evalkit::corpus_samples(&clips, &processing)))
        });
        g.bench_with_input(BenchmarkId::new("cross_validation", &name), &pool, |b, pool| {
            b.iter(|| {
                pool.install(|| {
                    evalkit::evaluate_samples(&samples, &folds, cfg.eval.folds, &columns, &cfg.svm, seed).unwrap()
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
