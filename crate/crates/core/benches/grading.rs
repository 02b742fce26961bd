//! Sequential vs rayon-parallel grading on the fixture exercises.

use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mlgrade_core::grader::{grade, grade_many, load_bundle, GradeOptions};
use mlgrade_core::parallel::Parallelism;

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Parallel)];

fn exercise(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/exercises").join(name)
}

fn opts(mode: Parallelism) -> GradeOptions {
    GradeOptions { parallelism: mode, timing: false, ..GradeOptions::default() }
}

/// One submission: properties run their trials across the pool.
fn single_submission(c: &mut Criterion) {
    let mut group = c.benchmark_group("grade_one");
    for (ex, sub) in [("peano", "correct"), ("rev", "identity")] {
        let bundle = load_bundle(&exercise(ex)).unwrap();
        let src = std::fs::read(exercise(ex).join("submissions").join(format!("{sub}.mml"))).unwrap();
        for (label, mode) in MODES {
            group.bench_with_input(BenchmarkId::new(label, format!("{ex}/{sub}")), &src, |b, src| {
                b.iter(|| grade(black_box(src), &bundle, &opts(mode)))
            });
        }
    }
    group.finish();
}

/// A batch of submissions to one exercise.
fn batch(c: &mut Criterion) {
    let bundle = load_bundle(&exercise("peano")).unwrap();
    let dir = exercise("peano").join("submissions");
    let mut sources: Vec<Vec<u8>> = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        sources.push(std::fs::read(entry.unwrap().path()).unwrap());
    }
    let batch: Vec<Vec<u8>> = sources.iter().cycle().take(16).cloned().collect();
    let mut group = c.benchmark_group("grade_many");
    group.sample_size(20);
    for (label, mode) in MODES {
        group.bench_function(label, |b| b.iter(|| grade_many(black_box(&batch), &bundle, &opts(mode))));
    }
    group.finish();
}

criterion_group!(benches, single_submission, batch);
criterion_main!(benches);
