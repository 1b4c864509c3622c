use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use ironylab_bench::{statements, CLARIFY_OUTPUT, PROBABILISTIC_OUTPUT, REASON};
use ironylab_core::corpus::Label;
use ironylab_core::metrics::{cosine_similarity, flesch_reading_ease, EmbeddingProvider, HashedNgramEmbedder};
use ironylab_core::normalize::normalize;
use ironylab_core::pipeline::vote;
use ironylab_core::prompts::{catalog, render};

fn bench_normalize(c: &mut Criterion) {
    c.bench_function("normalize/clarify", |b| b.iter(|| normalize(black_box(CLARIFY_OUTPUT), false)));
    c.bench_function("normalize/probabilistic", |b| {
        b.iter(|| normalize(black_box(PROBABILISTIC_OUTPUT), true))
    });
}

fn bench_vote(c: &mut Criterion) {
    let ballots = [Some(Label::Ironic), None, Some(Label::NonIronic)];
    c.bench_function("vote/3", |b| b.iter(|| vote(black_box(&ballots))));
}

fn bench_fre(c: &mut Criterion) {
    c.bench_function("fre/reason", |b| b.iter(|| flesch_reading_ease(black_box(REASON))));
}

fn bench_embed(c: &mut Criterion) {
    let e = HashedNgramEmbedder::default();
    c.bench_function("embed/hashed", |b| b.iter(|| e.embed(black_box(REASON))));
    let x = e.embed(REASON).unwrap();
    let y = e.embed("The driver is aggressive and reckless.").unwrap();
    c.bench_function("cosine", |b| b.iter(|| cosine_similarity(black_box(&x), black_box(&y))));
}

fn bench_render(c: &mut Criterion) {
    let templates = catalog();
    let texts = statements(64);
    c.bench_function("render/catalog x64", |b| {
        b.iter(|| {
            for t in &templates {
                for s in &texts {
                    black_box(render(t, s));
                }
            }
        })
    });
}

criterion_group!(benches, bench_normalize, bench_vote, bench_fre, bench_embed, bench_render);
criterion_main!(benches);
