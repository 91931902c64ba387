use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use pagerec_bench::bench_corpus;
use pagerec_core::corpus::{preprocess, PreprocessConfig};
use pagerec_core::hyptrails::{
    build_hypothesis, build_state_space, compare_sweep, count_transitions, HypothesisKind,
    DEFAULT_K_SWEEP,
};
use pagerec_core::seqmodel::{
    build_vocab, loss_and_grad, BackendConfig, Encoder, ModelDims, ModelParams, ReprStrategy,
};

fn bench_evidence(c: &mut Criterion) {
    let corpus = bench_corpus(200, 100, 40, 1);
    let states = build_state_space(&corpus).unwrap();
    let counts = count_transitions(&corpus, &states).unwrap();
    let hypotheses: Vec<_> = [
        HypothesisKind::Uniform,
        HypothesisKind::Structural,
        HypothesisKind::Mixed,
        HypothesisKind::Data,
    ]
    .iter()
    .map(|&k| build_hypothesis(&states, k, (k == HypothesisKind::Data).then_some(&counts)))
    .collect();
    c.bench_function("evidence_sweep_4x8", |b| {
        b.iter(|| compare_sweep(black_box(&counts), &hypotheses, &DEFAULT_K_SWEEP).unwrap())
    });
}

fn bench_preprocess(c: &mut Criterion) {
    let corpus = bench_corpus(500, 100, 40, 2);
    let cfg = PreprocessConfig::default();
    c.bench_function("preprocess_500_sessions", |b| {
        b.iter(|| preprocess(black_box(&corpus), &cfg))
    });
}

fn bench_backward(c: &mut Criterion) {
    let corpus = bench_corpus(64, 100, 15, 3);
    let strategy = ReprStrategy::cpid();
    let vocab = build_vocab(&corpus, strategy).unwrap();
    let n = 30;
    let encoder = Encoder::new(&corpus, &vocab, strategy, n, true).unwrap();
    let sessions: Vec<_> = corpus.sessions.iter().collect();
    let batch = encoder.encode_batch(&sessions).unwrap();
    let dims = ModelDims {
        d: 64,
        n,
        vocab: vocab.len(),
        n_attrs: corpus.attribute_vocab.len(),
        dense_dim: 0,
    };
    for (name, backend) in [
        ("attention_fwd_bwd_b64", BackendConfig::self_attention()),
        ("gru_fwd_bwd_b64", BackendConfig::gru()),
    ] {
        let params = ModelParams::init(dims, backend, 5);
        c.bench_function(name, |b| {
            b.iter(|| loss_and_grad(black_box(&params), &batch, None).unwrap())
        });
    }
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_evidence, bench_preprocess, bench_backward
}
criterion_main!(benches);
