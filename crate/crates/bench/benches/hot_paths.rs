use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use seqtag_bench::{lattice, toy_model};
use seqtag_core::crf::{forward_log_z, viterbi};
use seqtag_core::numerics::{Array, Graph, Rng};
use seqtag_core::tagger::LstmCellParams;

fn crf(c: &mut Criterion) {
    let mut group = c.benchmark_group("crf");
    for len in [20, 100] {
        let (em, params) = lattice(len, 9, 3);
        group.bench_with_input(BenchmarkId::new("forward_log_z", len), &len, |b, _| {
            b.iter(|| forward_log_z(black_box(&em), black_box(&params)))
        });
        group.bench_with_input(BenchmarkId::new("viterbi", len), &len, |b, _| {
            b.iter(|| viterbi(black_box(&em), black_box(&params)))
        });
    }
    group.finish();
}

fn lstm_step(c: &mut Criterion) {
    let mut rng = Rng::new(5);
    let cell = LstmCellParams::glorot("bench", 256, 4196, &mut rng);
    let x = Array::vector((0..4196).map(|_| rng.uniform_range(-1.0, 1.0)).collect());
    let h = Array::vector(vec![0.0; cell.hidden()]);
    c.bench_function("lstm_step_h256_x4196", |b| b.iter(|| cell.step(black_box(&x), &h, &h)));
}

fn loss_and_backward(c: &mut Criterion) {
    let (sentences, model) = toy_model(32, 16);
    let sentence = &sentences[0];
    c.bench_function("sentence_loss_backward", |b| {
        b.iter(|| {
            let mut rng = Rng::new(9);
            let mut g = Graph::new();
            let loss = model.loss_graph(&mut g, black_box(sentence), true, &mut rng);
            g.backward(loss)
        })
    });
}

criterion_group!(benches, crf, lstm_step, loss_and_backward);
criterion_main!(benches);
