//! Benchmarks for the hot paths: CRF dynamic programs, decoding, and the
//! BiLSTM forward pass.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wsner_core::corpus::{AllowedLattice, LabelSet, Scheme, Sentence};
use wsner_core::crf::{self, TransitionMatrix};
use wsner_core::encoder::{self, EmbeddingTable, EncoderParams};

fn crf_instance(n: usize, k: usize) -> (Array2<f64>, TransitionMatrix, AllowedLattice) {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let p = Array2::from_shape_fn((n, k), |_| rng.gen_range(-1.0..1.0));
    let t = TransitionMatrix::from_array(Array2::from_shape_fn((k + 2, k + 2), |_| {
        rng.gen_range(-1.0..1.0)
    }));
    let full = (1u64 << k) - 1;
    let l = AllowedLattice::new((0..n).map(|_| rng.gen_range(1..=full)).collect(), k);
    (p, t, l)
}

fn bench_crf(c: &mut Criterion) {
    // Sentence length and tag count typical of BIOES with 3 entity types.
    let (p, t, l) = crf_instance(30, 13);
    c.bench_function("log_partition n=30 k=13", |b| {
        b.iter(|| crf::log_partition(black_box(&p), black_box(&t)))
    });
    c.bench_function("constrained_log_partition n=30 k=13", |b| {
        b.iter(|| crf::constrained_log_partition(black_box(&p), black_box(&t), black_box(&l)))
    });
    c.bench_function("viterbi n=30 k=13", |b| {
        b.iter(|| crf::viterbi(black_box(&p), black_box(&t)))
    });
    c.bench_function("partial_loss_gradients n=30 k=13", |b| {
        b.iter(|| crf::partial_loss_gradients(black_box(&p), black_box(&t), black_box(&l)))
    });
}

fn bench_encoder(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let words: Vec<String> = (0..50).map(|i| format!("word{i}")).collect();
    let tokens: Vec<String> = (0..30).map(|i| format!("word{}", i % 50)).collect();
    let sentence = Sentence::new(0, tokens);
    let ls = LabelSet::new(&["PER", "LOC", "ORG"], Scheme::Bioes);
    let mut embeddings = EmbeddingTable::random_words(words, 50, &mut rng);
    embeddings.init_chars(('a'..='z').chain('0'..='9').collect(), 25, &mut rng);
    let params = EncoderParams::new(embeddings, 25, 100, ls.len(), false, &mut rng);
    c.bench_function("encode n=30 d_h=100", |b| {
        b.iter(|| encoder::encode(black_box(&sentence), black_box(&params)))
    });
    c.bench_function("encode+emissions n=30 d_h=100", |b| {
        b.iter(|| {
            let h = encoder::encode(black_box(&sentence), black_box(&params));
            encoder::emissions(&h, black_box(&params))
        })
    });
}

criterion_group!(benches, bench_crf, bench_encoder);
criterion_main!(benches);
