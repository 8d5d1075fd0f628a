use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use diffexr::corpus::{synth_generate, split_records, MeanWordEmbedder, SyntheticSpec};
use diffexr::diffusion::{encode_persona, make_schedule, reverse_sample, DiffusionSchedule, ScheduleKind};
use diffexr::model::{ModelConfig, ModelParameters};
use diffexr::numerics::{Tape, Tensor};
use diffexr::pipeline::{prepare, split_examples};
use diffexr::rng::{normal_vec, stream};
use diffexr::training::{batch_gradients, TrainConfig, TrainExample};

/// Desk-scale model and training examples from a small synthetic corpus.
fn setup() -> (ModelParameters, DiffusionSchedule, Vec<TrainExample>) {
    let spec = SyntheticSpec { num_users: 60, num_items: 40, ..SyntheticSpec::amazon_like(1) };
    let corpus = synth_generate(&spec).unwrap();
    let data = prepare(&split_records(&corpus.records, 1), 1).unwrap();
    let embedder = MeanWordEmbedder::random(data.vocab.len(), 16, 1);
    let examples = split_examples(&data.splits.train, &embedder, 3, 40).unwrap();
    let cfg = ModelConfig {
        d_model: 32,
        num_heads: 2,
        num_layers: 2,
        ffn_dim: 64,
        max_encoder_len: 40,
        max_review_len: 15,
        vocab_size: data.vocab.len(),
        num_users: data.users.len(),
        num_items: data.items.len(),
        horizon: 200,
        dropout: 0.2,
        id_init_std: 0.1,
    };
    let model = ModelParameters::init(&cfg, data.users.clone(), data.items.clone(), &mut stream(1, "init")).unwrap();
    (model, make_schedule(ScheduleKind::Cosine, 200).unwrap(), examples)
}

fn training(c: &mut Criterion) {
    let (model, schedule, examples) = setup();
    let config = TrainConfig::default();
    for size in [1usize, 32] {
        let batch: Vec<usize> = (0..size).collect();
        c.bench_function(&format!("forward_backward/batch_{size}"), |b| {
            b.iter(|| batch_gradients(&model, &schedule, &examples, &batch, &config, 1).unwrap())
        });
    }
}

fn sampling(c: &mut Criterion) {
    let (model, schedule, examples) = setup();
    let ex = &examples[0];
    let enc = encode_persona(&model, &ex.persona).unwrap();
    let mut group = c.benchmark_group("reverse_sample");
    group.sample_size(20);
    for stride in [1usize, 20] {
        group.bench_function(format!("stride_{stride}"), |b| {
            b.iter_batched(
                || stream(2, "sampler"),
                |mut rng| reverse_sample(&model, &ex.record.user, &ex.record.item, &[], &enc, &schedule, stride, &mut rng).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn matmul(c: &mut Criterion) {
    let mut rng = stream(3, "bench");
    let a = Tensor::matrix(64, 64, normal_vec(&mut rng, 64 * 64)).unwrap();
    let b = Tensor::matrix(64, 64, normal_vec(&mut rng, 64 * 64)).unwrap();
    c.bench_function("matmul_64_forward_backward", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let (x, y) = (tape.leaf(a.clone()), tape.leaf(b.clone()));
            let z = tape.matmul(x, y).unwrap();
            let s = tape.sum(z).unwrap();
            tape.backward(s).unwrap()
        })
    });
}

criterion_group!(benches, training, sampling, matmul);
criterion_main!(benches);
