mod common;

use common::{example, tiny_config, tiny_model};
use diffexr::diffusion::{make_schedule, word_noise, ScheduleKind};
use diffexr::model::{
    build_sequence, decode, encode, predict_rating, predict_words, IdMap, KeywordMode, ModelConfig,
    ModelParameters,
};
use diffexr::numerics::{finite_difference_check, Tape};
use diffexr::rng::stream;
use diffexr::training::{record_layout, record_losses, LossWeights};
use proptest::prelude::*;

#[test]
fn full_objective_matches_finite_differences() {
    let started = std::time::Instant::now();
    let model = tiny_model(3);
    let schedule = make_schedule(ScheduleKind::Cosine, 8).unwrap();
    let ex = example(&[6, 10, 14, 6, 19]);
    for (mode, t) in [(KeywordMode::None, 3), (KeywordMode::FO, 7)] {
        let layout = record_layout(&ex.record, mode, model.config.max_review_len).unwrap();
        let eps = word_noise(&layout, model.config.d_model, &mut stream(1, "noise"));
        let weights = LossWeights::default();
        let err = finite_difference_check(&model.store, 1e-5, |tape, store| {
            let m = ModelParameters {
                store: store.clone(),
                ..model.clone()
            };
            Ok(record_losses(tape, &m, &schedule, &ex, mode, t, &eps, &weights, None)?.total)
        })
        .unwrap();
        assert!(err < 1e-4, "mode {mode} t {t}: max relative error {err}");
    }
    assert!(started.elapsed().as_secs() < 60);
}

fn word_probs(model: &ModelParameters, review: &[u32]) -> Vec<Vec<f64>> {
    let ex = example(review);
    let mut tape = Tape::new();
    let enc = encode(&mut tape, model, &ex.persona, None).unwrap();
    let (x, layout) = build_sequence(&mut tape, model, &ex.record, KeywordMode::None).unwrap();
    let h = decode(&mut tape, model, x, 0, enc, &layout, None).unwrap();
    let p = predict_words(&mut tape, model, h, &layout).unwrap();
    let p = tape.value(p);
    (0..p.rows()).map(|r| p.row_slice(r).to_vec()).collect()
}

#[test]
fn word_span_is_causal() {
    let model = tiny_model(5);
    let base = [6u32, 10, 14, 6, 19, 8];
    let before = word_probs(&model, &base);
    // Row k of the generation span predicts w_{k+1}.
    for j in 0..base.len() {
        let mut changed = base;
        changed[j] = if base[j] == 12 { 13 } else { 12 };
        let after = word_probs(&model, &changed);
        for k in 0..=j {
            for (a, b) in before[k].iter().zip(&after[k]) {
                assert!((a - b).abs() <= 1e-12, "changing w{} moved prediction row {k}", j + 1);
            }
        }
        assert!(before[j + 1..].iter().zip(&after[j + 1..]).any(|(a, b)| a != b));
    }
}

#[test]
fn heads_read_only_their_slots() {
    let model = tiny_model(7);
    let schedule = make_schedule(ScheduleKind::Cosine, 8).unwrap();
    let ex = example(&[6, 10, 14, 6, 19]);
    let layout = record_layout(&ex.record, KeywordMode::F, model.config.max_review_len).unwrap();
    let eps = word_noise(&layout, 8, &mut stream(2, "noise"));

    let mut tape = Tape::new();
    let enc = encode(&mut tape, &model, &ex.persona, None).unwrap();
    let (x0, layout) = build_sequence(&mut tape, &model, &ex.record, KeywordMode::F).unwrap();
    let xt = diffexr::diffusion::corrupt_var(&mut tape, x0, &layout, 5, &schedule, &eps).unwrap();
    let h = decode(&mut tape, &model, xt, 5, enc, &layout, None).unwrap();

    let h0 = tape.slice_rows(h, 0, 1).unwrap();
    let r = predict_rating(&mut tape, &model, h0).unwrap();
    assert_eq!(rows_with_gradient(&tape, r, h), vec![0]);

    let h1 = tape.slice_rows(h, 1, 2).unwrap();
    let z = diffexr::model::vocab_logits(&mut tape, &model, h1).unwrap();
    let ctx = tape.nll(z, &[(0, 6), (0, 10)]).unwrap();
    assert_eq!(rows_with_gradient(&tape, ctx, h), vec![1]);
}

fn rows_with_gradient(tape: &Tape, loss: diffexr::Var, h: diffexr::Var) -> Vec<usize> {
    let g = tape.backward(loss).unwrap().wrt(tape, h);
    (0..g.rows()).filter(|&r| g.row_slice(r).iter().any(|v| *v != 0.0)).collect()
}

#[test]
fn rating_ignores_word_noise() {
    let model = tiny_model(9);
    let schedule = make_schedule(ScheduleKind::Cosine, 8).unwrap();
    let ex = example(&[6, 10, 14, 6, 19]);
    let layout = record_layout(&ex.record, KeywordMode::None, 6).unwrap();
    let w = LossWeights::default();
    let rating_at = |seed| {
        let eps = word_noise(&layout, 8, &mut stream(seed, "noise"));
        let mut tape = Tape::new();
        let l = record_losses(&mut tape, &model, &schedule, &ex, KeywordMode::None, 6, &eps, &w, None).unwrap();
        tape.value(l.rating_pred).item()
    };
    assert_eq!(rating_at(1), rating_at(2));
}

#[test]
fn zero_rating_weight_leaves_rating_head_untouched() {
    let model = tiny_model(11);
    let schedule = make_schedule(ScheduleKind::Linear, 8).unwrap();
    let ex = example(&[6, 10, 14]);
    let layout = record_layout(&ex.record, KeywordMode::None, 6).unwrap();
    let eps = word_noise(&layout, 8, &mut stream(4, "noise"));
    let weights = LossWeights {
        context: 1.0,
        rating: 0.0,
        generation: 1.0,
    };
    let mut tape = Tape::new();
    let l = record_losses(&mut tape, &model, &schedule, &ex, KeywordMode::None, 4, &eps, &weights, None).unwrap();
    let g = tape.param_grads(l.total, &model.store).unwrap();
    for id in model.rating_head_ids() {
        let t = g.tensor(&model.store, id);
        assert!(t.data().iter().all(|v| *v == 0.0), "{} has gradient", model.store.name(id));
    }
    let with_rating = {
        let mut tape = Tape::new();
        let l = record_losses(&mut tape, &model, &schedule, &ex, KeywordMode::None, 4, &eps, &LossWeights::default(), None)
            .unwrap();
        tape.param_grads(l.total, &model.store).unwrap()
    };
    let out_w = with_rating.tensor(&model.store, model.rating.out_w);
    assert!(out_w.data().iter().any(|v| *v != 0.0));
}

fn config_strategy() -> impl Strategy<Value = ModelConfig> {
    (1usize..4, 1usize..4, 1usize..3, 1usize..20, 5usize..30, 1usize..4, 1usize..4, 1usize..12).prop_map(
        |(heads, per_head, layers, ffn, vocab, users, items, horizon)| ModelConfig {
            d_model: heads * per_head * 2,
            num_heads: heads,
            num_layers: layers,
            ffn_dim: ffn,
            vocab_size: vocab,
            num_users: users,
            num_items: items,
            horizon,
            ..tiny_config()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn param_count_matches_allocation(c in config_strategy()) {
        let users = IdMap::from_names((0..c.num_users).map(|i| format!("u{i}")));
        let items = IdMap::from_names((0..c.num_items).map(|i| format!("i{i}")));
        let m = ModelParameters::init(&c, users, items, &mut stream(0, "init")).unwrap();
        prop_assert_eq!(m.store.num_scalars(), c.param_count());
    }
}
