use diffexr::numerics::{finite_difference_check, ParamStore, Tape, Tensor, Var};
use diffexr::Result;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| Tensor::matrix(rows, cols, v).unwrap())
}

/// Distinct weights per coordinate, so no weighted output sum is flat.
fn weights(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(0.0..0.05f64, rows * cols).prop_map(move |v| {
        let data = v.iter().enumerate().map(|(k, e)| 0.2 + 0.37 * ((k * 7) % 11) as f64 + e).collect();
        Tensor::matrix(rows, cols, data).unwrap()
    })
}

/// Entries with magnitude at least 0.3, so products keep a usable gradient.
fn away_from_zero(t: &Tensor) -> Tensor {
    let data = t.data().iter().map(|&v| if v < 0.0 { v - 0.3 } else { v + 0.3 }).collect();
    Tensor::new(t.shape().to_vec(), data).unwrap()
}

/// Central differences of `sum(op(x) * w)` against the tape gradient. Gradient
/// components can vanish at some inputs, so the tolerance is mixed absolute and relative.
fn weighted_close<F>(store: &ParamStore, w: &Tensor, op: F) -> bool
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let loss = |tape: &mut Tape, s: &ParamStore| -> Result<Var> {
        let x = tape.param(s, s.find("x").unwrap());
        let p = op(tape, x)?;
        let p = tape.mul_const(p, w)?;
        tape.sum(p)
    };
    let id = store.find("x").unwrap();
    let mut tape = Tape::new();
    let l = loss(&mut tape, store).unwrap();
    let grad = tape.param_grads(l, store).unwrap().tensor(store, id);
    let eps = 1e-5;
    let mut probe = store.clone();
    (0..store.get(id).numel()).all(|k| {
        let orig = store.get(id).data()[k];
        let mut at = |v: f64| {
            probe.get_mut(id).data_mut()[k] = v;
            let mut t = Tape::new();
            let l = loss(&mut t, &probe).unwrap();
            t.value(l).item()
        };
        let numeric = (at(orig + eps) - at(orig - eps)) / (2.0 * eps);
        probe.get_mut(id).data_mut()[k] = orig;
        (grad.data()[k] - numeric).abs() <= 1e-8 + 1e-6 * numeric.abs()
    })
}

fn store_of(x: Tensor) -> ParamStore {
    let mut s = ParamStore::new();
    s.add("x", x);
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn softmax_rows_are_distributions(x in matrix(4, 7, -30.0, 30.0)) {
        let mut tape = Tape::new();
        let v = tape.leaf(x);
        let p = tape.softmax(v).unwrap();
        let p = tape.value(p);
        for r in 0..4 {
            let row = p.row_slice(r);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|&q| (0.0..=1.0).contains(&q)));
        }
    }

    #[test]
    fn layer_norm_rows_are_standardized(x in matrix(3, 16, -5.0, 5.0)) {
        let mut tape = Tape::new();
        let v = tape.leaf(x);
        let y = tape.layer_norm(v).unwrap();
        let y = tape.value(y);
        for r in 0..3 {
            let row = y.row_slice(r);
            let mean = row.iter().sum::<f64>() / 16.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
            prop_assert!(mean.abs() <= 1e-10, "mean {mean}");
            // The stabilizer shrinks the variance by var / (var + 1e-5).
            let sample_var = {
                let xs = tape_input_row(&tape, v, r);
                let m = xs.iter().sum::<f64>() / 16.0;
                xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 16.0
            };
            let expected = sample_var / (sample_var + diffexr::numerics::LAYER_NORM_EPS);
            prop_assert!((var - expected).abs() <= 1e-8, "var {var} vs {expected}");
            prop_assert!((var - 1.0).abs() <= 1e-3);
        }
    }

    #[test]
    fn matmul_is_associative(a in matrix(3, 4, -2.0, 2.0), b in matrix(4, 5, -2.0, 2.0), c in matrix(5, 2, -2.0, 2.0)) {
        let mut tape = Tape::new();
        let (a, b, c) = (tape.leaf(a), tape.leaf(b), tape.leaf(c));
        let ab = tape.matmul(a, b).unwrap();
        let left = tape.matmul(ab, c).unwrap();
        let bc = tape.matmul(b, c).unwrap();
        let right = tape.matmul(a, bc).unwrap();
        let (l, r) = (tape.value(left), tape.value(right));
        for (x, y) in l.data().iter().zip(r.data()) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0));
        }
    }

    #[test]
    fn elementwise_ops_match_finite_differences(
        x in matrix(3, 4, 0.3, 2.0),
        neg in prop::bool::ANY,
        w in weights(3, 4),
        other in matrix(3, 4, -1.5, 1.5),
    ) {
        let sign = if neg { -1.0 } else { 1.0 };
        let x = Tensor::matrix(3, 4, x.data().iter().map(|v| v * sign).collect()).unwrap();
        let store = store_of(x.clone());
        let pos = store_of(Tensor::matrix(3, 4, x.data().iter().map(|v| v.abs()).collect()).unwrap());
        let o = away_from_zero(&other);
        let checks = [
            ("relu", weighted_close(&store, &w, |t, v| t.relu(v))),
            ("sigmoid", weighted_close(&store, &w, |t, v| t.sigmoid(v))),
            ("square", weighted_close(&store, &w, |t, v| t.square(v))),
            ("log", weighted_close(&pos, &w, |t, v| t.log(v))),
            ("scale", weighted_close(&store, &w, |t, v| t.scale(v, -0.7))),
            ("add", weighted_close(&store, &w, |t, v| { let c = t.leaf(o.clone()); t.add(v, c) })),
            ("sub", weighted_close(&store, &w, |t, v| { let c = t.leaf(o.clone()); t.sub(c, v) })),
            ("mul", weighted_close(&store, &w, |t, v| { let c = t.leaf(o.clone()); t.mul(v, c) })),
            ("mul self", weighted_close(&store, &w, |t, v| t.mul(v, v))),
            ("add_const", weighted_close(&store, &w, |t, v| t.add_const(v, &o))),
            ("mul_const", weighted_close(&store, &w, |t, v| t.mul_const(v, &o))),
        ];
        for (name, ok) in checks {
            prop_assert!(ok, "{name}");
        }
    }

    #[test]
    fn structural_ops_match_finite_differences(
        x in matrix(4, 3, -2.0, 2.0),
        m in matrix(3, 5, -1.0, 1.0),
        row in matrix(1, 3, -1.0, 1.0),
        w43 in weights(4, 3),
        w45 in weights(4, 5),
        w34 in weights(3, 4),
    ) {
        let store = store_of(x);
        let (m2, row2) = (m.clone(), away_from_zero(&row));
        let checks = [
            ("matmul left", weighted_close(&store, &w45, |t, v| { let c = t.leaf(m2.clone()); t.matmul(v, c) })),
            ("transpose", weighted_close(&store, &w34, |t, v| t.transpose(v))),
            ("add_row", weighted_close(&store, &w43, |t, v| { let r = t.leaf(row2.clone()); t.add_row(v, r) })),
            ("mul_row", weighted_close(&store, &w43, |t, v| { let r = t.leaf(row2.clone()); t.mul_row(v, r) })),
        ];
        for (name, ok) in checks {
            prop_assert!(ok, "{name}");
        }
        prop_assert!(weighted_close(&store, &w43, |t, v| t.softmax(v)), "softmax");
        // Near-constant rows make the normalizer ill-conditioned; keep rows spread.
        let ramp = Tensor::matrix(4, 3, (0..12).map(|k| 5.0 * (k % 3) as f64).collect()).unwrap();
        prop_assert!(weighted_close(&store, &w43, |t, v| { let v = t.add_const(v, &ramp)?; t.layer_norm(v) }), "layer_norm");
        let mw = Tensor::matrix(3, 5, w45.data()[..15].to_vec()).unwrap();
        let mut s2 = ParamStore::new();
        s2.add("x", m);
        let ok = weighted_close(&s2, &mw, |t, v| t.scale(v, 1.0).and_then(|v| t.transpose(v)).and_then(|v| t.transpose(v)));
        prop_assert!(ok, "transpose twice");
    }

    #[test]
    fn shape_ops_match_finite_differences(x in matrix(5, 3, -2.0, 2.0), w in weights(8, 3), wc in weights(5, 6)) {
        let store = store_of(x);
        let w3 = Tensor::matrix(3, 3, w.data()[..9].to_vec()).unwrap();
        let w2 = Tensor::matrix(5, 2, wc.data()[..10].to_vec()).unwrap();
        let w8 = w.clone();
        let checks = [
            ("slice_rows", weighted_close(&store, &w3, |t, v| t.slice_rows(v, 1, 4))),
            ("slice_cols", weighted_close(&store, &w2, |t, v| t.slice_cols(v, 1, 3))),
            ("gather", weighted_close(&store, &w8, |t, v| t.gather(v, &[0, 2, 2, 4, 1, 0, 3, 2]))),
            ("concat_rows", weighted_close(&store, &Tensor::matrix(10, 3, [w.data(), &w.data()[..6]].concat()).unwrap(), |t, v| t.concat_rows(&[v, v]))),
            ("concat_cols", weighted_close(&store, &wc, |t, v| t.concat_cols(&[v, v]))),
        ];
        for (name, ok) in checks {
            prop_assert!(ok, "{name}");
        }
    }

    #[test]
    fn reductions_match_finite_differences(x in matrix(3, 6, -1.0, 1.0), w in weights(3, 6)) {
        let store = store_of(x.clone());
        let away = store_of(Tensor::matrix(3, 6, x.data().iter().map(|v| 0.3 + v.abs()).collect()).unwrap());
        let w2 = w.clone();
        let mean = finite_difference_check(&away, 1e-5, |t, s| {
            let x = t.param(s, s.find("x").unwrap());
            let y = t.mul_const(x, &w2)?;
            let y = t.square(y)?;
            t.mean(y)
        }).unwrap();
        prop_assert!(mean < 1e-6, "mean: {mean}");
        let nll = finite_difference_check(&store, 1e-5, |t, s| {
            let x = t.param(s, s.find("x").unwrap());
            let y = t.mul_const(x, &w)?;
            t.nll(y, &[(0, 1), (1, 5), (2, 0), (2, 0), (0, 3)])
        }).unwrap();
        prop_assert!(nll < 1e-6, "nll: {nll}");
    }
}

fn tape_input_row(tape: &Tape, v: Var, r: usize) -> Vec<f64> {
    tape.value(v).row_slice(r).to_vec()
}
