use super::{ParamStore, Tape, Var};
use crate::error::{Error, Result};

/// Largest relative disagreement between tape gradients and central
/// differences, over every coordinate of every parameter in `store`.
///
/// Per coordinate the error is `|a - n| / max(1e-8, |a| + |n|)` with `a` the
/// tape gradient and `n = (f(p + eps) - f(p - eps)) / (2 eps)`.
pub fn finite_difference_check<F>(store: &ParamStore, eps: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    if !(1e-6..=1e-4).contains(&eps) {
        return Err(Error::invalid(format!("eps {eps} outside [1e-6, 1e-4]")));
    }
    if store.num_scalars() == 0 {
        return Ok(0.0);
    }
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    let analytic = tape.param_grads(loss, store)?;

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let l = f(&mut t, s)?;
        let v = t.value(l).item();
        if !v.is_finite() {
            return Err(Error::NonFinite("finite-difference probe".into()));
        }
        Ok(v)
    };

    let mut probe = store.clone();
    let mut worst = 0.0f64;
    for id in store.ids() {
        let grad = analytic.tensor(store, id);
        for k in 0..store.get(id).numel() {
            let orig = store.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + eps;
            let up = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = orig - eps;
            let down = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = grad.data()[k];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
