use rand::Rng;

use super::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::model::SequenceLayout;
use crate::numerics::{Tape, Tensor, Var};
use crate::rng::normal_vec;

/// Standard normal noise on the word rows, zeros elsewhere.
pub fn word_noise<R: Rng + ?Sized>(layout: &SequenceLayout, d: usize, rng: &mut R) -> Tensor {
    let mut eps = vec![0.0; layout.len() * d];
    let span = layout.word_span();
    let draws = normal_vec(rng, span.len() * d);
    eps[span.start * d..span.end * d].copy_from_slice(&draws);
    Tensor::matrix(layout.len(), d, eps).unwrap()
}

fn check(x0: &Tensor, layout: &SequenceLayout, eps: &Tensor) -> Result<()> {
    if x0.rows() != layout.len() || x0.shape().len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "corrupt",
            lhs: x0.shape().to_vec(),
            rhs: vec![layout.len()],
        });
    }
    if eps.shape() != x0.shape() {
        return Err(Error::ShapeMismatch {
            op: "corrupt",
            lhs: x0.shape().to_vec(),
            rhs: eps.shape().to_vec(),
        });
    }
    Ok(())
}

/// `X_t = sqrt(gamma) X_0 + sqrt(1 - gamma) eps` on word rows; other rows
/// are copied unchanged. Only the word rows of `eps` are read.
pub fn corrupt_with(
    x0: &Tensor,
    layout: &SequenceLayout,
    t: usize,
    schedule: &DiffusionSchedule,
    eps: &Tensor,
) -> Result<Tensor> {
    check(x0, layout, eps)?;
    let g = schedule.gamma(t)?;
    let (a, b) = (g.sqrt(), (1.0 - g).sqrt());
    let d = x0.cols();
    let mut out = x0.clone();
    let span = layout.word_span();
    let data = out.data_mut();
    for k in span.start * d..span.end * d {
        data[k] = a * x0.data()[k] + b * eps.data()[k];
    }
    Ok(out)
}

/// Draws fresh noise and corrupts; returns `(X_t, eps)`.
pub fn corrupt<R: Rng + ?Sized>(
    x0: &Tensor,
    layout: &SequenceLayout,
    t: usize,
    schedule: &DiffusionSchedule,
    rng: &mut R,
) -> Result<(Tensor, Tensor)> {
    schedule.gamma(t)?;
    let eps = word_noise(layout, x0.cols(), rng);
    let xt = corrupt_with(x0, layout, t, schedule, &eps)?;
    Ok((xt, eps))
}

/// Differentiable corruption of a recorded `X_0`.
pub fn corrupt_var(
    tape: &mut Tape,
    x0: Var,
    layout: &SequenceLayout,
    t: usize,
    schedule: &DiffusionSchedule,
    eps: &Tensor,
) -> Result<Var> {
    check(tape.value(x0), layout, eps)?;
    let g = schedule.gamma(t)?;
    if g == 1.0 {
        return Ok(x0);
    }
    let d = eps.cols();
    let span = layout.word_span();
    let mut coef = vec![1.0; layout.len() * d];
    let mut shift = vec![0.0; layout.len() * d];
    let (a, b) = (g.sqrt(), (1.0 - g).sqrt());
    for k in span.start * d..span.end * d {
        coef[k] = a;
        shift[k] = b * eps.data()[k];
    }
    let scaled = tape.mul_const(x0, &Tensor::matrix(layout.len(), d, coef)?)?;
    tape.add_const(scaled, &Tensor::matrix(layout.len(), d, shift)?)
}
