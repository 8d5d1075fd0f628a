use rand::Rng;

use super::TrainExample;
use crate::corpus::PAD;
use crate::diffusion::{encode_persona, greedy_decode, reverse_sample, DiffusionSchedule};
use crate::error::Result;
use crate::model::{
    build_prefix, decode, keyword_ids, predict_rating, word_rows, KeywordMode, ModelParameters,
    SequenceLayout,
};
use crate::numerics::Tape;

/// Predicted rating for a record. The rating slot never attends to word rows,
/// so a single placeholder word row gives the same answer as any review.
pub fn predict_rating_value(model: &ModelParameters, example: &TrainExample, mode: KeywordMode) -> Result<f64> {
    let record = &example.record;
    let keywords = keyword_ids(record, mode)?;
    let layout = SequenceLayout::new(keywords.len(), 1)?;
    let mut tape = Tape::new();
    let enc = crate::model::encode(&mut tape, model, &example.persona, None)?;
    let prefix = build_prefix(&mut tape, model, &record.user, &record.item, &keywords)?;
    let words = word_rows(&mut tape, model, &[PAD])?;
    let x = tape.concat_rows(&[prefix, words])?;
    let h = decode(&mut tape, model, x, 0, enc, &layout, None)?;
    let h0 = tape.slice_rows(h, 0, 1)?;
    let r = predict_rating(&mut tape, model, h0)?;
    Ok(tape.value(r).item())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateOptions {
    pub mode: KeywordMode,
    pub stride: usize,
    /// Decode left to right at `t = 0` instead of reverse sampling.
    pub greedy: bool,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            mode: KeywordMode::None,
            stride: 1,
            greedy: false,
        }
    }
}

/// Generated review tokens (no `bos`/`eos`) for one record.
pub fn generate_review<R: Rng + ?Sized>(
    model: &ModelParameters,
    schedule: &DiffusionSchedule,
    example: &TrainExample,
    options: &GenerateOptions,
    rng: &mut R,
) -> Result<Vec<u32>> {
    let record = &example.record;
    let keywords = keyword_ids(record, options.mode)?;
    let enc = encode_persona(model, &example.persona)?;
    if options.greedy {
        greedy_decode(model, &record.user, &record.item, &keywords, &enc)
    } else {
        reverse_sample(model, &record.user, &record.item, &keywords, &enc, schedule, options.stride, rng)
    }
}
