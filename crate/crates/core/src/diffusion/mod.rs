//! Noise schedules, forward corruption of the word span, reverse sampling.

mod corrupt;
mod sampler;
mod schedule;

pub use corrupt::{corrupt, corrupt_var, corrupt_with, word_noise};
pub use sampler::{encode_persona, greedy_decode, reverse_sample, reverse_sample_traced, SampleTrace};
pub use schedule::{make_schedule, DiffusionSchedule, ScheduleKind, GAMMA_FLOOR};
