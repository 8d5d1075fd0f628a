use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to every noise level so that `sqrt(gamma)` stays informative.
pub const GAMMA_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    #[default]
    Cosine,
    Linear,
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "linear" => Ok(Self::Linear),
            other => Err(Error::invalid(format!("unknown schedule `{other}`"))),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cosine => "cosine",
            Self::Linear => "linear",
        })
    }
}

/// Signal level `gamma(t)` for `t = 0..=T`, falling from exactly 1 to about 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    kind: ScheduleKind,
    gamma: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn new(kind: ScheduleKind, horizon: usize) -> Result<Self> {
        if horizon < 1 {
            return Err(Error::invalid("diffusion horizon T must be >= 1"));
        }
        let t_max = horizon as f64;
        let mut gamma: Vec<f64> = (0..=horizon)
            .map(|t| {
                let x = t as f64 / t_max;
                let g = match kind {
                    ScheduleKind::Cosine => (std::f64::consts::FRAC_PI_2 * x).cos().powi(2),
                    ScheduleKind::Linear => 1.0 - x,
                };
                g.clamp(GAMMA_FLOOR, 1.0)
            })
            .collect();
        gamma[0] = 1.0;
        if let Some(t) = gamma.windows(2).position(|w| w[1] >= w[0]) {
            return Err(Error::invalid(format!(
                "{kind} schedule with T={horizon} is not strictly decreasing at t={}; \
                 the {GAMMA_FLOOR} floor is reached too early",
                t + 1
            )));
        }
        Ok(Self { kind, gamma })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// The horizon `T`.
    pub fn horizon(&self) -> usize {
        self.gamma.len() - 1
    }

    pub fn gamma(&self, t: usize) -> Result<f64> {
        self.gamma
            .get(t)
            .copied()
            .ok_or_else(|| Error::invalid(format!("step {t} outside [0, {}]", self.horizon())))
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gamma
    }

    /// `t,gamma` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,gamma")?;
        for (t, g) in self.gamma.iter().enumerate() {
            writeln!(w, "{t},{g}")?;
        }
        Ok(())
    }
}

/// Alias matching the operation name used throughout the docs.
pub fn make_schedule(kind: ScheduleKind, horizon: usize) -> Result<DiffusionSchedule> {
    DiffusionSchedule::new(kind, horizon)
}
