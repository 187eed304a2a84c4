use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::schedule::Schedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InjectMode {
    #[default]
    EvalOnly,
    ImproveOnly,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseShape {
    /// Every entry equals `+r_N`.
    #[default]
    ConstantSign,
    /// Entries drawn uniformly from `[-r_N, r_N]`.
    SignedUniform,
}

/// Bounded noise `||noise_N|| <= r_N` for the approximate schemes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorInjector {
    pub magnitude: Schedule,
    #[serde(default)]
    pub mode: InjectMode,
    #[serde(default)]
    pub shape: NoiseShape,
    #[serde(default)]
    pub seed: u64,
}

impl ErrorInjector {
    pub fn zero() -> Self {
        Self {
            magnitude: Schedule::Zero,
            mode: InjectMode::Both,
            shape: NoiseShape::ConstantSign,
            seed: 0,
        }
    }

    pub fn new(magnitude: Schedule, mode: InjectMode, shape: NoiseShape, seed: u64) -> Self {
        Self {
            magnitude,
            mode,
            shape,
            seed,
        }
    }

    pub fn injects_eval(&self) -> bool {
        matches!(self.mode, InjectMode::EvalOnly | InjectMode::Both)
    }

    pub fn injects_improve(&self) -> bool {
        matches!(self.mode, InjectMode::ImproveOnly | InjectMode::Both)
    }

    pub(crate) fn stream(&self) -> NoiseStream {
        NoiseStream {
            rng: ChaCha8Rng::seed_from_u64(self.seed),
            shape: self.shape,
        }
    }
}

pub(crate) struct NoiseStream {
    rng: ChaCha8Rng,
    shape: NoiseShape,
}

impl NoiseStream {
    pub(crate) fn draw(&mut self, len: usize, magnitude: f64) -> Vec<f64> {
        if magnitude == 0.0 {
            return vec![0.0; len];
        }
        match self.shape {
            NoiseShape::ConstantSign => vec![magnitude; len],
            NoiseShape::SignedUniform => (0..len)
                .map(|_| self.rng.gen_range(-magnitude..=magnitude))
                .collect(),
        }
    }
}
