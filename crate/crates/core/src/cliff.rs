//! Cliff-walking grid builder.
//!
//! Layout: columns `0..width`, rows `0..height`, row 0 at the bottom.
//! Start is `(0, 0)`, goal `(width-1, 0)`, the cliff is the rest of row 0.
//! State index is `row * width + col`. Actions: 0 up, 1 right, 2 down, 3 left.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{GridLayout, TabularMDP};

pub const UP: usize = 0;
pub const RIGHT: usize = 1;
pub const DOWN: usize = 2;
pub const LEFT: usize = 3;

const MOVES: [(i64, i64); 4] = [(0, 1), (1, 0), (0, -1), (-1, 0)];

/// What happens on the cliff row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CliffMode {
    /// Cliff cells end the episode.
    #[default]
    Terminal,
    /// Any action from a cliff cell returns the agent to start.
    ResetToStart,
}

/// How wind perturbs a move.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindModel {
    /// With probability `p` the agent takes one uniformly random compass step from its own cell.
    #[default]
    SourceSlip,
    /// With probability `p` the intended target is shifted one cell in a uniform compass direction.
    TargetSlide,
}

/// Which cell a reward is attached to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardTiming {
    /// Expected reward of the cell being entered.
    #[default]
    OnEntry,
    /// Reward of the cell acted from.
    OnLeave,
}

/// Whether end states are excluded from regularization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TerminalHandling {
    /// End states are flagged terminal and keep value 0 under every operator.
    #[default]
    Pinned,
    /// End states are plain absorbing zero-reward states.
    Absorbing,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CliffConfig {
    pub width: usize,
    pub height: usize,
    pub wind_prob: f64,
    pub step_reward: f64,
    pub cliff_reward: f64,
    pub goal_reward: f64,
    pub discount: f64,
    pub cliff_mode: CliffMode,
    pub wind_model: WindModel,
    pub reward_timing: RewardTiming,
    pub terminal_handling: TerminalHandling,
}

impl Default for CliffConfig {
    fn default() -> Self {
        Self {
            width: 6,
            height: 4,
            wind_prob: 0.0,
            step_reward: -1.0,
            cliff_reward: -100.0,
            goal_reward: 0.0,
            discount: 0.9,
            cliff_mode: CliffMode::Terminal,
            wind_model: WindModel::SourceSlip,
            reward_timing: RewardTiming::OnEntry,
            terminal_handling: TerminalHandling::Pinned,
        }
    }
}

impl CliffConfig {
    pub fn with_wind(wind_prob: f64) -> Self {
        Self {
            wind_prob,
            ..Self::default()
        }
    }

    /// Reset-to-start cliff, rewards on the cell acted from, wind sliding the target.
    pub fn reset_variant(wind_prob: f64) -> Self {
        Self {
            wind_prob,
            cliff_mode: CliffMode::ResetToStart,
            wind_model: WindModel::TargetSlide,
            reward_timing: RewardTiming::OnLeave,
            ..Self::default()
        }
    }

    pub fn layout(&self) -> GridLayout {
        GridLayout {
            width: self.width,
            height: self.height,
        }
    }

    pub fn start(&self) -> usize {
        0
    }

    pub fn goal(&self) -> usize {
        self.width - 1
    }

    pub fn is_cliff(&self, s: usize) -> bool {
        s > 0 && s < self.width - 1
    }

    fn clip(&self, col: i64, row: i64) -> usize {
        let c = col.clamp(0, self.width as i64 - 1) as usize;
        let r = row.clamp(0, self.height as i64 - 1) as usize;
        r * self.width + c
    }

    fn cell_reward(&self, s: usize) -> f64 {
        if s == self.goal() {
            self.goal_reward
        } else if self.is_cliff(s) {
            self.cliff_reward
        } else {
            self.step_reward
        }
    }

    /// Next-cell distribution for action `a` from `(col, row)`, as `(cell, prob)` pairs.
    fn moves_from(&self, col: usize, row: usize, a: usize) -> Vec<(usize, f64)> {
        let (c, r) = (col as i64, row as i64);
        let (dc, dr) = MOVES[a];
        let target = self.clip(c + dc, r + dr);
        let p = self.wind_prob;
        let mut out = vec![(target, 1.0 - p)];
        if p > 0.0 {
            let (oc, or) = match self.wind_model {
                WindModel::SourceSlip => (c, r),
                WindModel::TargetSlide => {
                    let t = target as i64;
                    (t % self.width as i64, t / self.width as i64)
                }
            };
            for (mc, mr) in MOVES {
                out.push((self.clip(oc + mc, or + mr), p / 4.0));
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.wind_prob) {
            return Err(Error::InvalidParameter(format!(
                "wind probability must lie in [0, 1], got {}",
                self.wind_prob
            )));
        }
        if self.width < 3 || self.height < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid {}x{} is too small for a cliff",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

pub fn build_cliff(config: &CliffConfig) -> Result<TabularMDP> {
    config.validate()?;
    let layout = config.layout();
    let n = layout.n_cells();
    let goal = config.goal();
    let terminal_cliff = config.cliff_mode == CliffMode::Terminal;
    let is_end = |s: usize| s == goal || (terminal_cliff && config.is_cliff(s));

    let mut transitions = vec![0.0; n * 4 * n];
    let mut rewards = vec![0.0; n * 4];
    for s in 0..n {
        let (col, row) = layout.coords(s);
        for a in 0..4 {
            let row_p = &mut transitions[(s * 4 + a) * n..(s * 4 + a + 1) * n];
            if is_end(s) {
                row_p[s] = 1.0;
                continue;
            }
            if config.is_cliff(s) {
                row_p[config.start()] = 1.0;
                rewards[s * 4 + a] = config.cliff_reward;
                continue;
            }
            let mut r = 0.0;
            for (t, w) in config.moves_from(col, row, a) {
                row_p[t] += w;
                r += w * config.cell_reward(t);
            }
            rewards[s * 4 + a] = match config.reward_timing {
                RewardTiming::OnEntry => r,
                RewardTiming::OnLeave => config.cell_reward(s),
            };
        }
    }
    let mdp = TabularMDP::from_flat(n, 4, transitions, rewards, config.discount)?
        .with_layout(layout)?;
    match config.terminal_handling {
        TerminalHandling::Pinned => mdp.with_terminal((0..n).map(is_end).collect()),
        TerminalHandling::Absorbing => Ok(mdp),
    }
}
