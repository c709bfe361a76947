//! One-dimensional "approach and stop at a line" task scored by the rule and
//! speed reward terms only, plus a scripted reference controller.

use super::sac::SacConfig;
use super::train::{Task, TaskStep};
use crate::error::{Error, Result};
use crate::reward::{rule_reward, speed_reward, RewardConfig};
use crate::rng::stream;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopLineConfig {
    pub dt: f64,
    pub horizon: u64,
    /// Initial distance to the line is drawn uniformly from this range.
    pub start_distance: [f64; 2],
    pub start_speed: [f64; 2],
    /// Passing the line by more than this ends the episode.
    pub overshoot: f64,
    pub accel: f64,
    pub brake: f64,
    pub v_cap: f64,
    /// Distance normalization for the observation.
    pub d_scale: f64,
    pub reward: RewardConfig,
}

/// SAC settings sized for this task on a single CPU core: narrower
/// networks, an early start of updates, and target entropy −|A|.
pub fn sanity_sac_config() -> SacConfig {
    SacConfig {
        hidden: vec![64, 64],
        batch_size: 128,
        learning_starts: 2_000,
        buffer_capacity: 100_000,
        target_entropy: -1.0,
        total_steps: 100_000,
        ..SacConfig::default()
    }
}

impl Default for StopLineConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            horizon: 100,
            start_distance: [1.0, 45.0],
            start_speed: [0.0, 8.0],
            overshoot: 2.0,
            accel: 3.0,
            brake: 8.0,
            v_cap: 15.0,
            d_scale: 50.0,
            reward: RewardConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StopLineTask {
    pub cfg: StopLineConfig,
    /// Signed distance from the front bumper to the line.
    pub d: f64,
    pub v: f64,
    pub prev_long: f64,
    pub t: u64,
    done: bool,
}

impl StopLineTask {
    pub fn new(cfg: StopLineConfig) -> Self {
        Self { cfg, d: 0.0, v: 0.0, prev_long: 0.0, t: 0, done: true }
    }

    fn obs(&self) -> Vec<f64> {
        vec![(self.d / self.cfg.d_scale).clamp(-1.0, 1.0), self.v / self.cfg.v_cap, self.prev_long]
    }

    /// State after one step of command `long` from `(d, v)`.
    pub fn transition(&self, d: f64, v: f64, long: f64) -> (f64, f64) {
        let long = long.clamp(-1.0, 1.0);
        let acc = if long >= 0.0 { long * self.cfg.accel } else { long * self.cfg.brake };
        (d - v * self.cfg.dt, (v + acc * self.cfg.dt).clamp(0.0, self.cfg.v_cap))
    }

    /// Where a full-brake sequence from `(d, v)` comes to rest.
    fn rest_distance(&self, mut d: f64, mut v: f64) -> f64 {
        while v > 0.0 {
            (d, v) = self.transition(d, v, -1.0);
        }
        d
    }

    /// Scripted bang-bang controller: full throttle up to the desired speed,
    /// then full brake as late as still lets it stop short of the line.
    pub fn reference_action(&self) -> f64 {
        const STOP_MARGIN: f64 = 0.5;
        let go = if self.v < self.cfg.reward.v_des { 1.0 } else { 0.0 };
        let (d1, v1) = self.transition(self.d, self.v, go);
        if self.rest_distance(d1, v1) >= STOP_MARGIN {
            go
        } else {
            -1.0
        }
    }

    /// Mean undiscounted return of the reference controller over `seeds`.
    pub fn reference_returns(&mut self, seeds: &[u64]) -> Result<Vec<f64>> {
        seeds
            .iter()
            .map(|&s| {
                self.reset(s)?;
                let mut ret = 0.0;
                loop {
                    let st = self.step(&[self.reference_action()])?;
                    ret += st.reward;
                    if st.terminated || st.truncated {
                        return Ok(ret);
                    }
                }
            })
            .collect()
    }
}

impl Task for StopLineTask {
    fn obs_dim(&self) -> usize {
        3
    }

    fn act_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let mut rng = stream(seed, "stopline");
        let [d0, d1] = self.cfg.start_distance;
        let [v0, v1] = self.cfg.start_speed;
        self.d = rng.random_range(d0..=d1);
        self.v = rng.random_range(v0..=v1);
        self.prev_long = 0.0;
        self.t = 0;
        self.done = false;
        Ok(self.obs())
    }

    fn step(&mut self, action: &[f64]) -> Result<TaskStep> {
        if self.done {
            return Err(Error::Usage("step called on a finished episode; call reset".into()));
        }
        let long = match action {
            [a] if a.is_finite() => a.clamp(-1.0, 1.0),
            _ => return Err(Error::Input(format!("expected one finite action value, got {action:?}"))),
        };
        (self.d, self.v) = self.transition(self.d, self.v, long);
        self.prev_long = long;
        self.t += 1;
        let r = &self.cfg.reward;
        let reward = rule_reward(self.d.max(0.0), self.v, r) + speed_reward(self.v, r);
        let terminated = self.d < -self.cfg.overshoot;
        let truncated = !terminated && self.t >= self.cfg.horizon;
        self.done = terminated || truncated;
        Ok(TaskStep { obs: self.obs(), reward, terminated, truncated })
    }
}
