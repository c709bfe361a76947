//! Shaped driving reward: lane keeping, speed tracking, control smoothness,
//! route progress, traffic-rule deceleration shaping, and one-time events.

use crate::affordance::AffordanceVector;
use crate::error::{Error, Result};
use crate::scenario::{EgoState, EventSet};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Rewards for one-time events. Everything except `reached_destination`
/// ends the episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EventTable {
    pub red_light_violation: f64,
    pub stop_sign_violation: f64,
    pub collision_vehicle_or_pedestrian: f64,
    pub collision_other: f64,
    pub off_lane: f64,
    pub no_progress: f64,
    pub reached_destination: f64,
}

impl Default for EventTable {
    fn default() -> Self {
        Self {
            red_light_violation: -100.0,
            stop_sign_violation: -100.0,
            collision_vehicle_or_pedestrian: -100.0,
            collision_other: -50.0,
            off_lane: -50.0,
            no_progress: -50.0,
            reached_destination: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Toggles {
    pub lane: bool,
    pub speed: bool,
    pub smooth: bool,
    pub prog: bool,
    pub rule: bool,
    pub event: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        RewardPreset::Full.toggles()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardPreset {
    /// Every term enabled.
    Full,
    /// Rule-compliance shaping disabled; other dense terms kept.
    SparseRule,
    /// Only the one-time event rewards.
    FullySparse,
}

impl RewardPreset {
    pub fn toggles(self) -> Toggles {
        let dense = self != RewardPreset::FullySparse;
        Toggles {
            lane: dense,
            speed: dense,
            smooth: dense,
            prog: dense,
            rule: self == RewardPreset::Full,
            event: true,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RewardPreset::Full => "full",
            RewardPreset::SparseRule => "sparse-rule",
            RewardPreset::FullySparse => "fully-sparse",
        }
    }
}

impl fmt::Display for RewardPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RewardPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(RewardPreset::Full),
            "sparse-rule" => Ok(RewardPreset::SparseRule),
            "fully-sparse" => Ok(RewardPreset::FullySparse),
            other => Err(Error::config("reward.preset", format!("unknown preset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub w_l1: f64,
    pub w_l2: f64,
    pub w_s1: f64,
    pub w_s2: f64,
    pub w_sm1: f64,
    pub w_sm2: f64,
    pub w_pr1: f64,
    pub w_r1: f64,
    pub w_r2: f64,
    /// Effective stopping distance of the deceleration ramp, meters.
    pub d_stop: f64,
    /// Speed that counts as stopped, m/s.
    pub v_stop: f64,
    pub v_max: f64,
    pub v_des: f64,
    pub events: EventTable,
    pub toggles: Toggles,
}

impl Default for RewardConfig {
    fn default() -> Self {
        let urban = 30.0 / 3.6;
        Self {
            w_l1: 1.0,
            w_l2: 0.2,
            w_s1: 0.65,
            w_s2: -0.7,
            w_sm1: -0.7,
            w_sm2: -0.5,
            w_pr1: 0.4,
            w_r1: -1.8,
            w_r2: 1.5,
            d_stop: 10.0,
            v_stop: 0.5,
            v_max: urban,
            v_des: urban,
            events: EventTable::default(),
            toggles: Toggles::default(),
        }
    }
}

impl RewardConfig {
    pub fn with_preset(preset: RewardPreset) -> Self {
        Self { toggles: preset.toggles(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_stop > 0.0) {
            return Err(Error::config("reward.d_stop", "must be > 0"));
        }
        if !(self.v_stop > 0.0 && self.v_stop < self.v_max) {
            return Err(Error::config("reward.v_stop", "need 0 < v_stop < v_max"));
        }
        if !(self.v_des >= 0.0) {
            return Err(Error::config("reward.v_des", "must be >= 0"));
        }
        Ok(())
    }
}

/// Per-step reward split by component.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub lane: f64,
    pub speed: f64,
    pub smooth: f64,
    pub prog: f64,
    pub rule: f64,
    pub event: f64,
    pub total: f64,
}

impl RewardBreakdown {
    /// The fixed summation order used for `total`.
    pub fn sum_components(&self) -> f64 {
        self.lane + self.speed + self.smooth + self.prog + self.rule + self.event
    }
}

pub fn lane_reward(d_lat: f64, theta: f64, cfg: &RewardConfig) -> f64 {
    cfg.w_l1 * (-2.5 * d_lat.abs()).exp() + cfg.w_l2 / (1.0 + 3.0 * theta.abs())
}

pub fn speed_reward(v: f64, cfg: &RewardConfig) -> f64 {
    cfg.w_s1 * (1.0 - ((v - cfg.v_des).abs() / cfg.v_max).min(1.0)) + cfg.w_s2 * (v - cfg.v_max).max(0.0) / cfg.v_max
}

pub fn smooth_reward(d_steer: f64, d_theta: f64, cfg: &RewardConfig) -> f64 {
    cfg.w_sm1 * d_steer.abs() + cfg.w_sm2 * d_theta.abs()
}

/// `free_road` is 1 when no stopping constraint is active; idling is only
/// penalized then.
pub fn progress_reward(delta_k: usize, free_road: bool, cfg: &RewardConfig) -> f64 {
    let moving = if delta_k > 0 { 1.0 } else { 0.0 };
    let free = if free_road { 1.0 } else { 0.0 };
    cfg.w_pr1 * (delta_k as f64 - free * (1.0 - moving))
}

/// Distance-based decay: 1 at the constraint, 0 beyond `d_stop`.
pub fn eta(d: f64, cfg: &RewardConfig) -> f64 {
    1.0 - d.min(cfg.d_stop) / cfg.d_stop
}

pub fn rule_reward(d: f64, v: f64, cfg: &RewardConfig) -> f64 {
    let bonus = if d < 2.0 && v < cfg.v_stop { 1.0 - v / cfg.v_stop } else { 0.0 };
    cfg.w_r1 * eta(d, cfg) * v / cfg.v_max + cfg.w_r2 * bonus
}

/// Returns the one-time reward and whether the episode terminates. When
/// several terminal events coincide the single most negative one applies;
/// terminal events always pre-empt the destination bonus.
pub fn event_reward(events: &EventSet, cfg: &RewardConfig) -> (f64, bool) {
    let t = &cfg.events;
    let terminal = [
        (events.red_light_violation, t.red_light_violation),
        (events.stop_sign_violation, t.stop_sign_violation),
        (events.collision_vehicle_or_pedestrian, t.collision_vehicle_or_pedestrian),
        (events.collision_other, t.collision_other),
        (events.off_lane, t.off_lane),
        (events.no_progress, t.no_progress),
    ];
    let worst = terminal
        .iter()
        .filter(|(hit, _)| *hit)
        .map(|&(_, r)| r)
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.min(r))));
    match worst {
        Some(r) => (r, true),
        None if events.reached_destination => (t.reached_destination, false),
        None => (0.0, false),
    }
}

/// Everything the reward needs about one transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext {
    pub aff: AffordanceVector,
    pub prev_aff: AffordanceVector,
    /// Ego after the step; `prev_steer` holds the command just applied.
    pub ego: EgoState,
    /// Ego before the step; `prev_steer` holds the command of step t−1.
    pub prev_ego: EgoState,
    pub delta_k: usize,
    pub events: EventSet,
    pub d_sense: f64,
}

pub fn total_reward(ctx: &StepContext, cfg: &RewardConfig) -> RewardBreakdown {
    let on = &cfg.toggles;
    let gate = |enabled: bool, f: &dyn Fn() -> f64| if enabled { f() } else { 0.0 };
    let mut b = RewardBreakdown {
        lane: gate(on.lane, &|| lane_reward(ctx.aff.d_lat, ctx.aff.theta, cfg)),
        speed: gate(on.speed, &|| speed_reward(ctx.ego.v, cfg)),
        smooth: gate(on.smooth, &|| {
            smooth_reward(ctx.ego.prev_steer - ctx.prev_ego.prev_steer, ctx.aff.theta - ctx.prev_aff.theta, cfg)
        }),
        prog: gate(on.prog, &|| progress_reward(ctx.delta_k, ctx.aff.free_road(ctx.d_sense), cfg)),
        rule: gate(on.rule, &|| rule_reward(ctx.aff.constraint_distance(ctx.d_sense), ctx.ego.v, cfg)),
        event: gate(on.event, &|| event_reward(&ctx.events, cfg).0),
        total: 0.0,
    };
    b.total = b.sum_components();
    b
}
