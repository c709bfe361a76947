//! Reset/step environment over the scenario, affordance and reward modules.

use crate::affordance::{extract_affordances, normalize, AffordanceVector, Observation, SensingParams, OBS_DIM};
use crate::error::{Error, Result};
use crate::reward::{total_reward, RewardBreakdown, RewardConfig, StepContext};
use crate::scenario::map::RoadNetwork;
use crate::scenario::{build_scenario_on, detect_events, EgoState, EventSet, ScenarioConfig, WorldState};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub use crate::scenario::Action;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub scenario: ScenarioConfig,
    pub sensing: SensingParams,
    pub reward: RewardConfig,
    /// Truncation cap; reaching it carries no penalty.
    pub max_steps: u64,
    /// Plan a fresh route after the destination bonus. When off, reaching
    /// the destination ends the episode as truncated.
    pub replan_on_destination: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            sensing: SensingParams::default(),
            reward: RewardConfig::default(),
            max_steps: 3000,
            replan_on_destination: true,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.sensing.validate()?;
        self.reward.validate()?;
        if self.max_steps == 0 {
            return Err(Error::config("env.max_steps", "must be >= 1"));
        }
        Ok(())
    }
}

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    RedLight,
    StopSign,
    CollisionVehicleOrPedestrian,
    CollisionOther,
    OffLane,
    NoProgress,
    MaxSteps,
    Destination,
    ReplanFailed,
}

impl EndReason {
    pub fn name(self) -> &'static str {
        match self {
            EndReason::RedLight => "red_light",
            EndReason::StopSign => "stop_sign",
            EndReason::CollisionVehicleOrPedestrian => "collision_vehicle_or_pedestrian",
            EndReason::CollisionOther => "collision_other",
            EndReason::OffLane => "off_lane",
            EndReason::NoProgress => "no_progress",
            EndReason::MaxSteps => "max_steps",
            EndReason::Destination => "destination",
            EndReason::ReplanFailed => "replan_failed",
        }
    }

    /// Terminal reason for an event set, most severe first.
    pub fn from_events(ev: &EventSet) -> Option<EndReason> {
        [
            (ev.collision_vehicle_or_pedestrian, EndReason::CollisionVehicleOrPedestrian),
            (ev.red_light_violation, EndReason::RedLight),
            (ev.stop_sign_violation, EndReason::StopSign),
            (ev.collision_other, EndReason::CollisionOther),
            (ev.off_lane, EndReason::OffLane),
            (ev.no_progress, EndReason::NoProgress),
        ]
        .into_iter()
        .find(|(hit, _)| *hit)
        .map(|(_, r)| r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub breakdown: RewardBreakdown,
    pub events: EventSet,
    /// Affordances after the step, before any replan.
    pub affordances: AffordanceVector,
    pub delta_k: usize,
    /// Step counter after this step.
    pub t: u64,
    pub ego: EgoState,
    /// Action actually applied, after clamping.
    pub action: Action,
    pub replanned: bool,
    pub end: Option<EndReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Debug, Clone)]
pub struct Env {
    config: Arc<EnvConfig>,
    scenario: Arc<ScenarioConfig>,
    net: Arc<RoadNetwork>,
    world: Option<WorldState>,
    last_aff: AffordanceVector,
    done: bool,
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let net = Arc::new(RoadNetwork::new(config.scenario.map.resolve()?)?);
        Ok(Self {
            scenario: Arc::new(config.scenario.clone()),
            last_aff: AffordanceVector::clear(config.sensing.d_sense),
            config: Arc::new(config),
            net,
            world: None,
            done: true,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn network(&self) -> &Arc<RoadNetwork> {
        &self.net
    }

    /// Current world, if an episode has been started.
    pub fn world(&self) -> Option<&WorldState> {
        self.world.as_ref()
    }

    /// Mutable access for scripted tests.
    pub fn world_mut(&mut self) -> Option<&mut WorldState> {
        self.world.as_mut()
    }

    pub fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let w = build_scenario_on(self.net.clone(), self.scenario.clone(), seed)?;
        self.world = Some(w);
        self.done = false;
        self.observe()
    }

    /// Recomputes the observation of the current world, e.g. after a scripted
    /// edit through [`Env::world_mut`].
    pub fn observe(&mut self) -> Result<Observation> {
        let w = self.world.as_ref().ok_or_else(|| Error::Usage("no episode: call reset first".into()))?;
        self.last_aff = extract_affordances(w, &self.config.sensing);
        normalize(&self.last_aff, &w.ego, &self.config.sensing, w.config.dynamics.v_cap)
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::Usage("step called on a finished episode; call reset".into()));
        }
        if !action.is_finite() {
            return Err(Error::Input(format!("non-finite action {action:?}")));
        }
        let cfg = self.config.clone();
        let w = self.world.as_mut().expect("active episode has a world");
        let prev = w.clone();
        let delta_k = w.advance(action, w.config.dt)?;
        let aff = extract_affordances(w, &cfg.sensing);
        w.record_progress(delta_k, aff.free_road(cfg.sensing.d_sense));
        let events = detect_events(&prev, w);

        let ctx = StepContext {
            aff,
            prev_aff: self.last_aff,
            ego: w.ego,
            prev_ego: prev.ego,
            delta_k,
            events,
            d_sense: cfg.sensing.d_sense,
        };
        let breakdown = total_reward(&ctx, &cfg.reward);

        let mut end = EndReason::from_events(&events);
        let terminated = end.is_some();
        let mut truncated = false;
        let mut replanned = false;
        if !terminated && events.reached_destination {
            if cfg.replan_on_destination {
                replanned = w.replan();
                if !replanned {
                    truncated = true;
                    end = Some(EndReason::ReplanFailed);
                }
            } else {
                truncated = true;
                end = Some(EndReason::Destination);
            }
        }
        if !terminated && !truncated && w.t_step >= cfg.max_steps {
            truncated = true;
            end = Some(EndReason::MaxSteps);
        }

        let info = StepInfo {
            breakdown,
            events,
            affordances: aff,
            delta_k,
            t: w.t_step,
            ego: w.ego,
            action: action.clamped(),
            replanned,
            end,
        };
        self.done = terminated || truncated;
        let obs = if replanned {
            self.observe()?
        } else {
            self.last_aff = aff;
            normalize(&aff, &w.ego, &cfg.sensing, w.config.dynamics.v_cap)?
        };
        Ok(StepResult { obs, reward: breakdown.total, terminated, truncated, info })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::map::{LightColor, PhaseSpec, StraightParams};
    use crate::scenario::{MapSource, RouteRequest};

    fn straight_env(p: StraightParams) -> Env {
        let mut cfg = EnvConfig::default();
        cfg.scenario = ScenarioConfig {
            map: MapSource::Straight(p),
            background_vehicles: 0,
            min_route_length: 10.0,
            route: Some(RouteRequest { start: 0, goal: 1 }),
            ..Default::default()
        };
        Env::new(cfg).unwrap()
    }

    #[test]
    fn reset_is_deterministic_and_zeroed() {
        let mut env = Env::new(EnvConfig::default()).unwrap();
        let a = env.reset(1).unwrap();
        let b = env.reset(1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.len(), 12);
        assert_eq!((a.0[10], a.0[11]), (0.0, 0.0));
    }

    #[test]
    fn step_before_reset_and_after_end_is_usage_error() {
        let mut env = straight_env(StraightParams::default());
        assert!(matches!(env.step(Action::default()), Err(Error::Usage(_))));
        env.reset(0).unwrap();
        let mut last = None;
        for _ in 0..60 {
            let r = env.step(Action::new(0.0, -1.0)).unwrap();
            if r.done() {
                last = Some(r);
                break;
            }
        }
        let r = last.expect("idling ends the episode");
        assert!(r.terminated && !r.truncated);
        assert_eq!(r.info.end, Some(EndReason::NoProgress));
        assert_eq!(r.info.t, 50);
        assert_eq!(r.info.breakdown.event, -50.0);
        assert!(matches!(env.step(Action::default()), Err(Error::Usage(_))));
    }

    #[test]
    fn out_of_range_action_is_clamped() {
        let mut env = straight_env(StraightParams::default());
        env.reset(0).unwrap();
        let r = env.step(Action::new(3.0, 7.0)).unwrap();
        assert_eq!(r.info.action, Action::new(1.0, 1.0));
        assert_eq!(r.obs.0[10], 1.0);
        assert!(env.step(Action::new(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn red_light_violation_terminates() {
        let red = vec![PhaseSpec { state: LightColor::Red, duration: 1e6 }];
        let mut env = straight_env(StraightParams { lights: vec![(30.0, red)], ..Default::default() });
        env.reset(0).unwrap();
        env.world_mut().unwrap().ego.v = 10.0;
        let mut r = None;
        for _ in 0..40 {
            let s = env.step(Action::new(0.0, 0.0)).unwrap();
            if s.done() {
                r = Some(s);
                break;
            }
        }
        let r = r.unwrap();
        assert!(r.terminated);
        assert!(r.info.events.red_light_violation);
        assert_eq!(r.info.breakdown.event, -100.0);
    }

    #[test]
    fn max_steps_truncates() {
        let mut env = straight_env(StraightParams::default());
        let mut cfg = env.config().clone();
        cfg.max_steps = 5;
        env = Env::new(cfg).unwrap();
        env.reset(0).unwrap();
        for i in 1..=5 {
            let r = env.step(Action::new(0.0, 0.3)).unwrap();
            assert_eq!(r.truncated, i == 5);
            assert!(!r.terminated);
        }
    }
}
