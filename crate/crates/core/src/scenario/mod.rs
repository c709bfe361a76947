//! Deterministic 2D urban micro-world.
//!
//! A [`WorldState`] owns the road network, the current route, the ego
//! vehicle, scripted traffic and signal phases. It advances with
//! [`step_world`]; [`detect_events`] compares two consecutive states and
//! reports the terminal/one-time events the reward layer consumes.

pub mod map;
pub mod route;
pub mod traffic;

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, OrientedRect, Pose, Segment, Vec2};
use crate::rng::{stream, StreamRng};
use map::{grid_map, straight_map, GridParams, LanePos, MapSpec, RoadNetwork, StraightParams};
use rand::Rng;
use route::{ConstraintKind, Route, RouteProjection};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::sync::Arc;
use traffic::{EntityKind, LightState, SpeedProfile, TrafficEntity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapSource {
    Grid(GridParams),
    Straight(StraightParams),
    File(PathBuf),
    Inline(MapSpec),
}

impl MapSource {
    pub fn resolve(&self) -> Result<MapSpec> {
        match self {
            MapSource::Grid(p) => Ok(grid_map(p)),
            MapSource::Straight(p) => Ok(straight_map(p)),
            MapSource::File(path) => MapSpec::load(path),
            MapSource::Inline(m) => {
                m.validate()?;
                Ok(m.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsParams {
    pub wheelbase: f64,
    pub max_steer_deg: f64,
    /// Acceleration at full throttle, m/s².
    pub accel: f64,
    /// Deceleration at full brake, m/s².
    pub brake: f64,
    pub v_cap: f64,
    pub length: f64,
    pub width: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.9,
            max_steer_deg: 35.0,
            accel: 3.0,
            brake: 8.0,
            v_cap: 15.0,
            length: traffic::VEHICLE_LENGTH,
            width: traffic::VEHICLE_WIDTH,
        }
    }
}

impl DynamicsParams {
    pub fn max_steer(&self) -> f64 {
        self.max_steer_deg.to_radians()
    }
}

/// Fixed start/goal spawn indices, used for benchmark routes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteRequest {
    pub start: usize,
    pub goal: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub map: MapSource,
    pub dt: f64,
    pub dynamics: DynamicsParams,
    pub waypoint_spacing: f64,
    pub goal_radius: f64,
    pub off_lane_margin: f64,
    pub stuck_steps: u32,
    /// Speed below which the ego counts as stopped for stop signs.
    pub stop_speed: f64,
    /// Distance before a stop-sign line inside which a stop satisfies it.
    pub stop_zone: f64,
    /// Pedestrian crossing trigger rate per crosswalk, events per second.
    pub pedestrian_rate: f64,
    pub pedestrian_range: f64,
    pub pedestrian_speed: f64,
    /// Background vehicle preset (20 sparse / 40 normal / 60 dense).
    pub background_vehicles: usize,
    /// Scales the preset count down to the micro-map.
    pub density_factor: f64,
    pub min_route_length: f64,
    pub max_route_retries: usize,
    pub route: Option<RouteRequest>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            map: MapSource::Grid(GridParams::default()),
            dt: 0.1,
            dynamics: DynamicsParams::default(),
            waypoint_spacing: 0.6,
            goal_radius: 4.0,
            off_lane_margin: 0.5,
            stuck_steps: 50,
            stop_speed: 0.5,
            stop_zone: 4.0,
            pedestrian_rate: 0.02,
            pedestrian_range: 30.0,
            pedestrian_speed: 1.4,
            background_vehicles: 40,
            density_factor: 0.25,
            min_route_length: 60.0,
            max_route_retries: 32,
            route: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("scenario.{name}"), "must be finite and > 0"))
            }
        };
        pos("dt", self.dt)?;
        pos("dynamics.wheelbase", self.dynamics.wheelbase)?;
        pos("dynamics.v_cap", self.dynamics.v_cap)?;
        pos("dynamics.length", self.dynamics.length)?;
        pos("dynamics.width", self.dynamics.width)?;
        pos("goal_radius", self.goal_radius)?;
        pos("stop_speed", self.stop_speed)?;
        if !(route::MIN_WAYPOINT_GAP..=route::MAX_WAYPOINT_GAP).contains(&self.waypoint_spacing) {
            return Err(Error::config("scenario.waypoint_spacing", "must lie in [0.5, 4.0]"));
        }
        if self.stuck_steps == 0 {
            return Err(Error::config("scenario.stuck_steps", "must be >= 1"));
        }
        if self.density_factor < 0.0 {
            return Err(Error::config("scenario.density_factor", "must be >= 0"));
        }
        Ok(())
    }

    pub fn vehicle_count(&self) -> usize {
        (self.background_vehicles as f64 * self.density_factor).round() as usize
    }
}

/// Steering and longitudinal command, each in [−1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub steer: f64,
    pub long: f64,
}

impl Action {
    pub const fn new(steer: f64, long: f64) -> Self {
        Self { steer, long }
    }

    pub fn is_finite(&self) -> bool {
        self.steer.is_finite() && self.long.is_finite()
    }

    pub fn clamped(&self) -> Action {
        Action::new(self.steer.clamp(-1.0, 1.0), self.long.clamp(-1.0, 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub prev_steer: f64,
    pub prev_long: f64,
}

impl EgoState {
    pub fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, self.heading)
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn footprint(&self, d: &DynamicsParams) -> OrientedRect {
        OrientedRect::new(self.pose(), d.length, d.width)
    }

    /// One kinematic-bicycle step referenced at the vehicle center. Position
    /// and heading integrate with the speed at the start of the step; the
    /// speed is then updated and clamped to `[0, v_cap]`.
    pub fn integrate(&self, action: Action, d: &DynamicsParams, dt: f64) -> EgoState {
        let delta = action.steer * d.max_steer();
        let beta = (0.5 * delta.tan()).atan();
        let yaw_rate = 2.0 * self.v * beta.sin() / d.wheelbase;
        let accel = if action.long >= 0.0 { action.long * d.accel } else { action.long * d.brake };
        EgoState {
            x: self.x + self.v * (self.heading + beta).cos() * dt,
            y: self.y + self.v * (self.heading + beta).sin() * dt,
            heading: wrap_angle(self.heading + yaw_rate * dt),
            v: (self.v + accel * dt).clamp(0.0, d.v_cap),
            prev_steer: action.steer,
            prev_long: action.long,
        }
    }
}

/// One-time events observed across one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventSet {
    pub red_light_violation: bool,
    pub stop_sign_violation: bool,
    pub collision_vehicle_or_pedestrian: bool,
    pub collision_other: bool,
    pub off_lane: bool,
    pub no_progress: bool,
    pub reached_destination: bool,
}

impl EventSet {
    pub fn any_collision(&self) -> bool {
        self.collision_vehicle_or_pedestrian || self.collision_other
    }

    /// True if any episode-ending event fired.
    pub fn is_terminal(&self) -> bool {
        self.red_light_violation
            || self.stop_sign_violation
            || self.any_collision()
            || self.off_lane
            || self.no_progress
    }

    /// Infractions counted by distance-per-violation (no-progress excluded).
    pub fn violation_count(&self) -> u32 {
        [
            self.red_light_violation,
            self.stop_sign_violation,
            self.collision_vehicle_or_pedestrian,
            self.collision_other,
            self.off_lane,
        ]
        .iter()
        .filter(|&&b| b)
        .count() as u32
    }

    pub fn is_empty(&self) -> bool {
        *self == EventSet::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldRng {
    pub traffic: StreamRng,
    pub pedestrians: StreamRng,
    pub routes: StreamRng,
}

impl WorldRng {
    pub fn new(seed: u64) -> Self {
        Self {
            traffic: stream(seed, "traffic"),
            pedestrians: stream(seed, "pedestrians"),
            routes: stream(seed, "routes"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub config: Arc<ScenarioConfig>,
    pub map: Arc<RoadNetwork>,
    pub route: Route,
    pub ego: EgoState,
    pub entities: Vec<TrafficEntity>,
    pub lights: Vec<LightState>,
    /// Per stop sign: the ego has come to a stop inside the approach zone.
    pub stop_satisfied: Vec<bool>,
    pub t_step: u64,
    pub no_progress_counter: u32,
    /// Number of successful replans in this episode.
    pub replans: u32,
    pub replan_failed: bool,
    pub rng: WorldRng,
}

/// Builds the initial world for `(config, seed)`, resolving the map.
pub fn build_scenario(config: &ScenarioConfig, seed: u64) -> Result<WorldState> {
    config.validate()?;
    let net = Arc::new(RoadNetwork::new(config.map.resolve()?)?);
    build_scenario_on(net, Arc::new(config.clone()), seed)
}

/// Builds the initial world on an already-resolved road network.
pub fn build_scenario_on(net: Arc<RoadNetwork>, config: Arc<ScenarioConfig>, seed: u64) -> Result<WorldState> {
    let mut rng = WorldRng::new(seed);
    let route = match config.route {
        Some(req) => plan_between(&net, &config, req.start, req.goal).ok_or_else(|| Error::Scenario {
            map: net.name().to_string(),
            reason: format!("no route from spawn {} to spawn {}", req.start, req.goal),
        })?,
        None => sample_route(&net, &config, &mut rng.routes).ok_or_else(|| Error::Scenario {
            map: net.name().to_string(),
            reason: format!("no route found after {} attempts", config.max_route_retries),
        })?,
    };
    let start = route.waypoints[0];
    let ego = EgoState { x: start.x, y: start.y, heading: start.heading, ..Default::default() };

    let mut entities: Vec<TrafficEntity> = net
        .spec
        .static_objects
        .iter()
        .map(|o| traffic::parked(Pose::new(o.pose[0], o.pose[1], o.pose[2]), o.length, o.width))
        .collect();
    spawn_vehicles(&net, &config, ego.position(), &mut entities, &mut rng.traffic);

    let lights = net.spec.lights.iter().map(LightState::initial).collect();
    Ok(WorldState {
        stop_satisfied: vec![false; net.spec.stop_signs.len()],
        config,
        map: net,
        route,
        ego,
        entities,
        lights,
        t_step: 0,
        no_progress_counter: 0,
        replans: 0,
        replan_failed: false,
        rng,
    })
}

fn spawn_pose(net: &RoadNetwork, idx: usize) -> Option<LanePos> {
    let p = net.spec.spawn_points.get(idx)?;
    net.locate(Pose::new(p[0], p[1], p[2]), net.spec.lane_half_width)
}

fn plan_between(net: &RoadNetwork, cfg: &ScenarioConfig, start: usize, goal: usize) -> Option<Route> {
    let from = spawn_pose(net, start)?;
    let to = spawn_pose(net, goal)?;
    let pts = net.plan(from, to)?;
    Some(Route::from_polyline(&pts, cfg.waypoint_spacing, &net.spec))
}

fn sample_route(net: &RoadNetwork, cfg: &ScenarioConfig, rng: &mut StreamRng) -> Option<Route> {
    let n = net.spec.spawn_points.len();
    for _ in 0..cfg.max_route_retries {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b && n > 1 {
            continue;
        }
        if let Some(r) = plan_between(net, cfg, a, b) {
            if r.length() >= cfg.min_route_length {
                return Some(r);
            }
        }
    }
    None
}

fn spawn_vehicles(
    net: &RoadNetwork,
    cfg: &ScenarioConfig,
    ego: Vec2,
    entities: &mut Vec<TrafficEntity>,
    rng: &mut StreamRng,
) {
    let wanted = cfg.vehicle_count();
    let mut placed = 0;
    let mut attempts = 0;
    while placed < wanted && attempts < 50 * wanted.max(1) {
        attempts += 1;
        let lane = rng.random_range(0..net.lanes.len());
        let len = net.lanes[lane].length();
        if len < 6.0 {
            continue;
        }
        let s = rng.random_range(0.0..len - traffic::VEHICLE_LENGTH);
        let cruise = rng.random_range(5.0..8.0);
        let profile = if rng.random_bool(0.3) {
            SpeedProfile::StopAndGo { go: rng.random_range(6.0..12.0), stop: rng.random_range(2.0..4.0) }
        } else {
            SpeedProfile::Constant
        };
        let v = traffic::lane_vehicle(net, lane, s, cruise, profile);
        let p = v.pose.position();
        let clear = p.dist(ego) > 15.0
            && entities
                .iter()
                .filter(|e| e.kind == EntityKind::Vehicle)
                .all(|e| e.pose.position().dist(p) > 9.0);
        if clear {
            entities.push(v);
            placed += 1;
        }
    }
}

impl WorldState {
    pub fn dynamics(&self) -> &DynamicsParams {
        &self.config.dynamics
    }

    pub fn ego_footprint(&self) -> OrientedRect {
        self.ego.footprint(&self.config.dynamics)
    }

    /// Ego center projected onto the current route.
    pub fn ego_projection(&self) -> RouteProjection {
        self.route.project(self.ego.position())
    }

    /// Arc length of the ego front bumper along the route.
    pub fn ego_front_s(&self) -> f64 {
        self.ego_projection().s + 0.5 * self.config.dynamics.length
    }

    pub fn constraint_line(&self, kind: ConstraintKind) -> Segment {
        match kind {
            ConstraintKind::Light(i) => self.map.spec.lights[i].segment(),
            ConstraintKind::StopSign(i) => {
                let l = self.map.spec.stop_signs[i];
                Segment::new(l[0].into(), l[1].into())
            }
        }
    }

    /// Advances the world in place; returns the waypoint increment Δk.
    pub fn advance(&mut self, action: Action, dt: f64) -> Result<usize> {
        if !action.is_finite() {
            return Err(Error::Input(format!("non-finite action {action:?}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Input(format!("time step must be > 0, got {dt}")));
        }
        let action = action.clamped();
        let prev_fp = self.ego_footprint();
        self.ego = self.ego.integrate(action, &self.config.dynamics, dt);
        let ego_fp = self.ego_footprint();

        traffic::advance_entities(
            &self.map,
            &mut self.entities,
            &self.lights,
            &ego_fp,
            self.config.pedestrian_speed,
            dt,
            &mut self.rng.traffic,
        );
        self.trigger_pedestrians(dt);
        for (st, spec) in self.lights.iter_mut().zip(&self.map.spec.lights) {
            st.tick(spec, dt);
        }
        self.t_step += 1;

        let proj = self.ego_projection();
        let delta_k = self.route.advance_to(proj.s);

        let front = proj.s + 0.5 * self.config.dynamics.length;
        for c in self.route.constraints.clone() {
            if let ConstraintKind::StopSign(i) = c.kind {
                let d = c.s - front;
                if d >= 0.0 && d <= self.config.stop_zone && self.ego.v < self.config.stop_speed {
                    self.stop_satisfied[i] = true;
                }
                let line = self.constraint_line(c.kind);
                if prev_fp.intersects_segment(&line) && !ego_fp.intersects_segment(&line) {
                    self.stop_satisfied[i] = false;
                }
            }
        }
        Ok(delta_k)
    }

    fn trigger_pedestrians(&mut self, dt: f64) {
        let p = self.config.pedestrian_rate * dt;
        for (i, cw) in self.map.spec.crosswalks.iter().enumerate() {
            let busy = self
                .entities
                .iter()
                .any(|e| matches!(e.behavior, traffic::Behavior::Crossing { crosswalk, .. } if crosswalk == i));
            let seg = Segment::new(cw[0].into(), cw[1].into());
            if busy || seg.midpoint().dist(self.ego.position()) > self.config.pedestrian_range {
                continue;
            }
            if self.rng.pedestrians.random::<f64>() < p {
                let reverse = self.rng.pedestrians.random_bool(0.5);
                self.entities.push(traffic::pedestrian(seg, 0.0, reverse, i));
            }
        }
    }

    /// Updates the stuck counter: it resets whenever the route index moves
    /// or a legitimate stopping constraint is active.
    pub fn record_progress(&mut self, delta_k: usize, free_road: bool) {
        if delta_k > 0 || !free_road {
            self.no_progress_counter = 0;
        } else {
            self.no_progress_counter += 1;
        }
    }

    /// Plans a new route from the current ego pose to a freshly sampled
    /// spawn point. On failure the world is flagged with `replan_failed`.
    pub fn replan(&mut self) -> bool {
        let cfg = self.config.clone();
        let net = self.map.clone();
        let from = match net.locate(self.ego.pose(), 2.0 * net.spec.lane_half_width) {
            Some(p) => p,
            None => {
                self.replan_failed = true;
                return false;
            }
        };
        let n = net.spec.spawn_points.len();
        for _ in 0..cfg.max_route_retries {
            let g = self.rng.routes.random_range(0..n);
            let Some(to) = spawn_pose(&net, g) else { continue };
            let Some(pts) = net.plan(from, to) else { continue };
            let r = Route::from_polyline(&pts, cfg.waypoint_spacing, &net.spec);
            if r.length() >= cfg.min_route_length {
                self.route = r;
                self.no_progress_counter = 0;
                self.stop_satisfied.iter_mut().for_each(|s| *s = false);
                self.replans += 1;
                return true;
            }
        }
        self.replan_failed = true;
        false
    }
}

/// Pure successor: clones `w` and advances it by one step.
pub fn step_world(w: &WorldState, action: Action, dt: f64) -> Result<WorldState> {
    let mut next = w.clone();
    next.advance(action, dt)?;
    Ok(next)
}

/// Pure replanning wrapper around [`WorldState::replan`].
pub fn replan_route(w: &WorldState) -> WorldState {
    let mut next = w.clone();
    next.replan();
    next
}

/// Events that occurred while moving from `prev` to `cur`.
pub fn detect_events(prev: &WorldState, cur: &WorldState) -> EventSet {
    let cfg = &cur.config;
    let prev_fp = prev.ego_footprint();
    let fp = cur.ego_footprint();
    let mut ev = EventSet::default();

    for c in &cur.route.constraints {
        let line = cur.constraint_line(c.kind);
        let entered = fp.intersects_segment(&line) && !prev_fp.intersects_segment(&line);
        if !entered {
            continue;
        }
        match c.kind {
            ConstraintKind::Light(i) => {
                if prev.lights[i].is_red() {
                    ev.red_light_violation = true;
                }
            }
            ConstraintKind::StopSign(i) => {
                if !cur.stop_satisfied[i] {
                    ev.stop_sign_violation = true;
                }
            }
        }
    }

    let mut hit_road_user = false;
    let mut hit_other = false;
    for e in &cur.entities {
        if fp.overlaps(&e.footprint()) {
            if e.is_road_user() {
                hit_road_user = true;
            } else {
                hit_other = true;
            }
        }
    }
    ev.collision_vehicle_or_pedestrian = hit_road_user;
    ev.collision_other = hit_other && !hit_road_user;

    let proj = cur.ego_projection();
    ev.off_lane = proj.lateral.abs() > cur.map.spec.lane_half_width + cfg.off_lane_margin;
    ev.no_progress = cur.no_progress_counter >= cfg.stuck_steps;
    ev.reached_destination = cur.ego.position().dist(cur.route.goal) <= cfg.goal_radius
        && proj.s >= cur.route.length() - 2.0 * cfg.goal_radius;
    ev
}

#[cfg(test)]
mod tests;
