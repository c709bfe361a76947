//! Scripted background traffic: signal phases, lane-following vehicles with
//! gap keeping, and crosswalk pedestrians.

use crate::geometry::{OrientedRect, Pose, Segment, Vec2};
use crate::scenario::map::{LightColor, LightSpec, RoadNetwork};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const VEHICLE_LENGTH: f64 = 4.5;
pub const VEHICLE_WIDTH: f64 = 2.0;
pub const PEDESTRIAN_SIZE: f64 = 0.6;

const BV_ACCEL: f64 = 2.0;
const BV_DECEL: f64 = 6.0;
const BV_COMFORT_DECEL: f64 = 4.0;
const BV_STANDSTILL_GAP: f64 = 2.0;
const BV_SCAN_AHEAD: f64 = 25.0;
const BV_SCAN_HALF_WIDTH: f64 = 1.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Vehicle,
    Pedestrian,
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpeedProfile {
    Constant,
    /// Drive for `go` seconds, halt for `stop` seconds, repeat.
    StopAndGo { go: f64, stop: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Behavior {
    LaneFollow {
        lane: usize,
        s: f64,
        cruise: f64,
        profile: SpeedProfile,
        clock: f64,
    },
    Crossing {
        crosswalk: usize,
        /// Meters walked from the start end.
        walked: f64,
        reverse: bool,
    },
    Parked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficEntity {
    pub kind: EntityKind,
    pub pose: Pose,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
    pub behavior: Behavior,
}

impl TrafficEntity {
    pub fn footprint(&self) -> OrientedRect {
        OrientedRect::new(self.pose, self.length, self.width)
    }

    pub fn is_road_user(&self) -> bool {
        matches!(self.kind, EntityKind::Vehicle | EntityKind::Pedestrian)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightState {
    pub phase: usize,
    pub color: LightColor,
    /// Seconds left in the current phase.
    pub countdown: f64,
}

impl LightState {
    pub fn initial(spec: &LightSpec) -> Self {
        let mut t = spec.offset.rem_euclid(spec.cycle());
        for (i, p) in spec.phases.iter().enumerate() {
            if t < p.duration {
                return Self { phase: i, color: p.state, countdown: p.duration - t };
            }
            t -= p.duration;
        }
        let last = spec.phases.len() - 1;
        Self { phase: last, color: spec.phases[last].state, countdown: spec.phases[last].duration }
    }

    pub fn tick(&mut self, spec: &LightSpec, dt: f64) {
        self.countdown -= dt;
        while self.countdown <= 0.0 {
            self.phase = (self.phase + 1) % spec.phases.len();
            self.color = spec.phases[self.phase].state;
            self.countdown += spec.phases[self.phase].duration;
        }
    }

    pub fn is_red(&self) -> bool {
        self.color == LightColor::Red
    }
}

pub fn parked(pose: Pose, length: f64, width: f64) -> TrafficEntity {
    TrafficEntity { kind: EntityKind::Static, pose, speed: 0.0, length, width, behavior: Behavior::Parked }
}

pub fn lane_vehicle(net: &RoadNetwork, lane: usize, s: f64, cruise: f64, profile: SpeedProfile) -> TrafficEntity {
    TrafficEntity {
        kind: EntityKind::Vehicle,
        pose: net.lanes[lane].pose_at(s),
        speed: cruise,
        length: VEHICLE_LENGTH,
        width: VEHICLE_WIDTH,
        behavior: Behavior::LaneFollow { lane, s, cruise, profile, clock: 0.0 },
    }
}

pub fn pedestrian(crosswalk: Segment, walked: f64, reverse: bool, index: usize) -> TrafficEntity {
    let (a, b) = if reverse { (crosswalk.b, crosswalk.a) } else { (crosswalk.a, crosswalk.b) };
    let dir = (b - a).normalized();
    let p = a + dir * walked;
    TrafficEntity {
        kind: EntityKind::Pedestrian,
        pose: Pose::new(p.x, p.y, dir.angle()),
        speed: 0.0,
        length: PEDESTRIAN_SIZE,
        width: PEDESTRIAN_SIZE,
        behavior: Behavior::Crossing { crosswalk: index, walked, reverse },
    }
}

/// Free gap ahead of a vehicle at `pose` among the given obstacles, measured
/// bumper to bumper in the vehicle's own frame.
fn gap_ahead<'a>(pose: Pose, half_len: f64, obstacles: impl Iterator<Item = (Vec2, f64)> + 'a) -> f64 {
    let f = pose.forward();
    let l = f.perp();
    let mut gap = f64::INFINITY;
    for (p, other_half) in obstacles {
        let d = p - pose.position();
        let dx = d.dot(f);
        if dx > 0.0 && dx < BV_SCAN_AHEAD && d.dot(l).abs() < BV_SCAN_HALF_WIDTH {
            gap = gap.min(dx - half_len - other_half);
        }
    }
    gap
}

/// Advances every vehicle and pedestrian by `dt`. Vehicles react to the
/// obstacle snapshot taken at the start of the step.
pub fn advance_entities<R: Rng>(
    net: &RoadNetwork,
    entities: &mut Vec<TrafficEntity>,
    lights: &[LightState],
    ego: &OrientedRect,
    ped_speed: f64,
    dt: f64,
    rng: &mut R,
) {
    let snapshot: Vec<(Vec2, f64)> = entities
        .iter()
        .filter(|e| e.kind != EntityKind::Static)
        .map(|e| (e.pose.position(), e.length * 0.5))
        .chain(std::iter::once((ego.center, ego.length * 0.5)))
        .collect();

    for e in entities.iter_mut() {
        match &mut e.behavior {
            Behavior::LaneFollow { lane, s, cruise, profile, clock } => {
                *clock += dt;
                let wanted = match *profile {
                    SpeedProfile::Constant => *cruise,
                    SpeedProfile::StopAndGo { go, stop } => {
                        if clock.rem_euclid(go + stop) < go {
                            *cruise
                        } else {
                            0.0
                        }
                    }
                };
                let half = e.length * 0.5;
                let own = e.pose.position();
                let mut gap = gap_ahead(
                    e.pose,
                    half,
                    snapshot.iter().copied().filter(|(p, _)| p.dist(own) > 1e-9),
                );
                let lane_len = net.lanes[*lane].length();
                if let Some(li) = net.light_at_end[*lane] {
                    if lights[li].is_red() {
                        let to_line = lane_len - *s - half;
                        let can_stop = to_line >= e.speed * e.speed / (2.0 * BV_DECEL) - 0.5;
                        if to_line >= -0.5 && can_stop {
                            gap = gap.min(to_line + BV_STANDSTILL_GAP);
                        }
                    }
                }
                let safe = (2.0 * BV_COMFORT_DECEL * (gap - BV_STANDSTILL_GAP).max(0.0)).sqrt();
                let target = wanted.min(safe);
                e.speed = if target > e.speed {
                    (e.speed + BV_ACCEL * dt).min(target)
                } else {
                    (e.speed - BV_DECEL * dt).max(target).max(0.0)
                };
                *s += e.speed * dt;
                while *s > net.lanes[*lane].length() {
                    let succ = &net.successors[*lane];
                    if succ.is_empty() {
                        // dead end: park at the lane end
                        *s = net.lanes[*lane].length();
                        e.speed = 0.0;
                        break;
                    }
                    *s -= net.lanes[*lane].length();
                    *lane = succ[rng.random_range(0..succ.len())];
                }
                e.pose = net.lanes[*lane].pose_at(*s);
            }
            Behavior::Crossing { crosswalk, walked, reverse } => {
                let cw = net.spec.crosswalks[*crosswalk];
                let seg = Segment::new(cw[0].into(), cw[1].into());
                *walked += ped_speed * dt;
                let moved = pedestrian(seg, *walked, *reverse, *crosswalk);
                e.pose = moved.pose;
                e.speed = ped_speed;
            }
            Behavior::Parked => {}
        }
    }

    // pedestrians that reached the far curb leave the scene
    entities.retain(|e| match e.behavior {
        Behavior::Crossing { crosswalk, walked, .. } => {
            let cw = net.spec.crosswalks[crosswalk];
            walked < Vec2::from(cw[0]).dist(cw[1].into())
        }
        _ => true,
    });
}
