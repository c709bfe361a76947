//! Brute-force affordance oracle over randomized bent-lane scenes.

use affdrive::affordance::{extract_affordances, AffordanceVector, SensingParams};
use affdrive::geometry::{Pose, Vec2};
use affdrive::scenario::map::{LightColor, LightSpec, MapSpec, PhaseSpec};
use affdrive::scenario::traffic::{Behavior, EntityKind, TrafficEntity};
use affdrive::scenario::{build_scenario, MapSource, RouteRequest, ScenarioConfig, WorldState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const HW: f64 = 1.75;

struct Lane {
    pts: Vec<Vec2>,
}

impl Lane {
    fn random(rng: &mut ChaCha8Rng) -> Lane {
        let mut pts = vec![Vec2::new(0.0, 0.0)];
        let mut h: f64 = rng.random_range(-3.0..3.0);
        for _ in 0..4 {
            let len = rng.random_range(45.0..70.0);
            let last = *pts.last().unwrap();
            pts.push(last + Vec2::new(h.cos(), h.sin()) * len);
            h += rng.random_range(-0.35..0.35);
        }
        Lane { pts }
    }

    fn length(&self) -> f64 {
        self.pts.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    /// Point and heading at arc length `s`, plus distance to the nearest vertex.
    fn at(&self, s: f64) -> (Vec2, f64, f64) {
        let mut acc = 0.0;
        for w in self.pts.windows(2) {
            let l = w[0].dist(w[1]);
            if s <= acc + l {
                let d = (w[1] - w[0]) * (1.0 / l);
                let near = (s - acc).min(acc + l - s);
                return (w[0] + d * (s - acc), d.y.atan2(d.x), near);
            }
            acc += l;
        }
        let n = self.pts.len();
        let d = (self.pts[n - 1] - self.pts[n - 2]).normalized();
        (self.pts[n - 1], d.y.atan2(d.x), 0.0)
    }

    fn line_at(&self, s: f64) -> [[f64; 2]; 2] {
        let (p, h, _) = self.at(s);
        let l = Vec2::new(-h.sin(), h.cos()) * HW;
        [[(p + l).x, (p + l).y], [(p - l).x, (p - l).y]]
    }
}

struct Proj {
    s: f64,
    lateral: f64,
    tangent: f64,
}

/// Global nearest-point scan with an explicit arc-length walk.
fn oracle_project(pts: &[Vec2], p: Vec2) -> Proj {
    let mut walked = 0.0;
    let mut best = (f64::INFINITY, Proj { s: 0.0, lateral: 0.0, tangent: 0.0 });
    for w in pts.windows(2) {
        let ab = w[1] - w[0];
        let l2 = ab.x * ab.x + ab.y * ab.y;
        let t = (((p - w[0]).x * ab.x + (p - w[0]).y * ab.y) / l2).clamp(0.0, 1.0);
        let q = w[0] + ab * t;
        let d = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt();
        if d < best.0 {
            let cross = ab.x * (p - q).y - ab.y * (p - q).x;
            best = (
                d,
                Proj { s: walked + t * l2.sqrt(), lateral: if cross < 0.0 { -d } else { d }, tangent: ab.y.atan2(ab.x) },
            );
        }
        walked += l2.sqrt();
    }
    best.1
}

/// Arc length where a stop line crosses the route, if it does.
fn oracle_crossing(pts: &[Vec2], line: [[f64; 2]; 2]) -> Option<f64> {
    let (c, d) = (Vec2::from(line[0]), Vec2::from(line[1]));
    let mut walked = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let r = b - a;
        let q = d - c;
        let den = r.x * q.y - r.y * q.x;
        if den.abs() > 1e-12 {
            let t = ((c - a).x * q.y - (c - a).y * q.x) / den;
            let u = ((c - a).x * r.y - (c - a).y * r.x) / den;
            if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
                return Some(walked + t * r.norm());
            }
        }
        walked += r.norm();
    }
    None
}

fn wrap(a: f64) -> f64 {
    let mut x = a % (2.0 * std::f64::consts::PI);
    if x <= -std::f64::consts::PI {
        x += 2.0 * std::f64::consts::PI;
    } else if x > std::f64::consts::PI {
        x -= 2.0 * std::f64::consts::PI;
    }
    x
}

pub fn oracle(w: &WorldState, lights: &[[[f64; 2]; 2]], stops: &[[[f64; 2]; 2]], params: &SensingParams) -> AffordanceVector {
    let pts: Vec<Vec2> = w.route.waypoints.iter().map(|p| p.position()).collect();
    let ego = oracle_project(&pts, w.ego.position());
    let front = ego.s + 0.5 * w.config.dynamics.length;
    let ds = params.d_sense;
    let mut a = AffordanceVector::clear(ds);
    a.d_lat = ego.lateral.clamp(-ds, ds);
    a.theta = wrap(w.ego.heading - ego.tangent);
    for e in &w.entities {
        let p = oracle_project(&pts, e.pose.position());
        if p.lateral.abs() > HW || p.s <= ego.s {
            continue;
        }
        let gap = (p.s - 0.5 * e.length - front).max(0.0);
        if e.kind == EntityKind::Pedestrian {
            a.d_ped = a.d_ped.min(gap);
        } else {
            a.d_veh = a.d_veh.min(gap);
        }
        if e.kind != EntityKind::Static && gap < params.hazard_length {
            a.i_hazard = true;
        }
    }
    let next = |lines: &[[[f64; 2]; 2]]| {
        lines
            .iter()
            .enumerate()
            .filter_map(|(i, l)| oracle_crossing(&pts, *l).map(|s| (i, s - front)))
            .filter(|&(_, d)| d >= 0.0 && d < ds)
            .min_by(|x, y| x.1.total_cmp(&y.1))
    };
    if let Some((i, d)) = next(lights) {
        if w.lights[i].color == LightColor::Red {
            a.d_tl = d;
            a.i_red = true;
        }
    }
    if let Some((i, d)) = next(stops) {
        a.d_stop = d;
        a.i_stop = !w.stop_satisfied[i];
    }
    a
}

pub fn entity(kind: EntityKind, pose: Pose, rng: &mut ChaCha8Rng) -> TrafficEntity {
    let (length, width) = match kind {
        EntityKind::Vehicle => (4.5, 2.0),
        EntityKind::Pedestrian => (0.6, 0.6),
        EntityKind::Static => (rng.random_range(0.5..5.0), rng.random_range(0.5..2.0)),
    };
    TrafficEntity { kind, pose, speed: 0.0, length, width, behavior: Behavior::Parked }
}

pub fn random_scene(seed: u64) -> (WorldState, Vec<[[f64; 2]; 2]>, Vec<[[f64; 2]; 2]>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lane = Lane::random(&mut rng);
    let total = lane.length();

    // constraint lines away from bends and from each other
    let mut used: Vec<f64> = Vec::new();
    let mut place = |rng: &mut ChaCha8Rng| loop {
        let s = rng.random_range(20.0..total - 20.0);
        if lane.at(s).2 > 4.0 && used.iter().all(|u| (u - s).abs() > 6.0) {
            used.push(s);
            return lane.line_at(s);
        }
    };
    let n_lights = rng.random_range(0..4);
    let n_stops = rng.random_range(0..4);
    let lights: Vec<_> = (0..n_lights).map(|_| place(&mut rng)).collect();
    let stops: Vec<_> = (0..n_stops).map(|_| place(&mut rng)).collect();

    let (p0, h0, _) = lane.at(5.0);
    let (p1, h1, _) = lane.at(total - 5.0);
    let spec = MapSpec {
        name: format!("bent-{seed}"),
        lanes: vec![lane.pts.iter().map(|p| [p.x, p.y]).collect()],
        lane_half_width: HW,
        lights: lights
            .iter()
            .map(|l| LightSpec {
                stop_line: *l,
                phases: vec![PhaseSpec { state: LightColor::Red, duration: 1000.0 }],
                offset: 0.0,
            })
            .collect(),
        stop_signs: stops.clone(),
        crosswalks: Vec::new(),
        static_objects: Vec::new(),
        spawn_points: vec![[p0.x, p0.y, h0], [p1.x, p1.y, h1]],
    };
    let cfg = ScenarioConfig {
        map: MapSource::Inline(spec),
        background_vehicles: 0,
        min_route_length: 10.0,
        route: Some(RouteRequest { start: 0, goal: 1 }),
        ..Default::default()
    };
    let mut w = build_scenario(&cfg, seed).expect("scene builds");

    let ego_s = rng.random_range(10.0..total - 80.0);
    let (ep, eh, _) = lane.at(ego_s);
    let off = rng.random_range(-1.5..1.5);
    let pos = ep + Vec2::new(-eh.sin(), eh.cos()) * off;
    w.ego.x = pos.x;
    w.ego.y = pos.y;
    w.ego.heading = eh + rng.random_range(-0.5..0.5);
    w.ego.v = rng.random_range(0.0..12.0);
    w.route.resync(pos);

    for l in w.lights.iter_mut() {
        l.color = if rng.random_bool(0.5) { LightColor::Red } else { LightColor::Green };
    }
    for s in w.stop_satisfied.iter_mut() {
        *s = rng.random_bool(0.3);
    }

    w.entities.clear();
    for _ in 0..rng.random_range(0..10) {
        let s = (ego_s + rng.random_range(-20.0..70.0)).clamp(1.0, total - 1.0);
        let (p, h, _) = lane.at(s);
        let lat = rng.random_range(-4.0..4.0);
        let q = p + Vec2::new(-h.sin(), h.cos()) * lat;
        let kind = match rng.random_range(0..3) {
            0 => EntityKind::Vehicle,
            1 => EntityKind::Pedestrian,
            _ => EntityKind::Static,
        };
        let heading = rng.random_range(-3.1..3.1);
        w.entities.push(entity(kind, Pose::new(q.x, q.y, heading), &mut rng));
    }
    (w, lights, stops)
}

/// Largest component-wise difference, or the first flag mismatch.
pub fn compare(a: &AffordanceVector, b: &AffordanceVector) -> Result<f64, String> {
    let pairs = [
        ("d_lat", a.d_lat, b.d_lat),
        ("theta", a.theta, b.theta),
        ("d_veh", a.d_veh, b.d_veh),
        ("d_tl", a.d_tl, b.d_tl),
        ("d_stop", a.d_stop, b.d_stop),
        ("d_ped", a.d_ped, b.d_ped),
    ];
    if (a.i_red, a.i_stop, a.i_hazard) != (b.i_red, b.i_stop, b.i_hazard) {
        return Err(format!("flags {:?} vs oracle {:?}", (a.i_red, a.i_stop, a.i_hazard), (b.i_red, b.i_stop, b.i_hazard)));
    }
    let mut worst: f64 = 0.0;
    for (name, x, y) in pairs {
        let d = (x - y).abs();
        if !(d <= 1e-9) {
            return Err(format!("{name} {x} vs oracle {y}"));
        }
        worst = worst.max(d);
    }
    Ok(worst)
}

/// Outcome of [`check_scenes`].
pub struct SceneReport {
    pub scenes: usize,
    pub max_abs_err: f64,
    /// Scenes exercising: lead vehicle, pedestrian, red light, unsatisfied
    /// stop, hazard, satisfied stop.
    pub exercised: [usize; 6],
}

pub fn check_scenes(seeds: std::ops::Range<u64>) -> Result<SceneReport, String> {
    let params = SensingParams::default();
    let mut rep = SceneReport { scenes: 0, max_abs_err: 0.0, exercised: [0; 6] };
    for seed in seeds {
        let (w, lights, stops) = random_scene(seed);
        let got = extract_affordances(&w, &params);
        let want = oracle(&w, &lights, &stops, &params);
        rep.max_abs_err = rep.max_abs_err.max(compare(&got, &want).map_err(|e| format!("seed {seed}: {e}"))?);
        let hits = [
            want.d_veh < params.d_sense,
            want.d_ped < params.d_sense,
            want.i_red,
            want.i_stop,
            want.i_hazard,
            want.d_stop < params.d_sense && !want.i_stop,
        ];
        for (n, hit) in rep.exercised.iter_mut().zip(hits) {
            *n += hit as usize;
        }
        rep.scenes += 1;
    }
    Ok(rep)
}
