//! Compares affordance extraction against a brute-force scan over the whole
//! route polyline on randomized bent-lane scenes.

mod common;

use affdrive::affordance::{extract_affordances, AffordanceVector, SensingParams};
use affdrive::geometry::Pose;
use affdrive::scenario::map::{LightColor, PhaseSpec, StraightParams};
use affdrive::scenario::traffic::EntityKind;
use affdrive::scenario::{build_scenario, MapSource, RouteRequest, ScenarioConfig, WorldState};
use common::affordance_oracle::{check_scenes, entity};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn random_scenes_match_brute_force_scan() {
    let rep = check_scenes(0..1200).unwrap();
    // the generator must actually reach every branch
    assert!(rep.exercised.iter().all(|&n| n > 20), "{:?}", rep.exercised);
}

fn straight_world(p: StraightParams) -> WorldState {
    let cfg = ScenarioConfig {
        map: MapSource::Straight(p),
        background_vehicles: 0,
        min_route_length: 10.0,
        route: Some(RouteRequest { start: 0, goal: 1 }),
        ..Default::default()
    };
    build_scenario(&cfg, 1).unwrap()
}

#[test]
fn lead_vehicle_gap_is_bumper_to_bumper() {
    let mut w = straight_world(StraightParams::default());
    let front = w.ego.x + 0.5 * w.config.dynamics.length;
    w.entities.push(entity(EntityKind::Vehicle, Pose::new(front + 12.3 + 2.25, 0.0, 0.0), &mut ChaCha8Rng::seed_from_u64(0)));
    let a = extract_affordances(&w, &SensingParams::default());
    assert!((a.d_veh - 12.3).abs() < 1e-9, "{}", a.d_veh);
    assert!(!a.i_hazard);
    assert_eq!(a.d_ped, 50.0);
}

#[test]
fn red_light_ahead_is_reported() {
    let red = vec![PhaseSpec { state: LightColor::Red, duration: 1000.0 }];
    let w0 = straight_world(StraightParams::default());
    let front = w0.ego.x + 0.5 * w0.config.dynamics.length;
    let w = straight_world(StraightParams { lights: vec![(front + 18.0, red)], ..Default::default() });
    let a = extract_affordances(&w, &SensingParams::default());
    assert!(a.i_red);
    assert!((a.d_tl - 18.0).abs() < 1e-9, "{}", a.d_tl);
    assert!(!a.free_road(50.0));
}

#[test]
fn empty_road_reports_sentinels() {
    let w = straight_world(StraightParams::default());
    let a = extract_affordances(&w, &SensingParams::default());
    assert_eq!(a, AffordanceVector::clear(50.0));
}
