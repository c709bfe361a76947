//! Ground-truth driving affordances and the policy observation built from
//! them.
//!
//! The simulator plays the role of a perfect perception stack: every
//! affordance is read off the world state in the route frame. Longitudinal
//! distances are measured from the ego front bumper; entities count as
//! "ahead" when their center projects further along the route than the ego
//! center, and as "in corridor" when their signed route offset is within the
//! lane half width.

use crate::error::{Error, Result};
use crate::geometry::wrap_angle;
use crate::scenario::route::ConstraintKind;
use crate::scenario::traffic::EntityKind;
use crate::scenario::{EgoState, WorldState};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const OBS_DIM: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensingParams {
    /// Sensing range; also the sentinel for absent entities.
    pub d_sense: f64,
    /// Length of the hazard corridor ahead of the front bumper.
    pub hazard_length: f64,
    /// Scale observations into [−1, 1] before they reach the policy.
    pub normalize: bool,
}

impl Default for SensingParams {
    fn default() -> Self {
        Self { d_sense: 50.0, hazard_length: 10.0, normalize: true }
    }
}

impl SensingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_sense > 0.0 && self.d_sense.is_finite()) {
            return Err(Error::config("sensing.d_sense", "must be finite and > 0"));
        }
        if !(self.hazard_length > 0.0 && self.hazard_length <= self.d_sense) {
            return Err(Error::config("sensing.hazard_length", "must lie in (0, d_sense]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AffordanceVector {
    pub d_lat: f64,
    pub theta: f64,
    pub d_veh: f64,
    pub d_tl: f64,
    pub d_stop: f64,
    pub d_ped: f64,
    pub i_red: bool,
    pub i_stop: bool,
    pub i_hazard: bool,
}

impl AffordanceVector {
    /// Nothing in range, perfectly centred.
    pub fn clear(d_sense: f64) -> Self {
        Self { d_veh: d_sense, d_tl: d_sense, d_stop: d_sense, d_ped: d_sense, ..Default::default() }
    }

    pub fn is_finite(&self) -> bool {
        [self.d_lat, self.theta, self.d_veh, self.d_tl, self.d_stop, self.d_ped]
            .iter()
            .all(|v| v.is_finite())
    }

    /// True when a pedestrian is inside the corridor within sensing range.
    pub fn pedestrian_active(&self, d_sense: f64) -> bool {
        self.d_ped < d_sense
    }

    /// No legitimate reason to stand still.
    pub fn free_road(&self, d_sense: f64) -> bool {
        !(self.i_red || self.i_stop || self.i_hazard || self.pedestrian_active(d_sense))
    }

    /// Distance to the nearest active stopping constraint, or `d_sense` when
    /// none is active.
    pub fn constraint_distance(&self, d_sense: f64) -> f64 {
        let mut d = d_sense;
        if self.i_red {
            d = d.min(self.d_tl);
        }
        if self.i_stop {
            d = d.min(self.d_stop);
        }
        if self.pedestrian_active(d_sense) {
            d = d.min(self.d_ped);
        }
        d
    }
}

pub fn extract_affordances(w: &WorldState, params: &SensingParams) -> AffordanceVector {
    let d_sense = params.d_sense;
    let hw = w.map.spec.lane_half_width;
    let ego_half = 0.5 * w.config.dynamics.length;
    let proj = w.ego_projection();
    let front = proj.s + ego_half;
    let mut aff = AffordanceVector::clear(d_sense);
    aff.d_lat = proj.lateral.clamp(-d_sense, d_sense);
    aff.theta = wrap_angle(w.ego.heading - proj.tangent);

    // Euclidean pre-filter: an entity further than this cannot be within
    // sensing range along the route.
    let reach = d_sense + ego_half + hw + proj.lateral.abs();
    let ego_pos = w.ego.position();
    for e in &w.entities {
        let half = 0.5 * e.length;
        if e.pose.position().dist(ego_pos) > reach + half {
            continue;
        }
        let p = w.route.project(e.pose.position());
        if p.lateral.abs() > hw || p.s <= proj.s {
            continue;
        }
        let gap = (p.s - half - front).max(0.0);
        match e.kind {
            EntityKind::Pedestrian => aff.d_ped = aff.d_ped.min(gap),
            EntityKind::Vehicle | EntityKind::Static => aff.d_veh = aff.d_veh.min(gap),
        }
        if e.kind != EntityKind::Static && gap < params.hazard_length {
            aff.i_hazard = true;
        }
    }

    let next = |is_light: bool| {
        w.route.constraints.iter().find(|c| {
            matches!(c.kind, ConstraintKind::Light(_)) == is_light && c.s >= front && c.s - front < d_sense
        })
    };
    if let Some(c) = next(true) {
        if let ConstraintKind::Light(i) = c.kind {
            if w.lights[i].is_red() {
                aff.d_tl = c.s - front;
                aff.i_red = true;
            }
        }
    }
    if let Some(c) = next(false) {
        if let ConstraintKind::StopSign(i) = c.kind {
            aff.d_stop = c.s - front;
            aff.i_stop = !w.stop_satisfied[i];
        }
    }
    aff
}

/// The 12-dimensional policy input: nine affordances then speed and the two
/// previous commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn normalize(aff: &AffordanceVector, ego: &EgoState, params: &SensingParams, v_cap: f64) -> Result<Observation> {
    if !aff.is_finite() || !(ego.v.is_finite() && ego.prev_steer.is_finite() && ego.prev_long.is_finite()) {
        return Err(Error::Input("non-finite affordance or ego value".into()));
    }
    let (ds, ang, vs) = if params.normalize { (params.d_sense, PI, v_cap) } else { (1.0, 1.0, 1.0) };
    Ok(Observation([
        aff.d_lat / ds,
        aff.theta / ang,
        aff.d_veh / ds,
        aff.d_tl / ds,
        aff.d_stop / ds,
        aff.d_ped / ds,
        flag(aff.i_red),
        flag(aff.i_stop),
        flag(aff.i_hazard),
        ego.v / vs,
        ego.prev_steer,
        ego.prev_long,
    ]))
}

/// Inverse of [`normalize`]; returns the affordances and `(v, prev_steer, prev_long)`.
pub fn denormalize(obs: &Observation, params: &SensingParams, v_cap: f64) -> (AffordanceVector, [f64; 3]) {
    let o = &obs.0;
    let (ds, ang, vs) = if params.normalize { (params.d_sense, PI, v_cap) } else { (1.0, 1.0, 1.0) };
    let aff = AffordanceVector {
        d_lat: o[0] * ds,
        theta: o[1] * ang,
        d_veh: o[2] * ds,
        d_tl: o[3] * ds,
        d_stop: o[4] * ds,
        d_ped: o[5] * ds,
        i_red: o[6] > 0.5,
        i_stop: o[7] > 0.5,
        i_hazard: o[8] > 0.5,
    };
    (aff, [o[9] * vs, o[10], o[11]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_c: Vec<f64>,
    pub lambda_r: Vec<f64>,
}

impl LossWeights {
    pub fn new(lambda_c: Vec<f64>, lambda_r: Vec<f64>) -> Result<Self> {
        if lambda_c.iter().chain(&lambda_r).any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::Input("loss weights must be finite and >= 0".into()));
        }
        if !lambda_c.iter().chain(&lambda_r).any(|&l| l > 0.0) {
            return Err(Error::Input("at least one loss weight must be > 0".into()));
        }
        Ok(Self { lambda_c, lambda_r })
    }
}

/// Weighted sum of softmax cross-entropy over categorical heads and mean
/// squared error over regression heads.
pub fn multitask_loss(
    logits: &[Vec<f64>],
    classes: &[usize],
    values: &[Vec<f64>],
    targets: &[Vec<f64>],
    weights: &LossWeights,
) -> Result<f64> {
    if logits.len() != classes.len() || logits.len() != weights.lambda_c.len() {
        return Err(Error::Input(format!(
            "categorical arity mismatch: {} heads, {} targets, {} weights",
            logits.len(),
            classes.len(),
            weights.lambda_c.len()
        )));
    }
    if values.len() != targets.len() || values.len() != weights.lambda_r.len() {
        return Err(Error::Input(format!(
            "regression arity mismatch: {} heads, {} targets, {} weights",
            values.len(),
            targets.len(),
            weights.lambda_r.len()
        )));
    }
    let mut total = 0.0;
    for ((z, &c), &lam) in logits.iter().zip(classes).zip(&weights.lambda_c) {
        if c >= z.len() {
            return Err(Error::Input(format!("class {c} out of range for {} logits", z.len())));
        }
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lam * (lse - z[c]);
    }
    for ((p, t), &lam) in values.iter().zip(targets).zip(&weights.lambda_r) {
        if p.len() != t.len() || p.is_empty() {
            return Err(Error::Input(format!("regression head length {} vs target {}", p.len(), t.len())));
        }
        let mse = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
        total += lam * mse;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentinel_slots_normalize_to_one() {
        let p = SensingParams::default();
        let o = normalize(&AffordanceVector::clear(p.d_sense), &EgoState::default(), &p, 15.0).unwrap();
        assert_eq!(&o.0[2..6], &[1.0; 4]);
        assert_eq!(o.0[0], 0.0);
    }

    #[test]
    fn half_range_offset_scales_linearly() {
        let p = SensingParams::default();
        let aff = AffordanceVector { d_lat: -p.d_sense / 2.0, ..AffordanceVector::clear(p.d_sense) };
        let o = normalize(&aff, &EgoState::default(), &p, 15.0).unwrap();
        assert_eq!(o.0[0], -0.5);
    }

    #[test]
    fn normalize_rejects_nan() {
        let p = SensingParams::default();
        let aff = AffordanceVector { theta: f64::NAN, ..AffordanceVector::clear(p.d_sense) };
        assert!(matches!(normalize(&aff, &EgoState::default(), &p, 15.0), Err(Error::Input(_))));
    }

    #[test]
    fn binary_ce_at_zero_logits_is_ln2() {
        let w = LossWeights::new(vec![1.0], vec![]).unwrap();
        let l = multitask_loss(&[vec![0.0, 0.0]], &[0], &[], &[], &w).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((l - 0.693147).abs() < 1e-6);
    }

    #[test]
    fn exact_regression_with_no_ce_weight_is_zero() {
        let w = LossWeights::new(vec![0.0], vec![1.0, 2.0]).unwrap();
        let l = multitask_loss(
            &[vec![3.0, -1.0]],
            &[1],
            &[vec![1.0, 2.0], vec![0.5]],
            &[vec![1.0, 2.0], vec![0.5]],
            &w,
        )
        .unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn loss_is_linear_in_weights() {
        let logits = vec![vec![0.3, -1.2, 2.0], vec![1.0, 0.0]];
        let values = vec![vec![0.2, 0.4]];
        let targets = vec![vec![1.0, -0.4]];
        let w1 = LossWeights::new(vec![0.5, 1.5], vec![2.0]).unwrap();
        let w2 = LossWeights::new(vec![1.0, 3.0], vec![4.0]).unwrap();
        let a = multitask_loss(&logits, &[2, 1], &values, &targets, &w1).unwrap();
        let b = multitask_loss(&logits, &[2, 1], &values, &targets, &w2).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_prediction_is_near_zero() {
        let w = LossWeights::new(vec![1.0], vec![]).unwrap();
        let l = multitask_loss(&[vec![20.0, 0.0]], &[0], &[], &[], &w).unwrap();
        assert!(l > 0.0 && l < 1e-6);
    }

    #[test]
    fn arity_mismatch_is_an_input_error() {
        let w = LossWeights::new(vec![1.0], vec![1.0]).unwrap();
        assert!(multitask_loss(&[vec![0.0, 0.0]], &[0], &[], &[], &w).is_err());
        assert!(multitask_loss(&[vec![0.0, 0.0]], &[2], &[vec![1.0]], &[vec![1.0]], &w).is_err());
        assert!(LossWeights::new(vec![0.0], vec![0.0]).is_err());
    }
}
