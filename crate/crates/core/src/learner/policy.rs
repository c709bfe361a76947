//! Tanh-squashed diagonal Gaussian policy head.

use super::mlp::{Mlp, MlpCache};
use crate::error::{Error, Result};
use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActMode {
    Stochastic,
    Deterministic,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln(1 − tanh²(u))`, stable for large |u|.
pub fn log1m_tanh2(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

/// Log density of a squashed sample `a = tanh(u)`, `u ~ N(mean, exp(log_std))`,
/// with `log_std` already clamped.
pub fn squashed_log_prob(mean: &[f64], log_std: &[f64], a: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(a)
        .map(|((&m, &ls), &ai)| {
            let u = ai.atanh();
            let z = (u - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LN_2PI - log1m_tanh2(u)
        })
        .sum()
}

/// A reparameterized batch sample together with what backprop needs.
#[derive(Debug, Clone)]
pub struct SquashedSample {
    pub action: Array2<f64>,
    pub log_prob: Array1<f64>,
    pub mean: Array2<f64>,
    /// Clamped log standard deviation.
    pub log_std: Array2<f64>,
    pub u: Array2<f64>,
    pub eps: Array2<f64>,
    /// 1 where the raw log-std lay inside the clamp range.
    pub in_range: Array2<f64>,
    cache: MlpCache,
}

/// Splits the actor output into mean and raw log-std halves.
fn heads(out: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let a = out.ncols() / 2;
    (out.slice(s![.., ..a]).to_owned(), out.slice(s![.., a..]).to_owned())
}

/// `u = mean + std·eps`, `a = tanh(u)` with the change-of-variables log-prob.
pub fn sample_with_noise(actor: &Mlp, obs: ArrayView2<f64>, eps: ArrayView2<f64>) -> SquashedSample {
    let (out, cache) = actor.forward_cached(obs);
    let (mean, raw) = heads(&out);
    let in_range = raw.mapv(|v| if (LOG_STD_MIN..=LOG_STD_MAX).contains(&v) { 1.0 } else { 0.0 });
    let log_std = raw.mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
    let u = &mean + &(log_std.mapv(f64::exp) * eps);
    let action = u.mapv(f64::tanh);
    let n = obs.nrows();
    let log_prob = Array1::from_shape_fn(n, |b| {
        (0..mean.ncols())
            .map(|i| -0.5 * eps[[b, i]] * eps[[b, i]] - log_std[[b, i]] - HALF_LN_2PI - log1m_tanh2(u[[b, i]]))
            .sum()
    });
    SquashedSample { action, log_prob, mean, log_std, u, eps: eps.to_owned(), in_range, cache }
}

impl SquashedSample {
    /// Actor parameter gradients given `∂L/∂log_prob` per row and `∂L/∂action`.
    pub fn backward(&self, actor: &Mlp, d_logp: &Array1<f64>, d_action: &Array2<f64>) -> Mlp {
        let (n, a) = self.u.dim();
        let mut d_out = Array2::zeros((n, 2 * a));
        for b in 0..n {
            for i in 0..a {
                let u = self.u[[b, i]];
                let th = self.action[[b, i]];
                let sech2 = log1m_tanh2(u).exp();
                // log_prob depends on u through −ln(1 − tanh²u): derivative 2·tanh u
                let d_u = d_logp[b] * 2.0 * th + d_action[[b, i]] * sech2;
                let std = self.log_std[[b, i]].exp();
                d_out[[b, i]] = d_u;
                d_out[[b, a + i]] = self.in_range[[b, i]] * (d_u * std * self.eps[[b, i]] - d_logp[b]);
            }
        }
        actor.backward(&self.cache, d_out).0
    }
}

pub fn draw_noise<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Acts on a single observation. Deterministic mode returns `tanh(mean)` and
/// the log density at that point.
pub fn policy_act<R: Rng>(actor: &Mlp, obs: &[f64], mode: ActMode, rng: &mut R) -> Result<(Vec<f64>, f64)> {
    if obs.len() != actor.input_dim() {
        return Err(Error::Shape(format!("observation has {} values, actor expects {}", obs.len(), actor.input_dim())));
    }
    if obs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite observation {obs:?}")));
    }
    let x = Array2::from_shape_vec((1, obs.len()), obs.to_vec()).expect("row vector");
    let a = actor.output_dim() / 2;
    let eps = match mode {
        ActMode::Stochastic => draw_noise(1, a, rng),
        ActMode::Deterministic => Array2::zeros((1, a)),
    };
    let smp = sample_with_noise(actor, x.view(), eps.view());
    if smp.mean.iter().chain(smp.log_std.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "actor produced non-finite output (mean {:?}, log_std {:?}, parameter norm {})",
            smp.mean.row(0).to_vec(),
            smp.log_std.row(0).to_vec(),
            actor.l2_norm()
        )));
    }
    Ok((smp.action.row(0).to_vec(), smp.log_prob[0]))
}
