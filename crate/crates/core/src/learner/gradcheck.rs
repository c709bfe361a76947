//! Central finite-difference checks of the three SAC loss gradients.

use super::mlp::Mlp;
use super::policy::{draw_noise, sample_with_noise};
use super::sac::{actor_loss_grads, alpha_loss_grad, critic_input, critic_loss_grads};
use crate::rng::stream;
use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so that gradients that are zero
/// up to rounding do not produce spurious ratios.
pub const REL_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckSpec {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden: [usize; 2],
    pub batch: usize,
}

impl Default for GradCheckSpec {
    fn default() -> Self {
        Self { obs_dim: 3, act_dim: 1, hidden: [4, 4], batch: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub critic_params: usize,
    pub actor_params: usize,
    pub critic_max_rel: f64,
    pub actor_max_rel: f64,
    /// |analytic − closed-form| for the temperature derivative.
    pub alpha_abs_err: f64,
    /// |analytic − finite difference| for the temperature derivative.
    pub alpha_fd_err: f64,
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn fd_max_rel(net: &Mlp, analytic: &Mlp, loss: impl Fn(&Mlp) -> f64) -> f64 {
    let base = net.flat();
    let grad = analytic.flat();
    let mut p = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut v = base.clone();
        v[i] = base[i] + FD_STEP;
        p.set_flat(&v);
        let up = loss(&p);
        v[i] = base[i] - FD_STEP;
        p.set_flat(&v);
        let down = loss(&p);
        worst = worst.max(rel_err(grad[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

/// One randomized trial: random networks, batch, noise and temperature.
pub fn grad_check(spec: GradCheckSpec, seed: u64) -> GradCheckReport {
    let mut rng = stream(seed, "gradcheck");
    let [h1, h2] = spec.hidden;
    let actor = Mlp::new(&[spec.obs_dim, h1, h2, 2 * spec.act_dim], &mut rng);
    let cin = spec.obs_dim + spec.act_dim;
    let q1 = Mlp::new(&[cin, h1, h2, 1], &mut rng);
    let q2 = Mlp::new(&[cin, h1, h2, 1], &mut rng);
    let obs = draw_noise(spec.batch, spec.obs_dim, &mut rng);
    let act = draw_noise(spec.batch, spec.act_dim, &mut rng).mapv(f64::tanh);
    let y = Array1::from_shape_simple_fn(spec.batch, || rng.random_range(-2.0..2.0));
    let eps = draw_noise(spec.batch, spec.act_dim, &mut rng);
    let alpha: f64 = rng.random_range(0.05..1.5);
    let log_alpha = alpha.ln();
    let target_entropy = -(spec.act_dim as f64);

    let x = critic_input(obs.view(), act.view());
    let (_, g1, g2) = critic_loss_grads(&q1, &q2, x.view(), &y);
    let c1 = fd_max_rel(&q1, &g1, |q| critic_loss_grads(q, &q2, x.view(), &y).0);
    let c2 = fd_max_rel(&q2, &g2, |q| critic_loss_grads(&q1, q, x.view(), &y).0);

    let (_, ga, log_prob) = actor_loss_grads(&actor, &q1, &q2, obs.view(), eps.view(), alpha);
    let a_rel = fd_max_rel(&actor, &ga, |a| actor_loss_grads(a, &q1, &q2, obs.view(), eps.view(), alpha).0);

    let (_, g_alpha) = alpha_loss_grad(log_alpha, &log_prob, target_entropy);
    // closed form from an independent pass over the same samples
    let lp = sample_with_noise(&actor, obs.view(), eps.view()).log_prob;
    let closed = -lp.iter().map(|l| l + target_entropy).sum::<f64>() / spec.batch as f64;
    let up = alpha_loss_grad(log_alpha + FD_STEP, &log_prob, target_entropy).0;
    let down = alpha_loss_grad(log_alpha - FD_STEP, &log_prob, target_entropy).0;

    GradCheckReport {
        critic_params: q1.num_params(),
        actor_params: actor.num_params(),
        critic_max_rel: c1.max(c2),
        actor_max_rel: a_rel,
        alpha_abs_err: (g_alpha - closed).abs(),
        alpha_fd_err: (g_alpha - (up - down) / (2.0 * FD_STEP)).abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_is_small() {
        let r = grad_check(GradCheckSpec::default(), 0);
        assert!(r.critic_params <= 64 && r.actor_params <= 64, "{r:?}");
    }

    #[test]
    fn gradients_agree() {
        for seed in 0..5 {
            let r = grad_check(GradCheckSpec::default(), seed);
            assert!(r.critic_max_rel < 1e-5, "{r:?}");
            assert!(r.actor_max_rel < 1e-5, "{r:?}");
            assert!(r.alpha_abs_err < 1e-10, "{r:?}");
        }
    }
}
