//! Soft actor-critic: twin critics with target copies, squashed Gaussian
//! actor, automatic entropy temperature.

use super::adam::Adam;
use super::mlp::Mlp;
use super::policy::{draw_noise, policy_act, sample_with_noise, ActMode};
use super::replay::Batch;
use crate::error::{Error, Result};
use crate::rng::stream;
use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SacConfig {
    pub lr: f64,
    pub buffer_capacity: usize,
    pub learning_starts: u64,
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    pub target_entropy: f64,
    pub total_steps: u64,
    /// Hidden layer widths shared by actor and critics.
    pub hidden: Vec<usize>,
    pub init_alpha: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            buffer_capacity: 400_000,
            learning_starts: 50_000,
            batch_size: 256,
            gamma: 0.99,
            tau: 0.005,
            target_entropy: -2.0,
            total_steps: 300_000,
            hidden: vec![256, 256],
            init_alpha: 1.0,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("sac.lr", "must be > 0"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("sac.tau", "need 0 < tau <= 1"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("sac.gamma", "need 0 < gamma < 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("sac.batch_size", "must be >= 1"));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(Error::config("sac.buffer_capacity", "must be >= batch_size"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("sac.hidden", "need at least one non-empty hidden layer"));
        }
        if !(self.init_alpha > 0.0 && self.init_alpha.is_finite()) {
            return Err(Error::config("sac.init_alpha", "must be > 0"));
        }
        if !self.target_entropy.is_finite() {
            return Err(Error::config("sac.target_entropy", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    pub mean_log_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SacLearner {
    pub cfg: SacConfig,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub actor: Mlp,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub log_alpha: f64,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub alpha_opt: Adam,
    /// Gradient updates applied so far.
    pub updates: u64,
    /// Environment steps consumed by training so far.
    pub env_steps: u64,
    pub config_hash: String,
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut v = vec![input];
    v.extend_from_slice(hidden);
    v.push(output);
    v
}

fn join(obs: ArrayView2<f64>, act: ArrayView2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[obs, act]).expect("matching row counts")
}

pub fn critic_input(obs: ArrayView2<f64>, act: ArrayView2<f64>) -> Array2<f64> {
    join(obs, act)
}

/// Clipped double-Q targets `r + γ(1−done)(min Q'(s',a') − α log π(a'|s'))`
/// with `a'` drawn using the supplied noise. Terminal rows are exactly `r`.
#[allow(clippy::too_many_arguments)]
pub fn critic_targets(
    actor: &Mlp,
    q1_target: &Mlp,
    q2_target: &Mlp,
    batch: &Batch,
    eps_next: ArrayView2<f64>,
    alpha: f64,
    gamma: f64,
) -> Array1<f64> {
    let smp = sample_with_noise(actor, batch.next_obs.view(), eps_next);
    let x = join(batch.next_obs.view(), smp.action.view());
    let t1 = q1_target.forward(x.view());
    let t2 = q2_target.forward(x.view());
    Array1::from_shape_fn(batch.len(), |b| {
        let r = batch.reward[b];
        if batch.done[b] != 0.0 {
            r
        } else {
            r + gamma * (t1[[b, 0]].min(t2[[b, 0]]) - alpha * smp.log_prob[b])
        }
    })
}

/// `0.5·(mean (q1−y)² + mean (q2−y)²)` and its gradients for both critics.
pub fn critic_loss_grads(q1: &Mlp, q2: &Mlp, x: ArrayView2<f64>, y: &Array1<f64>) -> (f64, Mlp, Mlp) {
    let n = y.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(2);
    for q in [q1, q2] {
        let (out, cache) = q.forward_cached(x);
        let err = &out.column(0) - y;
        loss += 0.5 * err.mapv(|e| e * e).sum() / n;
        let d = (err / n).insert_axis(Axis(1));
        grads.push(q.backward(&cache, d).0);
    }
    let g2 = grads.pop().unwrap();
    let g1 = grads.pop().unwrap();
    (loss, g1, g2)
}

/// `mean(α log π(a|s) − min(Q1,Q2)(s,a))` with reparameterized actions from
/// the supplied noise. Returns loss, actor gradients and per-row log-probs.
pub fn actor_loss_grads(
    actor: &Mlp,
    q1: &Mlp,
    q2: &Mlp,
    obs: ArrayView2<f64>,
    eps: ArrayView2<f64>,
    alpha: f64,
) -> (f64, Mlp, Array1<f64>) {
    let n = obs.nrows();
    let nf = n as f64;
    let smp = sample_with_noise(actor, obs, eps);
    let x = join(obs, smp.action.view());
    let (o1, c1) = q1.forward_cached(x.view());
    let (o2, c2) = q2.forward_cached(x.view());
    let mut loss = 0.0;
    let mut d1 = Array2::zeros((n, 1));
    let mut d2 = Array2::zeros((n, 1));
    for b in 0..n {
        let (a, c) = (o1[[b, 0]], o2[[b, 0]]);
        // ties go to the first critic
        if a <= c {
            d1[[b, 0]] = -1.0 / nf;
        } else {
            d2[[b, 0]] = -1.0 / nf;
        }
        loss += alpha * smp.log_prob[b] - a.min(c);
    }
    loss /= nf;
    let od = obs.ncols();
    let dx1 = q1.backward(&c1, d1).1;
    let dx2 = q2.backward(&c2, d2).1;
    let d_action = &dx1.slice(s![.., od..]) + &dx2.slice(s![.., od..]);
    let d_logp = Array1::from_elem(n, alpha / nf);
    let g = smp.backward(actor, &d_logp, &d_action);
    (loss, g, smp.log_prob)
}

/// `−mean(log_alpha·(log π + target_entropy))` with log-probs treated as
/// constants; returns the loss and its derivative in `log_alpha`.
pub fn alpha_loss_grad(log_alpha: f64, log_prob: &Array1<f64>, target_entropy: f64) -> (f64, f64) {
    let m = log_prob.iter().map(|lp| lp + target_entropy).sum::<f64>() / log_prob.len() as f64;
    (-log_alpha * m, -m)
}

impl SacLearner {
    pub fn new(obs_dim: usize, act_dim: usize, cfg: SacConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream(seed, "sac-init");
        let actor = Mlp::new(&sizes(obs_dim, &cfg.hidden, 2 * act_dim), &mut rng);
        let q1 = Mlp::new(&sizes(obs_dim + act_dim, &cfg.hidden, 1), &mut rng);
        let q2 = Mlp::new(&sizes(obs_dim + act_dim, &cfg.hidden, 1), &mut rng);
        let critic_lens: Vec<usize> = q1.tensor_lens().into_iter().chain(q2.tensor_lens()).collect();
        Ok(Self {
            actor_opt: Adam::new(&actor.tensor_lens(), cfg.lr),
            critic_opt: Adam::new(&critic_lens, cfg.lr),
            alpha_opt: Adam::new(&[1], cfg.lr),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            log_alpha: cfg.init_alpha.ln(),
            actor,
            q1,
            q2,
            cfg,
            obs_dim,
            act_dim,
            updates: 0,
            env_steps: 0,
            config_hash: String::new(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// Errors unless the learner matches the given interface dimensions.
    pub fn check_dims(&self, obs_dim: usize, act_dim: usize) -> Result<()> {
        if self.obs_dim != obs_dim || self.act_dim != act_dim {
            return Err(Error::Shape(format!(
                "checkpoint expects obs_dim {} act_dim {}, environment has obs_dim {obs_dim} act_dim {act_dim}",
                self.obs_dim, self.act_dim
            )));
        }
        Ok(())
    }

    pub fn act<R: Rng>(&self, obs: &[f64], mode: ActMode, rng: &mut R) -> Result<(Vec<f64>, f64)> {
        policy_act(&self.actor, obs, mode, rng)
    }

    fn numeric_error(&self, what: &str, value: f64) -> Error {
        Error::Numeric(format!(
            "{what} loss is {value} at update {}; parameter norms actor {:.6e} q1 {:.6e} q2 {:.6e}, log_alpha {}",
            self.updates,
            self.actor.l2_norm(),
            self.q1.l2_norm(),
            self.q2.l2_norm(),
            self.log_alpha
        ))
    }

    pub fn update<R: Rng>(&mut self, batch: &Batch, rng: &mut R) -> Result<UpdateStats> {
        let eps_pi = draw_noise(batch.len(), self.act_dim, rng);
        let eps_next = draw_noise(batch.len(), self.act_dim, rng);
        self.update_with_noise(batch, eps_pi.view(), eps_next.view())
    }

    /// One full update with explicit policy noise for the current and next
    /// observations. Order: temperature, critics, actor, target networks.
    pub fn update_with_noise(
        &mut self,
        batch: &Batch,
        eps_pi: ArrayView2<f64>,
        eps_next: ArrayView2<f64>,
    ) -> Result<UpdateStats> {
        if batch.len() != self.cfg.batch_size {
            return Err(Error::Usage(format!("batch of {} but batch_size is {}", batch.len(), self.cfg.batch_size)));
        }
        if batch.obs.ncols() != self.obs_dim || batch.action.ncols() != self.act_dim {
            return Err(Error::Shape(format!(
                "batch dims ({}, {}) vs learner ({}, {})",
                batch.obs.ncols(),
                batch.action.ncols(),
                self.obs_dim,
                self.act_dim
            )));
        }
        let alpha = self.alpha();

        let pi = sample_with_noise(&self.actor, batch.obs.view(), eps_pi);
        let (alpha_loss, g_alpha) = alpha_loss_grad(self.log_alpha, &pi.log_prob, self.cfg.target_entropy);
        if !alpha_loss.is_finite() {
            return Err(self.numeric_error("temperature", alpha_loss));
        }

        let y = critic_targets(&self.actor, &self.q1_target, &self.q2_target, batch, eps_next, alpha, self.cfg.gamma);
        let x = join(batch.obs.view(), batch.action.view());
        let (critic_loss, g1, g2) = critic_loss_grads(&self.q1, &self.q2, x.view(), &y);
        if !critic_loss.is_finite() {
            return Err(self.numeric_error("critic", critic_loss));
        }

        let mut la = [self.log_alpha];
        self.alpha_opt.step(vec![&mut la], vec![&[g_alpha]]);
        self.log_alpha = la[0];
        let params: Vec<&mut [f64]> = self.q1.tensors_mut().into_iter().chain(self.q2.tensors_mut()).collect();
        let grads: Vec<&[f64]> = g1.tensors().into_iter().chain(g2.tensors()).collect();
        self.critic_opt.step(params, grads);

        let (actor_loss, g_actor, _) =
            actor_loss_grads(&self.actor, &self.q1, &self.q2, batch.obs.view(), eps_pi, alpha);
        if !actor_loss.is_finite() {
            return Err(self.numeric_error("actor", actor_loss));
        }
        self.actor_opt.step(self.actor.tensors_mut(), g_actor.tensors());

        self.q1_target.soft_update_from(&self.q1, self.cfg.tau);
        self.q2_target.soft_update_from(&self.q2, self.cfg.tau);
        self.updates += 1;

        Ok(UpdateStats {
            critic_loss,
            actor_loss,
            alpha_loss,
            alpha: self.alpha(),
            mean_log_prob: pi.log_prob.mean().unwrap_or(0.0),
        })
    }
}
