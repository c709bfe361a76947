//! Off-policy training loop and deterministic policy evaluation.

use super::policy::ActMode;
use super::replay::{ReplayBuffer, Transition};
use super::sac::{SacLearner, UpdateStats};
use crate::env::{Action, Env};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, StreamRng};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStep {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

/// Minimal episodic interface the trainer needs.
pub trait Task {
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, action: &[f64]) -> Result<TaskStep>;
}

impl Task for Env {
    fn obs_dim(&self) -> usize {
        self.obs_dim()
    }

    fn act_dim(&self) -> usize {
        2
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        Ok(Env::reset(self, seed)?.0.to_vec())
    }

    fn step(&mut self, action: &[f64]) -> Result<TaskStep> {
        let [steer, long] = action else {
            return Err(Error::Input(format!("expected two action values, got {}", action.len())));
        };
        let r = Env::step(self, Action::new(*steer, *long))?;
        Ok(TaskStep { obs: r.obs.0.to_vec(), reward: r.reward, terminated: r.terminated, truncated: r.truncated })
    }
}

/// One learning-curve row, written when an episode ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: u64,
    pub episode: u64,
    pub episode_return: f64,
    pub episode_length: u64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
}

/// Seed of training episode `n`.
pub fn episode_seed(seed: u64, n: u64) -> u64 {
    derive_seed(seed, &format!("train-episode-{n}"))
}

/// Resumable SAC training state: replay buffer, random streams and the
/// episode in progress. Random uniform actions are used until
/// `learning_starts`; afterwards one gradient update follows every step.
/// The task must not be stepped by anyone else between calls to [`Trainer::run`].
pub struct Trainer {
    seed: u64,
    buffer: ReplayBuffer,
    explore: StreamRng,
    policy_rng: StreamRng,
    replay_rng: StreamRng,
    update_rng: StreamRng,
    episode: u64,
    obs: Option<Vec<f64>>,
    ep_return: f64,
    ep_len: u64,
    last: UpdateStats,
}

impl Trainer {
    pub fn new<T: Task>(task: &T, learner: &SacLearner, seed: u64) -> Result<Self> {
        learner.check_dims(task.obs_dim(), task.act_dim())?;
        Ok(Self {
            seed,
            buffer: ReplayBuffer::new(learner.cfg.buffer_capacity, task.obs_dim(), task.act_dim())?,
            explore: stream(seed, "explore"),
            policy_rng: stream(seed, "policy"),
            replay_rng: stream(seed, "replay"),
            update_rng: stream(seed, "update"),
            episode: 0,
            obs: None,
            ep_return: 0.0,
            ep_len: 0,
            last: UpdateStats { alpha: learner.alpha(), ..Default::default() },
        })
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Runs `steps` environment steps; returns the rows of episodes that
    /// finished during the call.
    pub fn run<T: Task>(
        &mut self,
        task: &mut T,
        learner: &mut SacLearner,
        steps: u64,
        mut on_episode: impl FnMut(&CurveRow),
    ) -> Result<Vec<CurveRow>> {
        let cfg = learner.cfg.clone();
        let mut rows = Vec::new();
        for _ in 0..steps {
            let obs = match self.obs.take() {
                Some(o) => o,
                None => task.reset(episode_seed(self.seed, self.episode))?,
            };
            let action: Vec<f64> = if learner.env_steps < cfg.learning_starts {
                (0..task.act_dim()).map(|_| self.explore.random_range(-1.0..=1.0)).collect()
            } else {
                learner.act(&obs, ActMode::Stochastic, &mut self.policy_rng)?.0
            };
            let st = task.step(&action)?;
            learner.env_steps += 1;
            self.ep_return += st.reward;
            self.ep_len += 1;
            self.buffer.push(&Transition {
                obs,
                action,
                reward: st.reward,
                next_obs: st.obs.clone(),
                done: st.terminated,
            })?;

            if learner.env_steps >= cfg.learning_starts && self.buffer.len() >= cfg.batch_size {
                let batch = self.buffer.sample(cfg.batch_size, &mut self.replay_rng)?;
                self.last = learner.update(&batch, &mut self.update_rng)?;
            }

            if st.terminated || st.truncated {
                let row = CurveRow {
                    step: learner.env_steps,
                    episode: self.episode,
                    episode_return: self.ep_return,
                    episode_length: self.ep_len,
                    critic_loss: self.last.critic_loss,
                    actor_loss: self.last.actor_loss,
                    alpha: self.last.alpha,
                };
                on_episode(&row);
                rows.push(row);
                self.episode += 1;
                self.ep_return = 0.0;
                self.ep_len = 0;
            } else {
                self.obs = Some(st.obs);
            }
        }
        Ok(rows)
    }
}

/// Runs `steps` environment steps of SAC on `task` with a fresh [`Trainer`].
pub fn train<T: Task>(
    task: &mut T,
    learner: &mut SacLearner,
    steps: u64,
    seed: u64,
    on_episode: impl FnMut(&CurveRow),
) -> Result<Vec<CurveRow>> {
    Trainer::new(task, learner, seed)?.run(task, learner, steps, on_episode)
}

/// Undiscounted return of one deterministic-policy episode per seed.
pub fn evaluate<T: Task>(task: &mut T, learner: &SacLearner, seeds: &[u64]) -> Result<Vec<f64>> {
    let mut rng = stream(0, "evaluate");
    seeds
        .iter()
        .map(|&s| {
            let mut obs = task.reset(s)?;
            let mut ret = 0.0;
            loop {
                let (a, _) = learner.act(&obs, ActMode::Deterministic, &mut rng)?;
                let st = task.step(&a)?;
                ret += st.reward;
                if st.terminated || st.truncated {
                    return Ok(ret);
                }
                obs = st.obs;
            }
        })
        .collect()
}

/// Outcome of [`train_best`].
#[derive(Debug, Clone)]
pub struct BestRun {
    /// Snapshot with the highest validation score seen.
    pub best: SacLearner,
    pub best_score: f64,
    pub best_step: u64,
    /// `(env_steps, mean validation return)` after every evaluation.
    pub history: Vec<(u64, f64)>,
    pub curve: Vec<CurveRow>,
}

/// Trains for up to `steps`, scoring the deterministic policy on
/// `val_seeds` every `eval_every` steps and keeping the best snapshot.
/// Stops early once the score reaches `stop_at`.
#[allow(clippy::too_many_arguments)]
pub fn train_best<T: Task>(
    task: &mut T,
    val_task: &mut T,
    learner: &mut SacLearner,
    seed: u64,
    steps: u64,
    eval_every: u64,
    val_seeds: &[u64],
    stop_at: Option<f64>,
) -> Result<BestRun> {
    if eval_every == 0 || val_seeds.is_empty() {
        return Err(Error::Usage("train_best needs eval_every >= 1 and validation seeds".into()));
    }
    let mut trainer = Trainer::new(task, learner, seed)?;
    let mut out = BestRun {
        best: learner.clone(),
        best_score: f64::NEG_INFINITY,
        best_step: 0,
        history: Vec::new(),
        curve: Vec::new(),
    };
    let mut done = 0;
    while done < steps {
        let n = eval_every.min(steps - done);
        out.curve.extend(trainer.run(task, learner, n, |_| {})?);
        done += n;
        let scores = evaluate(val_task, learner, val_seeds)?;
        let score = scores.iter().sum::<f64>() / scores.len() as f64;
        out.history.push((learner.env_steps, score));
        if score > out.best_score {
            out.best_score = score;
            out.best_step = learner.env_steps;
            out.best = learner.clone();
        }
        if stop_at.is_some_and(|t| score >= t) {
            break;
        }
    }
    Ok(out)
}

pub fn write_curve_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::super::sac::SacConfig;
    use super::super::stopline::{StopLineConfig, StopLineTask};
    use super::*;

    #[test]
    fn short_run_is_deterministic() {
        let cfg = SacConfig { hidden: vec![8, 8], batch_size: 16, learning_starts: 64, buffer_capacity: 1000, ..Default::default() };
        let run = || {
            let mut task = StopLineTask::new(StopLineConfig::default());
            let mut l = SacLearner::new(3, 1, cfg.clone(), 4).unwrap();
            let rows = train(&mut task, &mut l, 300, 4, |_| {}).unwrap();
            (rows, l)
        };
        let (ra, la) = run();
        let (rb, lb) = run();
        assert_eq!(ra, rb);
        assert_eq!(la, lb);
        assert_eq!(la.env_steps, 300);
        assert_eq!(la.updates, 300 - 64 + 1);
        assert!(!ra.is_empty());
    }
}
