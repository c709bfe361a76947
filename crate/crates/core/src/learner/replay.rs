//! FIFO ring buffer of transitions with uniform sampling.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub action: Array2<f64>,
    pub reward: Array1<f64>,
    pub next_obs: Array2<f64>,
    /// 1.0 for terminal transitions, else 0.0.
    pub done: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    pub fn from_transitions(ts: &[Transition]) -> Batch {
        let od = ts[0].obs.len();
        let ad = ts[0].action.len();
        let n = ts.len();
        Batch {
            obs: Array2::from_shape_fn((n, od), |(i, j)| ts[i].obs[j]),
            action: Array2::from_shape_fn((n, ad), |(i, j)| ts[i].action[j]),
            reward: Array1::from_shape_fn(n, |i| ts[i].reward),
            next_obs: Array2::from_shape_fn((n, od), |(i, j)| ts[i].next_obs[j]),
            done: Array1::from_shape_fn(n, |i| if ts[i].done { 1.0 } else { 0.0 }),
        }
    }
}

/// Storage grows lazily up to `capacity`; afterwards each push overwrites the
/// oldest slot.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    obs: Vec<f64>,
    action: Vec<f64>,
    reward: Vec<f64>,
    next_obs: Vec<f64>,
    done: Vec<bool>,
    size: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("sac.buffer_capacity", "must be >= 1"));
        }
        Ok(Self {
            capacity,
            obs_dim,
            act_dim,
            obs: Vec::new(),
            action: Vec::new(),
            reward: Vec::new(),
            next_obs: Vec::new(),
            done: Vec::new(),
            size: 0,
            cursor: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        if t.obs.len() != self.obs_dim || t.next_obs.len() != self.obs_dim || t.action.len() != self.act_dim {
            return Err(Error::Shape(format!(
                "transition dims obs {}/{} action {} do not match buffer ({}, {})",
                t.obs.len(),
                t.next_obs.len(),
                t.action.len(),
                self.obs_dim,
                self.act_dim
            )));
        }
        if self.size < self.capacity {
            self.obs.extend_from_slice(&t.obs);
            self.action.extend_from_slice(&t.action);
            self.reward.push(t.reward);
            self.next_obs.extend_from_slice(&t.next_obs);
            self.done.push(t.done);
            self.size += 1;
        } else {
            let i = self.cursor;
            let (od, ad) = (self.obs_dim, self.act_dim);
            self.obs[i * od..(i + 1) * od].copy_from_slice(&t.obs);
            self.action[i * ad..(i + 1) * ad].copy_from_slice(&t.action);
            self.reward[i] = t.reward;
            self.next_obs[i * od..(i + 1) * od].copy_from_slice(&t.next_obs);
            self.done[i] = t.done;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// Transition in storage slot `i`.
    pub fn get(&self, i: usize) -> Transition {
        let (od, ad) = (self.obs_dim, self.act_dim);
        Transition {
            obs: self.obs[i * od..(i + 1) * od].to_vec(),
            action: self.action[i * ad..(i + 1) * ad].to_vec(),
            reward: self.reward[i],
            next_obs: self.next_obs[i * od..(i + 1) * od].to_vec(),
            done: self.done[i],
        }
    }

    /// Stored transitions, oldest first.
    pub fn ordered(&self) -> Vec<Transition> {
        let start = if self.size < self.capacity { 0 } else { self.cursor };
        (0..self.size).map(|k| self.get((start + k) % self.capacity)).collect()
    }

    /// Storage slots drawn uniformly with replacement.
    pub fn sample_indices<R: Rng>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
        if batch_size == 0 || self.size < batch_size {
            return Err(Error::Usage(format!("cannot sample {batch_size} from a buffer holding {}", self.size)));
        }
        Ok((0..batch_size).map(|_| rng.random_range(0..self.size)).collect())
    }

    pub fn sample<R: Rng>(&self, batch_size: usize, rng: &mut R) -> Result<Batch> {
        let idx = self.sample_indices(batch_size, rng)?;
        let (od, ad) = (self.obs_dim, self.act_dim);
        let n = idx.len();
        Ok(Batch {
            obs: Array2::from_shape_fn((n, od), |(r, j)| self.obs[idx[r] * od + j]),
            action: Array2::from_shape_fn((n, ad), |(r, j)| self.action[idx[r] * ad + j]),
            reward: Array1::from_shape_fn(n, |r| self.reward[idx[r]]),
            next_obs: Array2::from_shape_fn((n, od), |(r, j)| self.next_obs[idx[r] * od + j]),
            done: Array1::from_shape_fn(n, |r| if self.done[idx[r]] { 1.0 } else { 0.0 }),
        })
    }
}
