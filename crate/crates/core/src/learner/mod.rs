//! Soft actor-critic learner built on small dense networks with hand-written
//! gradients.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod mlp;
pub mod policy;
pub mod replay;
pub mod sac;
pub mod stopline;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use mlp::Mlp;
pub use policy::{policy_act, ActMode};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use sac::{SacConfig, SacLearner, UpdateStats};
pub use train::{evaluate, train, train_best, BestRun, CurveRow, Task, TaskStep, Trainer};
