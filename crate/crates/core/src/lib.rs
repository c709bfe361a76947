//! Affordance-space urban driving micro-simulator.
//!
//! The crate is layered bottom-up:
//!
//! - [`scenario`]: deterministic 2D world, routes, traffic and event detection
//! - [`affordance`]: ground-truth affordance extraction and observation scaling
//! - [`reward`]: the shaped per-step reward and one-time event table
//! - [`env`]: reset/step environment binding the three above
//! - [`learner`]: soft actor-critic with hand-written backprop
//! - [`eval`]: episode traces, driving metrics and the route benchmark
//! - [`bevgrid`]: ego-centred bird's-eye-view rasterization
//! - [`config`]: the JSON run configuration tying the modules together
//! - [`ablation`]: paired dense-versus-sparse reward comparison

pub mod ablation;
pub mod affordance;
pub mod bevgrid;
pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod learner;
pub mod reward;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
