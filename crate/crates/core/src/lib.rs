//! Model-based imitation of a demonstrator whose transition dynamics differ
//! from the imitator's.
//!
//! An iLQR model-predictive controller with an engineered-plus-learnable
//! terminal cost is trained adversarially against a recurrent trajectory
//! discriminator so that the state trajectories it produces on the imitator
//! become indistinguishable from demonstrations.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, configuration and
//! the command line live in the `ganmpc-lab` companion crate.
//!
//! Module map:
//! - [`nn`]: dense networks, the gated recurrent encoder, Adam.
//! - [`env`]: analytic pendulum and cartpole, shaped rewards, scripted experts.
//! - [`models`]: learned dynamics, behavior cloning, next-state prediction.
//! - [`mpc`]: iLQR, the learnable cost and the differentiable unrolled rollout.
//! - [`ganmpc`]: the adversarial training loop and the L2 baselines.
//! - [`eval`]: relative trajectory reward.
#![cfg_attr(not(any(test, feature = "std")), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod autodiff;
pub mod env;
pub mod error;
pub mod eval;
pub mod ganmpc;
pub mod linalg;
pub mod math;
pub mod models;
pub mod mpc;
pub mod nn;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{Dual, Scalar};
