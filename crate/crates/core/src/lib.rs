//! Goal-driven navigation in procedurally generated grid worlds: occupancy
//! mapping, Fast Marching planning, a PPO-trained long-term-goal policy, a
//! learned episode-ending predictor, and the evaluation harness.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod ending;
pub mod env;
pub mod error;
pub mod fmm;
pub mod grid;
pub mod goal_policy;
pub mod gridworld;
pub mod harness;
pub mod mapping;
pub mod nn;
pub mod parallel;

pub use error::{NavError, Result};
