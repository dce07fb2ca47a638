//! Collision-aware diffusion trajectory planning on a desk-scale simulated
//! workspace: diffusion arithmetic, a trainable noise predictor, training-free
//! collision guidance, receding-horizon controllers built on prior-seeded
//! iterative guided refinement, a cluttered-world simulator, and a seeded
//! experiment harness.

pub mod config;
pub mod datagen;
pub mod denoiser;
pub mod error;
pub mod experiments;
pub mod guidance;
pub mod planner;
pub mod plots;
pub mod rng;
pub mod schedule;
pub mod stats;
pub mod trajectory;
pub mod world;

pub use error::{Error, Result};
