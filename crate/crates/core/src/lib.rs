//! Simulation, perception, tactile learning, statistics and explanation
//! pipeline behind the `touchstone` service.

pub mod config;
pub mod error;
pub mod imaging;
pub mod lang;
pub mod neuro;
pub mod par;
pub mod pipeline;
pub mod scene;
pub mod seeding;
pub mod stats;
pub mod tactile;
pub mod vision;

pub use error::{Error, Result};
