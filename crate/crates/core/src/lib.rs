pub mod cascade;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod finger_detect;
pub mod forest;
pub mod geometry;
pub mod pipeline;
pub mod voting;

pub use error::{Error, Result};
