//! File formats, pipeline stages and the annotation service around
//! `earmatch-core`.

pub mod annotation;
pub mod commands;
pub mod config;
pub mod corpus;
mod error;
pub mod fsutil;
pub mod hrtf;
pub mod imageio;
pub mod landmarks;
pub mod model_file;
pub mod par;
pub mod render;
pub mod report;
pub mod server;
pub mod stl;
pub mod tables;

pub use error::{Error, Result, StageExt};
