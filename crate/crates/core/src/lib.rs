//! Core algorithms for individualizing HRTFs from a single ear image.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! 1. [`net`] regresses 55 pinna landmarks from a 224×224 ear image.
//! 2. [`anthro`] selects the landmarks that anchor seven pinna distances
//!    and measures them, normalized by a fixed 316 px diagonal.
//! 3. [`calibration`] converts normalized distances to centimetres with
//!    per-distance conversion factors or a reference length.
//! 4. [`matcher`] finds the database ear with the nearest 7-D vector.
//! 5. [`mesh`] renders 3D head meshes into ear images used to build the
//!    calibration corpus; [`dataset`] prepares and augments training data.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! the annotation service live in the companion `earmatch` crate.

#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod anthro;
pub mod calibration;
pub mod dataset;
mod error;
pub mod matcher;
pub mod mesh;
pub mod net;
pub mod raster;

pub use error::{Error, Result};
