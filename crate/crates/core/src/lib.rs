//! Confocal non-line-of-sight reconstruction of directional albedo.

pub mod error;
pub mod grid;
pub mod images;
pub mod io;
pub mod lct;
pub mod metrics;
pub mod scene;
pub mod selftest;
pub mod solvers;
pub mod ss;
pub mod volume;

pub use error::{Error, Result};
pub use grid::ScanGrid;
pub use volume::{DirectionalAlbedoVolume, TransientVolume};
