//! Differentiable 2D parallel-beam tomography with self-supervised inpainting
//! of missing sinogram angles.

pub mod array;
pub mod config;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod inpaint;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod projector;
pub mod selftest;

pub use array::{Image, Sinogram};
pub use error::{Error, Result};
pub use geometry::{
    make_full_scan, split_by_stride, AngleSet, AngleSplit, DetectorSpec, ScanGeometry,
};
pub use projector::{FilterKind, FilterSpec, Projector, Reconstructor};
