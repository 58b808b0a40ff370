//! Joint reconstruction of an image, per-shot rigid motion and polynomial coil
//! sensitivities from motion-corrupted multi-shot, multi-coil MRI data, by
//! Gibbs-style block updates inside annealed Langevin dynamics.
//!
//! The encoding operator lives in [`forward`] (on top of [`nufft`]), the
//! sampler in [`sampler`], image priors in [`prior`]. [`pipeline`] ties them
//! to run directories and is what the `jointmoco` binary calls.

pub mod config;
pub mod csm;
pub mod error;
pub mod fft;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod forward;
pub mod metrics;
pub mod nufft;
pub mod pipeline;
pub mod prior;
pub mod sampler;
pub mod selftest;
pub mod sim;

pub use error::{Error, Result};
pub use grid::{ComplexGrid, Measurements, RngSeed};
