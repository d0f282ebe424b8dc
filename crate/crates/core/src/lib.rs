//! Best shift-invariant and Paley-Wiener approximation of finite signal
//! families, computed fiberwise on a sampled frequency domain.

pub mod cli;
pub mod dataset;
pub mod eigen;
pub mod error;
pub mod fiber;
pub mod format;
pub mod grid;
pub mod io;
pub mod group;
pub mod lattice;
pub mod omega;
pub mod reproduce;
pub mod scene;
pub mod solver;
pub mod suites;

pub use num_complex::Complex64 as C64;

pub use dataset::{project_pw, pw_mask, residual_energy, synthesize, PwMask, SpectralDataset};
pub use error::{Error, Result};
pub use grid::FrequencyGrid;
pub use group::{orbit_partition, GridAction, IntMatrix, OrbitPartition, PointGroup};
pub use lattice::Lattice;
pub use scene::{Primitive, Scene, Term};
