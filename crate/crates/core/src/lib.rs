//! Single-qudit variational classifiers.
//!
//! Classical feature vectors are encoded into sequences of two-level rotations
//! on a `d`-level system. The rotation parameters are trained with implicit or
//! explicit metric-learning losses, and the trained circuits can be evaluated
//! either on ideal state vectors or under Lindblad decay and dephasing.
//!
//! Module map:
//!
//! - [`qudit`]: pure states, rotations, encodings and circuit construction.
//! - [`metric`]: metric-learning losses, training and classification.
//! - [`mos`]: genetic search for maximally orthogonal state sets.
//! - [`noise`]: master-equation integration and SPSA training under noise.
//! - [`data`]: dataset loaders, stratified splits, standardization and PCA.
//! - [`experiment`]: config-driven experiment runner used by the CLI.

pub mod data;
pub mod error;
pub mod experiment;
pub mod metric;
pub mod mos;
pub mod noise;
pub mod optim;
pub mod qudit;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
