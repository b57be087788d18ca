//! Grasp annotation, depth repair, feature memory bank and grasp evaluation.
//!
//! The crate covers the geometric and numerical core of a real-to-sim grasp
//! detection pipeline:
//!
//! - [`geometry`] and [`cloud`]: grasp parameterization, view sampling,
//!   point clouds and neighborhood queries.
//! - [`annotate`]: dense object-level grasp annotation with force-closure
//!   scoring.
//! - [`scene`]: projection into scenes, collision culling, graspness and
//!   supervision targets.
//! - [`simplify`]: annotation simplification and compression statistics.
//! - [`depth`]: residual depth repair and a sensor-like noise model.
//! - [`enhance`]: structural descriptors, the momentum memory bank and
//!   cross-attention enhancement.
//! - [`evaluate`]: grasp judging, AP over a friction grid and a geometric
//!   grasp proposer.
//! - [`io`]: PLY, PGM, annotation containers, bank checkpoints and CSV/JSON
//!   exchange formats.

pub mod annotate;
pub mod depth;
pub mod enhance;
pub mod scene;
pub mod cloud;
pub mod config;
pub mod contact;
pub mod error;
pub mod evaluate;
pub mod geometry;
pub mod io;
pub mod mesh;
pub mod shapes;
pub mod simplify;

pub use error::{Error, Result};
