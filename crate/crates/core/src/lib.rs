//! Implicit generative modelling of parametric turbine blades.
//!
//! Point clouds are labelled with truncated signed distances (convex-hull
//! sign, KD-tree magnitude), an auto-decoder learns a shared SDF network
//! plus one latent code per design, and the latent space is then analysed,
//! sampled and conditioned on strain targets. Meshes come out of marching
//! cubes on the decoded field.

pub mod blade;
pub mod cond;
pub mod error;
pub mod geom;
pub mod latent;
pub mod mesh;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod sdf;
pub mod seeds;

pub use error::{Error, Result};
