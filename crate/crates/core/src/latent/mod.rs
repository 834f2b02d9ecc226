//! Analysis of the learned latent space and unconditional generation from it.

mod pca;
mod stats;

pub use pca::{blend, interpolate, PcaBasis};
pub use stats::{column_stats, marginal_stats, pearson, ranks, spearman, DiagonalGaussian, MarginalStats};
