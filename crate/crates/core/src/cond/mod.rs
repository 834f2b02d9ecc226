//! Strain-conditioned latent codes: a small regressor from a strain triplet
//! to the decoder's latent space.

mod model;
mod strain;

pub use model::{cond_loss_and_grad, conditional_generate, pair_by_design, train_cond, CondConfig, CondModel, CondOutcome};
pub use strain::{read_strains, surrogate_strains, write_strains, StrainRecord, StrainTriplet};
