//! The shared SDF decoder, its optimizer, auto-decoder training and
//! test-time latent inference.

mod adam;
mod checkpoint;
mod decoder;
mod infer;
mod latents;
mod mlp;
mod train;

pub use adam::{Adam, StepSchedule};
pub use checkpoint::{load_checkpoint, manifest_path, save_checkpoint, CheckpointManifest, LoadedCheckpoint, CHECKPOINT_FORMAT};
pub use decoder::{assemble_inputs, DecoderConfig, DecoderModel, Mode};
pub use infer::{infer_latent, InferConfig, InferOutcome};
pub use latents::LatentTable;
pub use mlp::{Cache, EvalTrace, LayerSlots, Mlp, MlpSpec, BN_EPS, BN_MOMENTUM};
pub use train::{joint_loss, loss_and_grad, train, train_observed, Batch, LossParts, TrainConfig, TrainOutcome};
