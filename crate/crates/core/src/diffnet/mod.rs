//! A small differentiable-computation core: named parameters, a reverse-mode
//! tape, MLPs, Adam, central-difference checking and checkpoint files.

mod adam;
mod checkpoint;
mod grad;
mod mlp;
mod params;
mod tape;

pub use adam::{adam_step, AdamConfig, OptState};
pub use checkpoint::{load_checkpoint, load_checkpoint_for_vocab, save_checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use grad::{finite_diff_check, loss_gradient, loss_value, GradCheckReport};
pub use mlp::{mlp_depth, mlp_dims, mlp_forward, mlp_forward_batch, mlp_tape};
pub use params::{Gradients, ParamStore, Tensor};
pub use tape::{log_mean_exp, Tape, Var, NORM_FLOOR};
