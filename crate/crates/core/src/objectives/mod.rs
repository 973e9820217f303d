//! The loss family: γ-weighted cosine similarity, image- and language-goal
//! value objectives, goal/text contrastive loss, their sums, and the
//! sub-trajectory minibatch sampler.

mod batch;
mod losses;
mod similarity;

pub use batch::{sample_batch, LossConfig, OuterScale, SampledBatch, SlotSource};
pub use losses::{
    embed_batch, evaluate, infonce_loss, infonce_tape, liv_loss, multimodal_vip_loss,
    objective_tape, vip_i_loss, vip_i_tape, vip_l_loss, vip_l_tape, BatchEmbeddings, LossTerms,
    LossValues, Objective,
};
pub use similarity::{cosine, similarity};
