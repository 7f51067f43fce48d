//! Small feed-forward networks with hand-written reverse mode, Adam, input
//! embeddings and a binary checkpoint format.

mod adam;
mod checkpoint;
mod embed;
mod mlp;
mod model;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{
    config_hash, load_checkpoint, save_checkpoint, sidecar_path, CheckpointMeta, FORMAT_VERSION, MAGIC,
};
pub use embed::{Embedding, StateEmbedding};
pub use mlp::{param_count, Activation, ForwardCache, Mlp};
pub use model::ScoreNet;
