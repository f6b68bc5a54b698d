//! The group variational transformation network: a shared feature trunk
//! extracted once from the integer-position sample, then one 3×3 head per
//! sub-pixel position producing a residual that is added back to the input.
//!
//! ```text
//! x ─ conv 1→48 ─ PReLU ─┬─ conv 48→10 ─ PReLU ─ (conv 10→10 ─ PReLU)×7 ─ conv 10→48 ─┐
//!                        └───────────────────────────── + ─────────────────────────────┘
//!                                                       │
//!                                                     PReLU  (shared feature map)
//!                                                       │
//!                             head_j: conv 48→1, out_j = x + head_j
//! ```

mod config;
mod infer;
mod model;
mod train;
mod weights;

pub use config::{nearest_qp_tag, GvtcnnConfig, TrainConfig, QP_TAGS};
pub use infer::{infer_plane, infer_positions, DEFAULT_TILE};
pub use model::{build_model, Activations, GvtcnnModel, ModelGrads, INITIAL_SLOPE};
pub use train::{batch_tensors, train, train_with_progress, LossCurve, LossRecord, Trainer};
pub use weights::{decode_weights, encode_weights, load_weights, load_weights_expecting, save_weights, FORMAT_VERSION};

pub use crate::position::Variant;
