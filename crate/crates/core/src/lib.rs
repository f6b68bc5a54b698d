//! Fractional-pel interpolation for block motion compensation.
//!
//! Two interpolators are provided for the luma plane:
//!
//! * [`hevc`]: the fixed DCT-based interpolation filters of HEVC (8-tap half,
//!   7-tap quarter), bit-exact integer arithmetic.
//! * [`gvtcnn`]: a small convolutional network with a shared feature trunk and
//!   one lightweight head per sub-pixel position, trained from scratch on CPU.
//!
//! Around them sit a numeric foundation ([`tensor`]), a training-data
//! synthesis pipeline ([`datagen`]) and a block motion-compensation simulator
//! ([`mcsim`]) that compares the two under a per-block selection rule.

pub mod datagen;
pub mod error;
pub mod gvtcnn;
pub mod hevc;
pub mod mcsim;
pub mod metrics;
pub mod plane;
pub mod position;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use gvtcnn::{GvtcnnConfig, GvtcnnModel, TrainConfig};
pub use plane::Plane;
pub use position::{PositionId, Variant};
pub use tensor::{ConvLayer, PaddingMode, Scalar, Tensor};
