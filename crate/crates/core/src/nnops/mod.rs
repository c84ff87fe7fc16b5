//! Dense tensor operations and detector-side neural math.
//!
//! Everything here runs on the CPU in `f32` (losses use `f64`) and is pure:
//! identical inputs give bit-identical outputs.

mod decode;
mod freeze;
mod loss;
mod ops;
mod refnet;
mod se;
mod tensor;
pub mod weights;

pub use decode::{yolo_decode, Anchor};
pub use freeze::{freeze_plan, FreezePlan, FreezeSpec};
pub use loss::{binary_cross_entropy, cross_entropy, focal_loss, LossValue};
pub(crate) use ops::conv_out_dim;
pub use ops::{activation, conv2d, global_avg_pool, linear, Activation, Conv2d, Linear};
pub use refnet::{refnet_forward, ForwardTrace, RefNet, RefNetSpec};
pub use se::{se_block, SeBlock};
pub use tensor::Tensor;
