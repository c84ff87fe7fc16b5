//! Object-detection evaluation and real-time benchmarking toolkit.
//!
//! The crate bundles the pieces needed to measure a detector's speed/accuracy
//! trade-off and to exercise common one-shot detector math at desk scale:
//!
//! - [`boxes`]: box geometry, IoU, CIoU loss with analytic gradient, greedy NMS,
//!   format conversion and letterbox inversion.
//! - [`metrics`]: COCO-style matching, precision/recall curves, 101-point AP and
//!   mAP over IoU thresholds, classes and object-size strata.
//! - [`augment`]: seedable letterbox, affine, flip, HSV, mosaic and mixup
//!   augmentations that keep labels consistent with pixels.
//! - [`nnops`]: a small dense tensor, convolution, squeeze-and-excitation,
//!   YOLO head decoding, classification losses, freeze planning and a tiny
//!   reference detector.
//! - [`costmodel`]: parameter, MAC/FLOP and storage accounting over a layer graph.
//! - [`schedule`]: one-cycle learning-rate schedule and training recipe documents.
//! - [`harness`]: detector adapters, batch-1 latency benchmarking, evaluation and
//!   trade-off reports.
//! - [`cli`]: COCO ingestion, file formats and the `detbench` command dispatcher.
//!
//! Runnable walkthroughs for each area live in the crate's `examples/` directory.

pub mod augment;
pub mod boxes;
pub mod cli;
pub mod costmodel;
mod error;
pub mod harness;
pub mod kv;
pub mod metrics;
pub mod nnops;
pub mod schedule;

pub use error::{Error, Result};
