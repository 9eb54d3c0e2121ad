//! Motion-derived dense part supervision for human pose estimation.
//!
//! The pipeline takes consecutive grayscale frames and turns them into
//! coarse per-pixel part labels without manual annotation:
//!
//! 1. **flow** - dense two-frame optical flow (polynomial expansion,
//!    coarse-to-fine over a Gaussian pyramid) and the moving-pixel gate.
//! 2. **grouping** - mean-shift mode seeking over joint (x, y, u, v)
//!    features, then connected motion blobs.
//! 3. **supervise** - single-person rule, blob pruning against the person
//!    box, horizontal part bands and label rendering.
//!
//! Around it sit [`mine`] (hard-sample selection from error scores),
//! [`eval`] (part-centroid distance to keypoints), [`synth`] (synthetic
//! scenes with exact ground truth) and [`ingest`] (all file formats).

pub mod config;
mod error;
pub mod eval;
pub mod flow;
pub mod grouping;
pub mod ingest;
pub mod mine;
pub mod supervise;
pub mod synth;

pub use error::{Error, Result};
pub use flow::{FlowField, FlowParams};
pub use grouping::{Blob, MeanShiftParams};
pub use ingest::{BBox, Detection, Frame, Joint, Keypoints};
pub use supervise::{LabelConfig, PartLabelMap, Rejection, SampleRecord};
