//! Continuous pain-intensity estimation from facial image sequences.
//!
//! The pipeline: faces are geometrically normalized to a fixed inter-ocular
//! distance, five regions of interest are described by histograms of
//! topographical features (gradient and Hessian eigen-data in scale space),
//! descriptors are reduced by a spectral-regression embedding learned on an
//! unlabeled source set, and pain scores are regressed by a two-level SVR
//! ensemble with optional temporal filtering. A leave-one-person-out harness
//! evaluates the whole chain; a synthetic face generator makes the pipeline
//! verifiable without any licensed dataset.

pub mod config;
pub mod data;
pub mod embed;
mod error;
pub mod eval;
pub mod features;
pub mod hot;
pub mod learn;
pub mod scalespace;
pub mod temporal;

pub use config::PipelineConfig;
pub use data::{Frame, Landmarks, RoiSpec, Sequence};
pub use error::{Error, Result};
pub use hot::{HoTDescriptor, HotParams};
pub use learn::{PainModel, SvrParams};
pub use scalespace::{ScaleParams, TopoField};
