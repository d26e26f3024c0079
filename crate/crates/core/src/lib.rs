//! Mask refinement over a promptable segmenter: coarse label maps in,
//! boundary-accurate label maps out.
//!
//! The pipeline refines each object of a coarse map locally
//! ([`lro`]), then relabels whole-image proposals by majority vote
//! ([`gro`]). [`metrics`] scores results, [`synth`] builds seeded fixtures
//! and [`segmenter`] defines the backend contract, a deterministic mock and
//! the framed bridge protocol.

pub mod error;
pub mod gro;
pub mod lro;
pub mod maskops;
pub mod metrics;
pub mod pipeline;
pub mod reference;
pub mod segmenter;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use pipeline::{refine_image, ImageOutcome, ObjectOutcome, ObjectStatus, PipelineOptions};
pub use segmenter::{DecodeRequest, MockOracle, OracleScene, SegmenterBackend};
pub use types::*;
