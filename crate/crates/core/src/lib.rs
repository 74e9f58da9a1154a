//! Synthetic radio-magnetotelluric (RMT) inversion laboratory.
//!
//! The pipeline: draw resistivity models ([`grf`], [`blocky`]) on a graded
//! [`mesh`], simulate TE/TM responses with the 2D finite-volume solver in
//! [`physics`], optionally mask and recover data with [`cs`], and invert the
//! responses with the U-Net in [`nn`]. [`metrics`] scores predictions and
//! [`harness`] ties everything to files and experiments.

pub mod blocky;
pub mod cs;
pub mod error;
pub mod grf;
pub mod harness;
pub mod mesh;
pub mod metrics;
pub mod nn;
pub mod physics;

pub use error::{Error, Result};
pub use mesh::{build_mesh, embed_core, Mesh, MeshConfig, ResistivityModel};
pub use physics::{forward_response, FrequencySet, Mode, RmtResponse};
