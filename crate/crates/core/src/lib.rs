//! A numerical laboratory for the normalized Kähler-Ricci flow on
//! symmetry-reduced model surfaces.
//!
//! - [`picard`]: exact intersection theory, nef thresholds and contractions.
//! - [`ansatz`]: rotation-invariant forms and metrics on Hirzebruch surfaces.
//! - [`flow`]: implicit integration of the scalar parabolic Monge-Ampère flow.
//! - [`certificates`]: super/sub-solutions and a-priori bound monitors.
//! - [`singularity`]: terminal-time analysis at the contraction.
//! - [`cli`]: run configuration, persistence and report drivers.

pub mod ansatz;
pub mod certificates;
pub mod cli;
pub mod error;
pub mod flow;
pub mod picard;
mod serde_ext;
pub mod singularity;

pub use error::{LabError, Result};
