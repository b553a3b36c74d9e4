//! 3D floorplanning engine built around a continuous-action placement
//! pipeline: an actor proposes a point in the unit cube, an exact k-NN
//! projection maps it onto legal discrete anchors, and a critic picks the
//! candidate whose predicted return-to-go best matches the target.
//!
//! The engine trains entirely offline on randomly generated placement
//! trajectories and ships with an empirical checker for the Lipschitz
//! action-similarity error bound.

pub mod config;
pub mod env;
pub mod error;
pub mod model;
pub mod netlist;
pub mod pipeline;
pub mod render;
pub mod sldas;

pub use error::SgfError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, SgfError>;
