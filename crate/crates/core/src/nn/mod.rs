//! Minimal numeric machinery shared by the encoders, bridge and decoder.

pub mod attention;
pub mod gradcheck;
pub mod graph;
pub mod params;

pub use gradcheck::{check_gradients, GradCheckOptions, GroupError};
pub use graph::{Graph, Gradients, NodeId};
pub use params::{LoraAdapter, Param, ParamGroup, ParamStore};
