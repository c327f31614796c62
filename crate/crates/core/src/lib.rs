//! Random matrix lifts: construction, norm estimation, moment comparison and
//! the associated norm bounds.

pub mod bounds;
pub mod distribution;
pub mod harness;
pub mod lift;
pub mod model;
pub mod moments;
pub mod rng;
pub mod shapes;
pub mod spectral;
pub mod stats;

pub use distribution::{DiscreteLaw, DistError, LiftDistribution};
pub use lift::{build_graph_lift, build_lift, GraphLift, LiftError, LiftedBlockMatrix};
pub use model::{BaseMatrix, GraphSpec, ModelError, SpreadParams};
pub use rng::RngState;
