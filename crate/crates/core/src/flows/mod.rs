//! Conditional normalizing-flow layers and the composite surjective flow.

mod coupling;
mod funnel;
mod model;
mod permutation;

pub use coupling::CouplingLayer;
pub use funnel::{FunnelLayer, DEFAULT_LOG_STD_BOUNDS};
pub use model::{build_default_model, DefaultLayout, FlowArchitecture, FlowModel, Layer, LayerSpec};
pub use permutation::PermutationLayer;
