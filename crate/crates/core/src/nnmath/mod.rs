//! Dense neural-network primitives: flat parameter storage, a reverse-mode
//! tape over batched matrix operations, MLPs and Adam.

mod adam;
mod mlp;
mod params;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use mlp::{Activation, Mlp, MlpSpec};
pub use params::{LayoutRecord, ParamStore, TensorId};
pub use tape::{gaussian_logpdf, Tape, Var, HALF_LN_2PI};
