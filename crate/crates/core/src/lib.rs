//! Probabilistic multi-fidelity surrogate modeling with conditional
//! surjective normalizing flows.
//!
//! The crate is organized bottom-up:
//!
//! - [`nnmath`]: flat parameter store, a small reverse-mode tape, dense MLPs
//!   and the Adam optimizer.
//! - [`flows`]: masked affine couplings, fixed permutations and the funnel
//!   (dimension-reducing) layer, composed into a [`flows::FlowModel`] with an
//!   exact log-likelihood and an ancestral sampler.
//! - [`training`]: maximum-likelihood loops for low-fidelity pretraining,
//!   high-fidelity fine-tuning and the high-fidelity-only baseline.
//! - [`dynamics`]: a lumped-mass shear-chain simulator (Rayleigh damping,
//!   band-limited base excitation, Newmark integration) that produces paired
//!   low/high-fidelity datasets.
//! - [`evaluation`]: predictive summaries, accuracy metrics, coverage and the
//!   ablation runner.
//! - [`experiment`]: declarative experiment configuration and presets.
//! - [`pipeline`]: the file-backed generate, train and ablate steps.

pub mod dynamics;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod flows;
pub mod nnmath;
mod par;
pub mod pipeline;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
