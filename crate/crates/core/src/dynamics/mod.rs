//! Lumped-mass shear-chain simulator producing paired low/high-fidelity
//! response datasets.

mod dataset;
mod excitation;
mod newmark;
mod structure;

pub use dataset::{
    generate_pairs, pearson, sample_parameters, sample_parameters_within, simulate_response, validate_fidelities,
    Dataset, DatasetManifest, Fidelity, FidelityConfig, PairSimulator, Perturbation, SignalConfig, PRIOR_BOUND,
};
pub use excitation::{butterworth_lowpass, generate_excitation, step_ratio, steps_for, ExcitationSpec};
pub use newmark::{decimate, newmark_solve, LoadHistory, NewmarkParams, Trajectory};
pub use structure::{
    assemble_matrices, natural_frequencies, rayleigh_coefficients, rayleigh_damping, StructuralConfig,
};
