//! Incremental relaying with imperfect one-bit feedback.
//!
//! The destination acknowledges each phase with a single bit that reaches the
//! source and relays through a binary symmetric channel. This crate computes
//! the resulting expected number of transmission phases `E(N)` (closed form,
//! explicit tree, matrix form), the ε-outage capacity that `E(N)` scales, and
//! a Monte Carlo simulator of the full protocol that serves as an independent
//! check of both.

pub mod capacity;
pub mod channel;
pub mod error;
pub mod matrix;
pub mod phases;
pub mod sim;

pub use capacity::{
    baf_capacity, capacity, df_capacity, log_term, outage_probability_empirical, CapacityProtocol,
    CapacityResult, Estimate, OutageTarget, SolverConfig,
};
pub use channel::{
    decode_profile, draw_realization, snr_from_db, source_outage_prob, ChannelParams,
    FadingRealization, ProfileConditioning, ProfileEstimate, Rate, Strategy,
};
pub use error::{Error, Result};
pub use matrix::{hadamard, Matrix};
pub use phases::{
    build_phase_tree, expected_phases, expected_phases_matrix, expected_phases_one_relay,
    expected_phases_tree, phase_derivative_sign, BscParam, DecodeProfile, FeedbackMatrix,
    PhaseTree, Slope,
};
pub use sim::{
    empirical_decode_profile, run, run_with_profile, FeedbackObservation, SimConfig, SimReport,
};
