//! Finite Markov chains: construction, spectral diagnostics, mixing times,
//! and sample streams.

pub mod chain;
pub mod mixing;
pub mod spectral;
pub mod stream;

pub use chain::{metropolis_hastings, window_proposal, FiniteChain};
pub use mixing::{mixing_time, mixing_time_capped, two_state_distance, two_state_tau, MixingReport};
pub use spectral::{
    reversible_extremes, second_eigenvalue_modulus, second_eigenvalue_modulus_dense, tune_spectral_gap, uniform,
    uniform_chain, TunedChain,
};
pub use stream::{derive_rng, ChainSampler, ReplayBuffer, SampleStream, StartState};
