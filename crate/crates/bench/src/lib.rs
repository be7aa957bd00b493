//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use nalgebra::DVector;
use saddlemix_core::markov::{metropolis_hastings, uniform, window_proposal, ChainSampler, FiniteChain};
use saddlemix_core::{SimulationInstance, SimulationSpec};

/// Simulation problem over `states` uniformly weighted states.
pub fn simulation(states: usize) -> SimulationInstance {
    let spec = SimulationSpec { states, ..SimulationSpec::default() };
    SimulationInstance::generate(spec, &uniform(states)).expect("valid spec")
}

/// Metropolis-Hastings window walk with uniform target.
pub fn window_chain(states: usize, window: usize, laziness: f64) -> FiniteChain {
    let pi: DVector<f64> = uniform(states);
    let q = window_proposal(states, window).expect("valid window");
    metropolis_hastings(&pi, &q, laziness).expect("valid chain")
}

pub fn sampler(chain: &FiniteChain) -> Arc<ChainSampler> {
    Arc::new(ChainSampler::new(chain))
}
