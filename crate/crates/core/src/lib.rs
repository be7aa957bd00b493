//! Projected stochastic gradient descent-ascent for convex-concave saddle
//! problems fed by Markov-dependent data, with exact primal-dual gap
//! evaluation, GTD/GTD2 policy evaluation, Markov chain construction and
//! mixing diagnostics, and evaluation of finite-sample bounds.

pub mod bounds;
pub mod error;
pub mod gap;
pub mod gtd;
pub mod markov;
pub mod saddle;
pub mod simulation;

pub use bounds::{
    best_over_eta, lemma1_bound, proposition1_constants, theorem1_bound, theorem2_order, BoundInputs, BoundTerms,
    GtdConstants, MixingProfile, OrderKind,
};
pub use error::{Error, Result};
pub use gap::{brute_force_gap, inner_max_y, inner_min_x, primal_dual_gap, BilinearQuadraticProblem, GapReport};
pub use gtd::{
    exact_instance_matrices, exact_value, sample_gradients, value_error, FeatureMap, GtdInstance, GtdMode, MdpSpec,
    PolicyMode, TransitionSample,
};
pub use markov::{
    metropolis_hastings, mixing_time, second_eigenvalue_modulus, tune_spectral_gap, FiniteChain, MixingReport,
    SampleStream, StartState,
};
pub use saddle::{
    log_spaced_checkpoints, run_sgd, sgd_step, AveragedTrajectory, BallDomain, SaddlePoint, ScheduleKind, StepSchedule,
    StochasticSaddleProblem,
};
pub use simulation::{SimulationInstance, SimulationSpec};
