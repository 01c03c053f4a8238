//! Potential estimation from reward data: the score-weighted derivative
//! residual, its stochastic minimization, reward-model fitting, consensus
//! (gradient-tracking) estimation, and the nascent-delta probe.

mod consensus;
mod model;
mod nascent;
mod residual;

pub use consensus::{
    check_doubly_stochastic, consensus_round, estimate_potential_consensus, metropolis_weights, ConsensusConfig,
    ConsensusEstimate, ConsensusState, GradOracle, Topology,
};
pub use model::{fit_reward_models, Coefficient, PotentialModel, RewardFitConfig, RewardModel, Surrogate, SurrogateSpec};
pub use nascent::{nascent_bound_probe, NascentProbe, NascentRow};
pub use residual::{
    estimate_potential, objective, residual_gi, sample_probes, ActionDraw, Estimate, EstimationReport, GradientSource,
    Probe, ResidualConfig, ResidualMode,
};
