//! Solvers for the dual team game: fitted Q iteration, actor-critic with
//! decentralized actors, best-response training and an independent baseline.

mod actor;
mod config;
mod critic;
mod spotq;
mod train;

pub use actor::{actor_gradient, actor_update, sigma_schedule, ActorSet};
pub use config::{RewardSource, TrainConfig};
pub use critic::{critic_fit, sampled_max, spotq_target, CriticModel, MaxProxy};
pub use spotq::{train_spotq, train_spotq_continuous, ContinuousSpotq, SampledGreedy, SpotqConfig, SpotqResult};
pub use train::{
    train_best_response, train_independent, train_spotac, BestResponseConfig, BestResponseResult, TracePoint,
    TrainOutcome,
};
pub(crate) use train::{agent_returns, mean_and_se};
