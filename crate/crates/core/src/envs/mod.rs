//! Benchmark games: Cournot oligopoly, atomic splittable routing, planar
//! coordination navigation, plus ablation and identical-interest wrappers.

mod ablation;
mod cournot;
pub mod flow;
mod nav;
mod routing;

pub use ablation::{Ablation, AblationMode, TeamGame};
pub use cournot::{Cournot, CournotParams};
pub use nav::{Nav, NavParams};
pub use routing::{braess_network, random_layered_network, Edge, RoutingGame, RoutingNet, LOGIT_BOUND};
