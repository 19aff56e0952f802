//! Mobility-aware handover control for ultra-dense small-cell networks with
//! clustered asynchronous actor-critic learning.
//!
//! UEs are grouped by their movement patterns ([`clustering`]); every cluster
//! shares one [`params::ParameterServer`], and each UE in it runs an
//! [`a3c::Worker`] over its own [`env::HandoverEnv`]. The actor layers can be
//! warm-started by cloning the A3 event rule ([`slinit`]).

pub mod a3c;
pub mod baselines;
pub mod clustering;
pub mod controller;
pub mod env;
pub mod error;
pub mod harness;
pub mod mobility;
pub mod nn;
pub mod params;
pub mod radio;
pub mod rng;
pub mod slinit;
pub mod topology;

pub use a3c::{Worker, WorkerConfig};
pub use baselines::{A3Controller, A3Params, UcbController};
pub use clustering::{ClusterModel, KMeansOptions};
pub use controller::{HandoverController, PolicyController, SlotTotals};
pub use env::{HandoverEnv, RewardConfig, SnrNormalizer, StateVector};
pub use error::{Error, Result};
pub use mobility::{AreaSpec, Direction, MobilityFeature};
pub use nn::{ActorCriticWeights, NetDims, RecurrentState};
pub use params::{ParameterServer, RmsPropConfig};
pub use radio::RadioConfig;
pub use rng::SimRng;
pub use topology::{NetworkTopology, Point};
