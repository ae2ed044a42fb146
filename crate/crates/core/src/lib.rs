//! Joint beam training, data transmission and handover for a mm-wave vehicular
//! link, modelled as a POMDP and solved with randomized point-based value
//! iteration (PERSEUS).
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the CLI and the simulator use.

pub mod belief;
pub mod blockage;
pub mod config;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod mobility;
pub mod model;
pub mod perseus;
pub mod policies;
pub mod scalar;
pub mod sim;

pub use config::{dbm_to_watt, load_config, watt_to_dbm, ScenarioConfig, Threshold};
pub use error::{Error, Result};
pub use model::action::{ActionCatalog, ActionClass, ActionSpec};
pub use model::state::{Observation, StateSpace, SystemState};
pub use scalar::Scalar;

pub type Matrix = linalg::Matrix<f64>;
pub type SectorTable = geometry::SectorTable<f64>;
pub type LinkBudget = geometry::LinkBudget<f64>;
pub type MobilityChain = mobility::MobilityChain<f64>;
pub type BlockageChain = blockage::BlockageChain<f64>;
pub type Kernel = model::kernel::Kernel<f64>;
pub type Model = model::Model<f64>;
pub type Belief = belief::Belief<f64>;
pub type AlphaVector = perseus::AlphaVector<f64>;
pub type AlphaVectorSet = perseus::AlphaVectorSet<f64>;
pub type BeliefSet = perseus::BeliefSet<f64>;
