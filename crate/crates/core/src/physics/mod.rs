//! Built-in data sources for validating the pipeline against systems with a
//! known transition.

pub mod ising;
pub mod tfim;
pub mod toy;

pub use ising::{ising_sweep, sample_temperature, IsingAlgorithm, IsingChain, IsingConfig, IsingLattice};
pub use tfim::{tfim_ground_state, tfim_sample, tfim_sweep, GroundState, TfimConfig};
pub use toy::{toy_dataset, toy_two_site, ToyKind};
