//! Time-slotted fog computing simulator.
//!
//! A fog node groups heterogeneous devices; each device hosts containers that
//! hold a share of the device's processing, memory, storage and networking
//! resources. Devices describe their resources in XML documents that a
//! supervising entity consults before admitting and dispatching requests.
//!
//! - [`model`]: topology, allocation and residual-load arithmetic.
//! - [`represent`]: resource documents, XML codec, host probing, registry.
//! - [`workload`]: seeded Poisson arrivals per container.
//! - [`policy`]: admission, delay, service scheduling and dispatch.
//! - [`sim`]: the slot engine, metrics, runs and paired comparisons.
//! - [`config`]: the experiment config document.

pub mod config;
pub mod model;
pub mod policy;
pub mod represent;
pub mod rng;
pub mod sim;
pub mod workload;

pub use config::ExperimentConfig;
pub use model::{build_topology, validate_topology, FogTopology, ResourceKind, TopologyConfig};
pub use policy::PolicyConfig;
pub use represent::{Registry, ResourceDocument};
