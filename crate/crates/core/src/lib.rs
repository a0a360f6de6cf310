//! Multi-domain lumped-parameter system models.
//!
//! A model is a linear graph of typed elements between nodes of one or more
//! physical domains (or a bond graph, converted on load). From it the crate
//! builds a Petri-net style incidence structure, derives a state-space model
//! via a normal tree, and solves the whole time history at once as a sparse
//! linear flow-feasibility problem. Reference integrators check the result.

pub mod bondgraph;
pub mod cli;
pub mod derive;
pub mod fixtures;
pub mod graph;
pub mod hfnmcf;
pub mod model;
pub mod net;
pub mod oracle;
pub mod pipeline;
pub mod tree;
pub mod validate;

pub use derive::{derive, derive_state_space, Derivation, DeriveError, OutputMap, StateSpace};
pub use hfnmcf::{assemble, solve, ConstraintSystem, SolveError, TimeGrid, Trajectories};
pub use model::{ModelError, PhysicalDomain, SystemModel};
pub use net::{build_esn, reduced_incidence, EngineeringSystemNet};
pub use pipeline::Error;
pub use tree::{build_normal_tree, NormalTree};
pub use validate::{validate_model, ValidationReport};
