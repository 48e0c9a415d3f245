//! MPC-guided imitation learning for a planar hybrid walker.
//!
//! A constrained SLQ optimal-control solver teaches a mixture-of-experts
//! policy by minimizing the control Hamiltonian. The crate provides the
//! walker model, the solver, the policy network with exact backpropagation,
//! the Hamiltonian loss family, the training loop, and a benchmark harness.

pub mod bench;
pub mod cli;
pub mod config;
pub mod losses;
pub mod model;
pub mod policy;
pub mod solver;
pub mod training;
