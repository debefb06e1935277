//! Quantum propagators and classical Hamiltonian flows.

pub mod classical;
pub mod quantum;

pub use classical::{flow_lipschitz, flow_point, pushforward, tangent_jacobian, trajectory, ClassicalFlow, FlowMethod};
pub use quantum::{default_dt, propagate_quantum, step_count, Method, QuantumPropagator};
