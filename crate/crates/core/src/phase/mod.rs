//! Grids, phase-space points, quantum states and Hamiltonians.

pub mod grid;
pub mod hamiltonian;
pub mod io;
pub mod point;
pub mod quadrature;
pub mod state;

pub use grid::PhaseSpaceGrid;
pub use hamiltonian::{estimate_lipschitz, HamiltonianModel, LipschitzReport, ModelSpec, PhaseBox, Profile};
pub use point::PhasePoint;
pub use state::{coherent_state, mix_coherent, translate, Branch, QuantumState};
