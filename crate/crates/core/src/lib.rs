//! Numerical laboratory for the low-lying critical states of the cluster
//! Ising chain: Pauli-string algebra, variational circuit construction and
//! simulation, MPS/DMRG oracles, boundary g-function extraction,
//! entanglement Hamiltonian tomography, and zero-noise extrapolation.

pub mod circuit;
pub mod ed;
pub mod linalg;
pub mod model;
pub mod pauli;
pub mod sim;
