//! Simulation of Josephson phase qubits coupled to a piezoelectric
//! nanomechanical resonator.

pub mod acceptance;
pub mod composite;
pub mod dynamics;
pub mod junction;
pub mod par;
pub mod protocols;
pub mod resonator;
pub mod rwa;
pub mod units;
