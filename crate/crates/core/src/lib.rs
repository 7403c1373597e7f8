//! Simulation and experiment harness for Q-learning control of the sensing
//! rate on indoor solar energy-harvesting sensor nodes.

pub mod cli;
pub mod energy;
pub mod envsim;
pub mod qlearn;
pub mod rng;
pub mod traces;
pub mod experiments;
