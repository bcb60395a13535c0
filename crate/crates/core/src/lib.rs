//! Transient stability prediction pipeline: grid model and fault
//! simulation, scenario datasets, cascaded feedforward networks and
//! conjugate-gradient training.

pub mod cfnn;
pub mod error;
pub mod grid_model;
pub mod scenario_data;
pub mod trainer;
pub mod transim;

pub use error::{Error, Result};
