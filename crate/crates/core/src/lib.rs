//! Composition prediction for naphtha from distillation curves, guided by a
//! simulated Watson characterization factor.

pub mod data;
pub mod property;
pub mod sim;
pub mod nn;
pub mod model;
pub mod eval;
pub mod train;
pub mod cli;
