//! Library surface of the experiment harness; the `dscm` binary is a thin
//! argument parser over these entry points.

pub mod commands;
pub mod config;
pub mod output;
pub mod pipeline;
pub mod sampling;
