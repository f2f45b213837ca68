//! Command line and HTTP front ends for the flowforge engine.

pub mod commands;
pub mod config;
pub mod service;
