//! Config-driven experiment runner for the safe-denoiser library.

pub mod config;
pub mod experiment;
pub mod output;
