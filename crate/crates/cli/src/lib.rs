//! Batch experiment runner for overlay-code authentication.

pub mod app;
pub mod config;
pub mod experiment;
