//! Experiment orchestration for the GenSM mmWave MIMO toolkit: JSON-backed
//! experiment specs, deterministic sweep runners, and the run manifest the
//! `gensm` binary writes next to its CSV artifacts.

pub mod manifest;
pub mod runner;
pub mod spec;
