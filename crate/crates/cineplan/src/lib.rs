//! Runtime for cineplan jobs: LLM providers, render backends, the job
//! pipeline, rating sheets and configuration files.
//!
//! Planning logic lives in [`cineplan_core`]; this crate supplies the
//! filesystem, network, process and clock around it.

pub mod adapters;
pub mod backend;
pub mod pipeline;
pub mod provider;
pub mod templates;
pub mod config;
pub mod sheet;
pub mod cli;
