//! Command-line pipeline and local project service.
//!
//! The `nave` binary chains the library stages — align, plan, trajectory,
//! formation, simulate — over versioned JSON documents, audits plans with
//! `validate`, and serves a project directory to the viewpoint editor with
//! `serve`. Exit codes are listed in [`error`].

pub mod cli;
pub mod docs;
pub mod error;
pub mod pipeline;
pub mod service;

pub use error::{CliError, ErrorClass};
