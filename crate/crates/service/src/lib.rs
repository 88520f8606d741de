//! Command line, HTTP service, job runner and LLM geometry client around
//! the `dem-core` solvers.

pub mod api;
pub mod cli;
pub mod jobs;
pub mod llm;
pub mod session;
