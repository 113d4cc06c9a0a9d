//! Command line and HTTP service over the plan knowledge framework.
//!
//! [`cli::run`] implements the `dmkf` binary; [`server::router`] builds the
//! JSON API used by the mapping screen. Both go through [`workspace`].

pub mod cli;
pub mod engine;
pub mod server;
pub mod workspace;
