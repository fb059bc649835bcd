//! Library surface of the `mmflow` command-line driver: scenario parsing,
//! artifact writers, and the command implementations, reusable from
//! integration tests.

pub mod artifacts;
pub mod commands;
pub mod scenario;
