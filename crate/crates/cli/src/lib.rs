//! Data pipeline and command implementations behind the `acar` binary.

pub mod cli;
pub mod climate;
pub mod commands;
pub mod io;
pub mod search;
