//! Library side of the `slra` binary: plan parsing, the benchmark grid
//! runner, and the subcommand implementations. Integration tests drive the
//! sweep through these entry points without spawning processes.

pub mod bench;
pub mod commands;
pub mod plan;
