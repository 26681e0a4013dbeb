//! Library surface of the command line front end: the JSON workspace
//! schema and loader, the deterministic report type, and the command
//! implementations. The `covanish` binary in `main.rs` is a thin shell
//! around these so integration tests can drive every layer directly.

pub mod commands;
pub mod report;
pub mod schema;
