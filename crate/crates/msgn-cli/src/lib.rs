//! Library side of the `msgn` command line tool.
//!
//! The binary is a thin argument parser over [`commands`]; everything it
//! does is reachable from here so integration tests can run commands in
//! process and inspect the files they write.
//!
//! - [`config`]: flat `key = value` run configuration with line-numbered
//!   diagnostics and stray-key rejection.
//! - [`csvio`]: bit-stable CSV writing (17 significant digits).
//! - [`manifest`]: the `manifest.json` run record; its `config_echo` feeds
//!   back into the same command to reproduce outputs byte for byte.
//! - [`commands`]: the four subcommands, each returning the process exit
//!   code.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod manifest;
