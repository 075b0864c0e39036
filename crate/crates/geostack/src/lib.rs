//! Persistence, reports and the command-line front end for
//! [`geostack_core`].

pub mod cli;
pub mod store;

pub use geostack_core as core;
