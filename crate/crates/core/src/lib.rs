//! Reproducible black-box optimization benchmarking over a framed JSON
//! protocol.
//!
//! A [`coordinator::Coordinator`] exposes one port to clients and routes
//! evaluation requests to worker processes, each hosting one or more
//! benchmarks through [`worker::serve`]. The [`registry`] maps benchmark
//! names to worker ports; [`bench`] provides the built-in continuous and
//! pseudo-boolean objectives; [`client::Client`] is the blocking client.

pub mod bench;
pub mod client;
pub mod coordinator;
pub mod registry;
pub mod wire;
pub mod worker;

pub use registry::Direction;
