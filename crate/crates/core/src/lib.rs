//! Event-stream processing engine: a partitioned commit-log broker, file
//! and stream connectors, a dataflow operator engine, and the EQL query
//! language that drives it.

pub mod broker;
pub mod client;
pub mod codec;
pub mod commitlog;
pub mod connect;
pub mod engine;
pub mod eql;
pub mod model;
pub mod models;
pub mod wire;
