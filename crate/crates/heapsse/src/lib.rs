//! Std companion to `heapsse-core`: wire formats, the cloud server and its
//! HTTP listener, the key-holding client, the local search gateway and the
//! benchmark harness.

pub mod bench;
pub mod client;
pub mod gateway;
pub mod http;
pub mod server;
pub mod transport;
pub mod wire;
