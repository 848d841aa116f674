//! Source-routed multicast for multi-rooted Clos data centers.
//!
//! The controller side computes, for every multicast group, a compact
//! forwarding policy carried in the packet itself: per-layer lists of
//! *p-rules* (an output-port bitmap plus the logical switches it applies
//! to), per-switch *s-rules* (ordinary group-table entries) for what the
//! header cannot hold, and a *default p-rule* catch-all. The data-plane side
//! is a behavioral model of the switches: a single-pass header parser,
//! rule popping on layer transitions, and bitmap-driven replication.
//!
//! Modules follow the pipeline:
//!
//! * [`topology`] / [`placement`] — the fabric and who runs where
//! * [`workload`] — tenants, groups, churn streams
//! * [`encoding`] — multicast trees, clustering, header construction
//! * [`wire`] — the bit-exact header codec
//! * [`dataplane`] — per-switch forwarding and traffic accounting
//! * [`controller`] — group lifecycle, rule installs, update diffs
//! * [`experiment`] — scenario runners producing the evaluation metrics

pub mod bitmap;
pub mod controller;
pub mod dataplane;
pub mod encoding;
pub mod example;
pub mod experiment;
pub mod placement;
pub mod topology;
pub mod wire;
pub mod workload;

pub use bitmap::PortBitmap;
pub use topology::{LogicalTopology, SwitchRef, Topology, TopologySpec};
