//! Circuit-tutoring engine: netlists, circuit graphs, a GraphSAGE circuit
//! classifier, embedding-based similarity and retrieval, sketch
//! reconstruction, DC simulation and Socratic dialogue orchestration.

pub mod circuit_graph;
pub mod dataset;
pub mod embedding;
pub mod features_meta;
pub mod gnn;
pub mod knowledge_base;
pub mod netlist;
pub mod reconstruct;
pub mod scene;
pub mod simulate;
pub mod tutor;

pub use netlist::{parse_netlist, serialize_netlist, Component, ComponentKind, Netlist, NodeLabel};
