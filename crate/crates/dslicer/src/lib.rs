//! Flow-insensitive data-flow slicer for an object-oriented three-address mini-IR.
//!
//! Given a program and a set of source/sink API signatures, the slicer flattens
//! the program into an assignment graph (one node per local, return value,
//! class field, constant, allocation, or API endpoint; one edge per assignment
//! flow), marks the graph forward from sources and backward from sinks, and
//! returns the set of methods relevant to any source-to-sink flow. Every run
//! can emit a certificate — the graph plus the per-node marking — that an
//! independent checker verifies in a single linear pass. A reducer produces a
//! program stripped of irrelevant methods.

pub mod agraph;
pub mod certificate;
pub mod cli;
pub mod hierarchy;
pub mod ir;
pub mod slicer;
pub mod testkit;
pub mod transform;
